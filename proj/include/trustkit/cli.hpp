#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "trustkit/rng.hpp"

namespace trustkit::cli {

using nlohmann::json;

/// Experiment kinds accepted by `run`; `sweep` wraps one of them.
inline const std::vector<std::string> kKinds{"train", "calibrate", "attack", "attribute", "influence", "uncertainty"};

/// JSON Schema (draft-07 subset) for experiment configs, also shipped as
/// docs/config.schema.json.
const std::string& config_schema_text();
const json& config_schema();

/// Validates `instance` against a schema using type, enum, const, minimum,
/// maximum, exclusiveMinimum, exclusiveMaximum, minItems, maxItems, items,
/// required, properties, additionalProperties, allOf and if/then. Returns one
/// "<json pointer>: <message>" line per violation.
std::vector<std::string> validate(const json& instance, const json& schema);

/// Throws ConfigError listing every violation of the config schema.
void validate_config(const json& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
/// "fnv1a64:<16 hex digits>" of the canonical (sorted-key) dump.
std::string config_hash(const json& config);

struct RunOptions {
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

struct RunResult {
  json metrics;
  /// Files written, relative to the output directory (manifest excluded).
  std::vector<std::string> artifacts;
  std::filesystem::path manifest;
};

/// Validates, runs the experiment named by config["kind"], and writes
/// metrics.json, the kind's tables and plots, and manifest.json to opts.out.
RunResult run_experiment(json config, const RunOptions& opts);

/// One draw from a declared range: uniform, log_uniform, int_uniform or choice.
json sample_range(const json& range, Rng& rng);
/// Trial configs: base config with each dotted range path overwritten by a
/// draw from Rng(seed).split(trial), ranges visited in key order.
std::vector<json> sweep_configs(const json& sweep_config, std::uint64_t seed);

/// Runs every trial (in parallel over opts.jobs workers) into
/// out/trial_NNN and writes leaderboard.csv sorted by the objective.
RunResult run_sweep(json sweep_config, const RunOptions& opts);

/// Command-line entry point. Exit codes: 0 success, 1 runtime failure,
/// 2 usage or config error.
int main_entry(int argc, char** argv);

}  // namespace trustkit::cli
