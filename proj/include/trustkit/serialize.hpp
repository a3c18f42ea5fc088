#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "trustkit/mlp.hpp"

namespace trustkit {

/// Architecture manifest (layer dims, activations, dropout, heads).
nlohmann::json model_manifest(const MlpModel& model);
MlpModel model_from_manifest(const nlohmann::json& manifest);

/// Writes `<stem>.json` (manifest plus blob file name) and `<stem>.bin`
/// (parameters as little-endian IEEE-754 doubles). Returns both paths.
std::vector<std::filesystem::path> save_model(const MlpModel& model, const std::filesystem::path& stem);
MlpModel load_model(const std::filesystem::path& manifest_path);

}  // namespace trustkit
