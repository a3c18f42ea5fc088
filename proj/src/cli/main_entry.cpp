#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "trustkit/cli.hpp"
#include "trustkit/errors.hpp"
#include "trustkit/log.hpp"

namespace trustkit::cli {

namespace {

json read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"trustkit: trustworthy-ML experiments on small models"};
  app.set_version_flag("--version", std::string("trustkit ") + TRUSTKIT_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  std::vector<std::string> commands = kKinds;
  commands.push_back("sweep");
  commands.push_back("run");
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name, name == "run" ? "run the experiment named by the config's kind"
                                                       : name + " experiment");
    sub->add_option("-c,--config", config_path, "JSON config file")->required();
    sub->add_option("-o,--out", out, "output directory (overrides the config's out)");
    sub->add_option("-s,--seed", seed, "master seed (overrides the config's seed)");
    sub->add_option("-j,--jobs", jobs, "parallel sweep trials")->check(CLI::PositiveNumber);
  }
  app.add_subcommand("schema", "print the config JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "schema") {
    std::cout << config_schema_text();
    return 0;
  }
  try {
    json cfg = read_config(config_path);
    if (cmd != "run" && cfg.is_object() && cfg.contains("kind") && cfg["kind"] != cmd)
      throw ConfigError("/kind: config kind " + cfg["kind"].dump() + " does not match subcommand \"" + cmd + "\"");
    RunOptions opts;
    opts.out = out;
    opts.seed = seed;
    opts.jobs = jobs;
    auto r = run_experiment(std::move(cfg), opts);
    std::cout << r.metrics.dump(2) << '\n';
    log_info("manifest written to " + r.manifest.string());
    return 0;
  } catch (const ParseError& e) {
    log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
}

}  // namespace trustkit::cli
