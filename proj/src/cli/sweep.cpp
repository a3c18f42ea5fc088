#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "trustkit/cli.hpp"
#include "trustkit/errors.hpp"
#include "trustkit/log.hpp"

namespace fs = std::filesystem;

namespace trustkit::cli {

std::filesystem::path write_manifest(const fs::path& out, const json& cfg, const std::vector<std::string>& artifacts);

namespace {

json::json_pointer to_pointer(const std::string& path) {
  if (!path.empty() && path[0] == '/') return json::json_pointer(path);
  std::string p;
  std::stringstream ss(path);
  for (std::string tok; std::getline(ss, tok, '.');) p += "/" + tok;
  return json::json_pointer(p);
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string q = "\"";
  for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

struct Trial {
  std::size_t index = 0;
  json config;
  json params;
  std::optional<double> objective;
  std::string status = "ok";
  std::vector<std::string> files;
};

}  // namespace

json sample_range(const json& range, Rng& rng) {
  const std::string dist = range.at("dist").get<std::string>();
  if (dist == "choice") {
    const json& v = range.at("values");
    if (v.empty()) throw ConfigError("choice range needs at least one value");
    return v[rng.below(v.size())];
  }
  if (!range.contains("low") || !range.contains("high")) throw ConfigError(dist + " range needs low and high");
  const double lo = range["low"].get<double>(), hi = range["high"].get<double>();
  if (hi < lo) throw ConfigError(dist + " range has high < low");
  if (dist == "uniform") return lo + (hi - lo) * rng.uniform();
  if (dist == "log_uniform") {
    if (!(lo > 0)) throw ConfigError("log_uniform range needs low > 0");
    return std::min(hi, std::max(lo, std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform())));
  }
  const auto a = static_cast<long long>(std::ceil(lo)), b = static_cast<long long>(std::floor(hi));
  if (b < a) throw ConfigError("int_uniform range contains no integer");
  return a + static_cast<long long>(rng.below(static_cast<std::uint64_t>(b - a + 1)));
}

std::vector<json> sweep_configs(const json& cfg, std::uint64_t seed) {
  const json& sw = cfg.at("sweep");
  const auto trials = sw.at("trials").get<std::size_t>();
  if (trials == 0) throw DomainError("sweep needs at least one trial");
  json base = cfg;
  base.erase("sweep");
  base.erase("out");
  base["kind"] = sw.at("kind");
  base["seed"] = seed;
  const Rng root(seed);
  std::vector<json> out;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = root.split(t);
    json c = base;
    // json objects iterate in sorted key order.
    for (auto it = sw.at("ranges").begin(); it != sw.at("ranges").end(); ++it) c[to_pointer(it.key())] = sample_range(it.value(), rng);
    out.push_back(std::move(c));
  }
  return out;
}

RunResult run_sweep(json cfg, const RunOptions& opts) {
  if (opts.seed) cfg["seed"] = *opts.seed;
  if (!cfg.contains("seed")) cfg["seed"] = 0;
  validate_config(cfg);
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  const fs::path out = !opts.out.empty() ? opts.out : fs::path(cfg.value("out", std::string("runs/sweep")));
  const auto configs = sweep_configs(cfg, seed);
  const json& objective = cfg["sweep"]["objective"];
  const auto metric = to_pointer(objective.at("metric").get<std::string>());
  const bool maximize = objective.value("mode", std::string("min")) == "max";
  fs::create_directories(out);

  std::vector<Trial> trials(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < trials.size();) {
      Trial& t = trials[i];
      t.index = i;
      t.config = configs[i];
      for (auto it = cfg["sweep"]["ranges"].begin(); it != cfg["sweep"]["ranges"].end(); ++it)
        t.params[it.key()] = t.config[to_pointer(it.key())];
      char name[32];
      std::snprintf(name, sizeof name, "trial_%03zu", i);
      try {
        RunOptions o;
        o.out = out / name;
        auto r = run_experiment(t.config, o);
        if (r.metrics.contains(metric) && r.metrics[metric].is_number())
          t.objective = r.metrics[metric].get<double>();
        else
          t.status = "missing_metric";
        for (const auto& f : r.artifacts) t.files.push_back(std::string(name) + "/" + f);
        t.files.push_back(std::string(name) + "/manifest.json");
      } catch (const std::exception& e) {
        t.status = "failed";
        log_warn(std::string(name) + " failed: " + e.what());
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, trials.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<std::size_t> order(trials.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = trials[a].objective;
    const auto& y = trials[b].objective;
    if (!x || !y) return x.has_value() && !y.has_value();
    return maximize ? *x > *y : *x < *y;
  });

  std::vector<std::string> keys;
  for (auto it = cfg["sweep"]["ranges"].begin(); it != cfg["sweep"]["ranges"].end(); ++it) keys.push_back(it.key());
  std::ostringstream csv;
  csv.precision(12);
  csv << "rank,trial,objective,status";
  for (const auto& k : keys) csv << ',' << k;
  csv << '\n';
  json board = json::array();
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Trial& t = trials[order[r]];
    csv << r + 1 << ',' << t.index << ',';
    if (t.objective) csv << *t.objective;
    csv << ',' << t.status;
    for (const auto& k : keys) csv << ',' << csv_field(t.params[k].dump());
    csv << '\n';
    board.push_back({{"trial", t.index},
                     {"objective", t.objective ? json(*t.objective) : json(nullptr)},
                     {"status", t.status},
                     {"params", t.params}});
  }
  {
    std::ofstream f(out / "leaderboard.csv", std::ios::binary);
    f << csv.str();
  }
  RunResult res;
  res.metrics = {{"kind", "sweep"}, {"seed", seed}, {"trials", trials.size()}, {"leaderboard", board}};
  if (!board.empty() && trials[order[0]].objective) res.metrics["best_trial"] = trials[order[0]].index;
  {
    std::ofstream f(out / "metrics.json", std::ios::binary);
    f << res.metrics.dump(2) << '\n';
  }
  res.artifacts = {"leaderboard.csv", "metrics.json"};
  for (const auto& t : trials) res.artifacts.insert(res.artifacts.end(), t.files.begin(), t.files.end());
  res.manifest = write_manifest(out, cfg, res.artifacts);
  return res;
}

}  // namespace trustkit::cli
