#include "trustkit/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

nlohmann::json TwoGaussianSpec::to_json() const {
  return {{"mu0", mu0}, {"mu1", mu1}, {"sigma", sigma}, {"n", n}, {"seed", seed}};
}

TwoGaussianSpec TwoGaussianSpec::from_json(const nlohmann::json& j) {
  TwoGaussianSpec s;
  if (j.contains("mu0")) s.mu0 = j.at("mu0").get<std::array<double, 2>>();
  if (j.contains("mu1")) s.mu1 = j.at("mu1").get<std::array<double, 2>>();
  s.sigma = j.value("sigma", s.sigma);
  s.n = j.value("n", s.n);
  s.seed = j.value("seed", s.seed);
  return s;
}

LabeledDataset gen_two_gaussians(const TwoGaussianSpec& spec) {
  if (spec.n % 2 != 0) throw DomainError("two-gaussian dataset needs an even n");
  if (spec.mu0 == spec.mu1) throw DomainError("class means must differ");
  if (!(spec.sigma >= 0)) throw DomainError("sigma must be non-negative");
  Rng rng(spec.seed);
  LabeledDataset d;
  d.X = Tensor({spec.n, 2});
  d.labels.resize(spec.n);
  d.num_classes = 2;
  for (std::size_t i = 0; i < spec.n; ++i) {
    int y = static_cast<int>(i % 2);
    const auto& mu = y == 0 ? spec.mu0 : spec.mu1;
    d.X(i, 0) = mu[0] + spec.sigma * rng.normal();
    d.X(i, 1) = mu[1] + spec.sigma * rng.normal();
    d.labels[i] = y;
  }
  d.meta = {{"generator", "two_gaussians"}, {"spec", spec.to_json()}};
  return d;
}

double posterior_two_gaussians(std::span<const double> x, const TwoGaussianSpec& spec, int k) {
  if (x.size() != 2) throw ShapeError("posterior_two_gaussians expects a 2-D point");
  if (!(spec.sigma > 0)) throw DomainError("posterior needs sigma > 0");
  double d0 = 0, d1 = 0;
  for (int i = 0; i < 2; ++i) {
    d0 += (x[i] - spec.mu0[i]) * (x[i] - spec.mu0[i]);
    d1 += (x[i] - spec.mu1[i]) * (x[i] - spec.mu1[i]);
  }
  // N0 / (N0 + N1) = 1 / (1 + exp(log N1 - log N0)); shared covariance cancels.
  double a = (d0 - d1) / (2 * spec.sigma * spec.sigma);
  double p0 = a >= 0 ? std::exp(-a) / (1 + std::exp(-a)) : 1 / (1 + std::exp(a));
  return k == 0 ? p0 : 1.0 - p0;
}

nlohmann::json DiagonalSpec::to_json() const {
  return {{"n", n},
          {"classes", classes},
          {"rho", rho},
          {"embed_dim", embed_dim},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"unbiased", unbiased},
          {"task_scale", task_scale},
          {"bias_scale", bias_scale}};
}

DiagonalSpec DiagonalSpec::from_json(const nlohmann::json& j) {
  DiagonalSpec s;
  s.n = j.value("n", s.n);
  s.classes = j.value("classes", s.classes);
  s.rho = j.value("rho", s.rho);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.unbiased = j.value("unbiased", s.unbiased);
  s.task_scale = j.value("task_scale", s.task_scale);
  s.bias_scale = j.value("bias_scale", s.bias_scale);
  return s;
}

LabeledDataset gen_diagonal(const DiagonalSpec& spec) {
  if (!(spec.rho >= 0 && spec.rho <= 1)) throw DomainError("rho must lie in [0, 1]");
  if (spec.classes < 2) throw DomainError("diagonal dataset needs at least 2 classes");
  if (spec.embed_dim < spec.classes) throw DomainError("embed_dim must be at least the class count");
  const std::size_t K = spec.classes, e = spec.embed_dim;
  Rng root(spec.seed);
  Rng label_rng = root.split(0), noise_rng = root.split(1);
  LabeledDataset d;
  d.X = Tensor({spec.n, 2 * e});
  d.num_classes = K;
  d.labels.resize(spec.n);
  d.bias.resize(spec.n);
  d.groups.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    int y = static_cast<int>(label_rng.below(K));
    int z;
    if (spec.unbiased) z = static_cast<int>(label_rng.below(K));
    else z = label_rng.bernoulli(spec.rho) ? y : static_cast<int>(label_rng.below(K));
    for (std::size_t j = 0; j < e; ++j) {
      d.X(i, j) = (j == static_cast<std::size_t>(y) ? spec.task_scale : 0.0) + spec.noise_sigma * noise_rng.normal();
      d.X(i, e + j) =
          (j == static_cast<std::size_t>(z) ? spec.bias_scale : 0.0) + spec.noise_sigma * noise_rng.normal();
    }
    d.labels[i] = y;
    d.bias[i] = z;
    d.groups[i] = y * static_cast<int>(K) + z;
  }
  d.meta = {{"generator", "diagonal"}, {"spec", spec.to_json()}};
  return d;
}

LabeledDataset gen_spurious_groups(const SpuriousSpec& spec) {
  if (!(spec.majority >= 0 && spec.majority <= 1)) throw DomainError("majority must lie in [0, 1]");
  if (!(spec.core_sigma >= 0) || !(spec.spurious_sigma >= 0)) throw DomainError("noise scales must be non-negative");
  Rng root(spec.seed);
  Rng label_rng = root.split(0), noise_rng = root.split(1);
  LabeledDataset d;
  d.X = Tensor({spec.n, 2});
  d.num_classes = 2;
  for (std::size_t i = 0; i < spec.n; ++i) {
    int y = static_cast<int>(label_rng.below(2));
    int a = spec.balanced ? static_cast<int>(label_rng.below(2)) : (label_rng.bernoulli(spec.majority) ? y : 1 - y);
    d.X(i, 0) = (2 * y - 1) * spec.core_shift + spec.core_sigma * noise_rng.normal();
    d.X(i, 1) = (2 * a - 1) * spec.spurious_shift + spec.spurious_sigma * noise_rng.normal();
    d.labels.push_back(y);
    d.bias.push_back(a);
    d.groups.push_back(2 * y + a);
  }
  d.meta = {{"generator", "spurious_groups"}, {"majority", spec.majority}, {"seed", spec.seed}};
  return d;
}

LabeledDataset gen_robust_features(const RobustFeatureSpec& spec) {
  if (!(spec.weak_sigma >= 0)) throw DomainError("weak_sigma must be non-negative");
  Rng root(spec.seed);
  Rng label_rng = root.split(0), noise_rng = root.split(1);
  LabeledDataset d;
  d.X = Tensor({spec.n, spec.weak + 1});
  d.num_classes = 2;
  for (std::size_t i = 0; i < spec.n; ++i) {
    int y = static_cast<int>(label_rng.below(2));
    const double s = 2.0 * y - 1.0;
    d.X(i, 0) = std::clamp(0.5 + 0.4 * s + 0.05 * noise_rng.normal(), 0.0, 1.0);
    for (std::size_t j = 0; j < spec.weak; ++j)
      d.X(i, j + 1) = std::clamp(0.5 + spec.weak_shift * s + spec.weak_sigma * noise_rng.normal(), 0.0, 1.0);
    d.labels.push_back(y);
  }
  d.meta = {{"generator", "robust_features"}, {"weak", spec.weak}, {"seed", spec.seed}};
  return d;
}

LabeledDataset gen_heteroscedastic(std::size_t n, const std::function<double(double)>& mean_fn,
                                   const std::function<double(double)>& std_fn, std::array<double, 2> x_range,
                                   std::uint64_t seed) {
  if (!(x_range[1] > x_range[0])) throw DomainError("x_range must be increasing");
  Rng rng(seed);
  LabeledDataset d;
  d.X = Tensor({n, 1});
  d.targets = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double x = rng.uniform(x_range[0], x_range[1]);
    double s = std_fn(x);
    if (!(s >= 0)) throw DomainError("std_fn must be non-negative on the range");
    d.X(i, 0) = x;
    d.targets(i, 0) = mean_fn(x) + s * rng.normal();
  }
  d.meta = {{"generator", "heteroscedastic"}, {"x_range", x_range}, {"seed", seed}};
  return d;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
  std::size_t b = cell.find_first_not_of(" \t"), e = cell.find_last_not_of(" \t");
  double v = 0;
  if (b != std::string::npos) {
    auto res = std::from_chars(cell.data() + b, cell.data() + e + 1, v);
    if (res.ec == std::errc() && res.ptr == cell.data() + e + 1) return v;
  }
  throw ParseError("line " + std::to_string(line) + ", column '" + column + "': cannot parse '" + cell +
                   "' as a number");
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row");
  auto header = split_csv_line(line);
  std::size_t d = 0, t = 0;
  int label_col = -1, group_col = -1, bias_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "feature_" + std::to_string(d)) ++d;
    else if (h == "target_" + std::to_string(t)) ++t;
    else if (h == "label") label_col = static_cast<int>(c);
    else if (h == "group") group_col = static_cast<int>(c);
    else if (h == "bias") bias_col = static_cast<int>(c);
    else throw ParseError("line 1: unexpected column '" + h + "'");
  }
  if (d == 0) throw ParseError("line 1: header has no feature_0 column");

  std::vector<double> x, targets;
  LabeledDataset out;
  std::size_t line_no = 1, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = parse_cell(cells[c], line_no, header[c]);
      const std::string& h = header[c];
      if (h.rfind("feature_", 0) == 0) x.push_back(v);
      else if (h.rfind("target_", 0) == 0) targets.push_back(v);
      else {
        if (std::floor(v) != v) {
          throw ParseError("line " + std::to_string(line_no) + ", column '" + h + "': expected an integer");
        }
        int iv = static_cast<int>(v);
        if (static_cast<int>(c) == label_col) out.labels.push_back(iv);
        else if (static_cast<int>(c) == group_col) out.groups.push_back(iv);
        else if (static_cast<int>(c) == bias_col) out.bias.push_back(iv);
      }
    }
    ++rows;
  }
  if (rows > 0) {
    out.X = Tensor({rows, d}, std::move(x));
    if (t > 0) out.targets = Tensor({rows, t}, std::move(targets));
  }
  if (schema.num_classes) out.num_classes = *schema.num_classes;
  else if (!out.labels.empty())
    out.num_classes = static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1;
  out.validate();
  return out;
}

void save_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t d = std::max<std::size_t>(data.dim(), 1);
  std::vector<std::string> header;
  for (std::size_t j = 0; j < d; ++j) header.push_back("feature_" + std::to_string(j));
  const std::size_t t = data.targets.empty() ? 0 : data.targets.cols();
  for (std::size_t j = 0; j < t; ++j) header.push_back("target_" + std::to_string(j));
  if (!data.labels.empty()) header.push_back("label");
  if (!data.groups.empty()) header.push_back("group");
  if (!data.bias.empty()) header.push_back("bias");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << fmt17(data.X(i, j));
    for (std::size_t j = 0; j < t; ++j) out << ',' << fmt17(data.targets(i, j));
    if (!data.labels.empty()) out << ',' << data.labels[i];
    if (!data.groups.empty()) out << ',' << data.groups[i];
    if (!data.bias.empty()) out << ',' << data.bias[i];
    out << '\n';
  }
}

}  // namespace trustkit
