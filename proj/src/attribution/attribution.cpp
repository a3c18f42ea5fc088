#include "trustkit/attribution.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/grad.hpp"
#include "trustkit/metrics.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::raw: return "raw";
    case Normalization::abs_p99: return "abs-p99";
    case Normalization::none: return "none";
  }
  return "none";
}

std::string AttributionMap::to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "feature,raw,normalized\n";
  for (std::size_t i = 0; i < raw.size(); ++i) os << i << ',' << raw[i] << ',' << scores[i] << '\n';
  return os.str();
}

double percentile_nearest_rank(std::span<const double> v, double p) {
  if (v.empty()) throw DomainError("percentile of an empty set");
  if (!(p > 0 && p <= 100)) throw DomainError("percentile must lie in (0, 100]");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(s.size())));
  return s[std::clamp<std::size_t>(rank, 1, s.size()) - 1];
}

AttributionMap normalize_abs_p99(std::vector<double> raw, double clip_percentile) {
  AttributionMap m;
  m.normalization = Normalization::abs_p99;
  m.clip_percentile = clip_percentile;
  for (double& r : raw) r = std::abs(r);
  m.raw = std::move(raw);
  if (m.raw.empty()) throw DomainError("attribution map is empty");
  const double lo = *std::min_element(m.raw.begin(), m.raw.end());
  const double hi = percentile_nearest_rank(m.raw, clip_percentile);
  if (!(hi > lo)) {
    m.degenerate = true;
    m.scores = m.raw;
    return m;
  }
  m.scores.resize(m.raw.size());
  for (std::size_t i = 0; i < m.raw.size(); ++i) m.scores[i] = std::min((m.raw[i] - lo) / (hi - lo), 1.0);
  return m;
}

BatchScore class_score(const MlpModel& model, std::size_t c) {
  if (c >= model.output_dim()) throw DomainError("class index out of range");
  return [model, c](const Var& X) {
    Var z = forward(model, X.tape()->constant(Tensor::row(model.params())), X);
    return slice_cols(z, c, c + 1);
  };
}

BatchScore class_probability(const MlpModel& model, std::size_t c) {
  const std::size_t k = model.output_dim();
  if (k == 1 ? c > 1 : c >= k) throw DomainError("class index out of range");
  return [model, c, k](const Var& X) {
    Var z = forward(model, X.tape()->constant(Tensor::row(model.params())), X);
    if (k == 1) return c == 1 ? sigmoid(z) : sigmoid(-z);
    return slice_cols(softmax(z), c, c + 1);
  };
}

namespace {

void check_row(const Tensor& x) {
  if (x.rows() != 1) throw ShapeError("attribution input must be a single row");
}

std::vector<double> input_gradient(const BatchScore& score, const Tensor& X) {
  Tape tape;
  Var x = tape.variable(X);
  Var s = score(x);
  if (s.rows() != X.rows() || s.cols() != 1) throw ShapeError("score must return one value per row");
  return grad_input(sum(s), x);
}

double score_value(const BatchScore& score, const Tensor& x) {
  Tape tape;
  Tape::NoGradGuard guard(tape);
  return score(tape.constant(x)).item();
}

}  // namespace

AttributionMap saliency(const BatchScore& score, const Tensor& x) {
  check_row(x);
  return normalize_abs_p99(input_gradient(score, x));
}

AttributionMap saliency(const MlpModel& model, const Tensor& x, std::size_t c) {
  return saliency(class_score(model, c), x);
}

AttributionMap smoothgrad(const BatchScore& score, const Tensor& x, const SmoothGradConfig& cfg) {
  check_row(x);
  if (cfg.samples < 1) throw DomainError("SmoothGrad needs at least one sample");
  if (!(cfg.sigma >= 0)) throw DomainError("SmoothGrad noise scale must be non-negative");
  if (cfg.sigma == 0) return saliency(score, x);
  Rng rng(cfg.seed);
  AttributionMap out;
  out.normalization = Normalization::abs_p99;
  out.raw.assign(x.size(), 0.0);
  out.scores.assign(x.size(), 0.0);
  out.degenerate = true;
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Tensor z = x;
    for (auto& v : z.values()) v = std::clamp(v + cfg.sigma * rng.normal(), cfg.lo, cfg.hi);
    AttributionMap m = saliency(score, z);
    out.degenerate = out.degenerate && m.degenerate;
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.raw[i] += m.raw[i];
      out.scores[i] += m.scores[i];
    }
  }
  const double n = static_cast<double>(cfg.samples);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.raw[i] /= n;
    out.scores[i] /= n;
  }
  return out;
}

AttributionMap smoothgrad(const MlpModel& model, const Tensor& x, std::size_t c, const SmoothGradConfig& cfg) {
  return smoothgrad(class_score(model, c), x, cfg);
}

IgResult integrated_gradients(const BatchScore& score, const Tensor& x, const Tensor& x0, std::size_t steps) {
  check_row(x);
  if (x0.shape() != x.shape()) throw ShapeError("IG baseline shape " + x0.shape_string() + " differs from input");
  if (steps < 1) throw DomainError("IG needs at least one step");
  const std::size_t d = x.cols();
  Tensor path({steps, d});
  for (std::size_t k = 0; k < steps; ++k) {
    double a = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < d; ++i) path(k, i) = x0[i] + a * (x[i] - x0[i]);
  }
  std::vector<double> g = input_gradient(score, path);
  IgResult r;
  r.map.normalization = Normalization::none;
  r.map.raw.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < steps; ++k) acc += g[k * d + i];
    r.map.raw[i] = (x[i] - x0[i]) * acc / static_cast<double>(steps);
  }
  r.map.scores = r.map.raw;
  double total = std::accumulate(r.map.raw.begin(), r.map.raw.end(), 0.0);
  r.completeness_gap = std::abs(total - (score_value(score, x) - score_value(score, x0)));
  return r;
}

IgResult integrated_gradients(const MlpModel& model, const Tensor& x, const Tensor& x0, std::size_t c,
                              std::size_t steps) {
  return integrated_gradients(class_score(model, c), x, x0, steps);
}

BlackBox model_blackbox(const MlpModel& model, std::size_t c, bool use_logit) {
  const std::size_t k = model.output_dim();
  if (k == 1 ? c > 1 : c >= k) throw DomainError("class index out of range");
  return [model, c, k, use_logit](const Tensor& Z) {
    Tensor z = model.predict(Z);
    std::vector<double> out(Z.rows());
    if (k == 1) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        double l = c == 1 ? z(i, 0) : -z(i, 0);
        out[i] = use_logit ? l : 1.0 / (1.0 + std::exp(-l));
      }
      return out;
    }
    Tensor p = use_logit ? z : softmax_rows(z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p(i, c);
    return out;
  };
}

std::vector<double> feature_means(const Tensor& X) {
  if (X.rows() == 0) throw DomainError("feature means of an empty set");
  std::vector<double> m(X.cols(), 0.0);
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) m[j] += X(i, j);
  for (double& v : m) v /= static_cast<double>(X.rows());
  return m;
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct WlsFit {
  bool ok = false;
  double sse = 0.0;
  Vec coef;  // intercept first
};

WlsFit weighted_fit(const Mat& masks, const Vec& y, const Vec& sw, const std::vector<std::size_t>& cols) {
  const Eigen::Index n = masks.rows();
  Mat A(n, static_cast<Eigen::Index>(cols.size()) + 1);
  A.col(0).setOnes();
  for (std::size_t j = 0; j < cols.size(); ++j) A.col(static_cast<Eigen::Index>(j) + 1) = masks.col(cols[j]);
  Mat Aw = sw.asDiagonal() * A;
  Vec yw = sw.cwiseProduct(y);
  Eigen::ColPivHouseholderQR<Mat> qr(Aw);
  qr.setThreshold(1e-10);
  WlsFit f;
  if (qr.rank() < A.cols()) return f;
  f.ok = true;
  f.coef = qr.solve(yw);
  f.sse = (Aw * f.coef - yw).squaredNorm();
  return f;
}

}  // namespace

SparseSurrogate lime(const BlackBox& f, const Tensor& x, std::span<const double> baseline, const LimeConfig& cfg) {
  check_row(x);
  const std::size_t d = x.cols(), n = cfg.samples;
  if (baseline.size() != d) throw ShapeError("LIME baseline width differs from the input");
  if (n < d) throw DomainError("LIME needs at least as many samples as features");
  if (!(cfg.kernel_sigma > 0)) throw DomainError("LIME kernel width must be positive");
  Rng rng(cfg.seed);
  Mat masks = Mat::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<std::size_t> idx(d);
  for (std::size_t s = 1; s < n; ++s) {
    std::size_t keep = 1 + rng.below(d);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t j = keep; j < d; ++j) masks(s, idx[j]) = 0.0;
  }
  bool varied = false;
  for (Eigen::Index s = 1; s < masks.rows() && !varied; ++s) varied = masks.row(s) != masks.row(0);
  if (!varied) throw DomainError("LIME design is degenerate: every sampled mask is identical");
  Tensor Z({n, d});
  Vec sw(n);
  for (std::size_t s = 0; s < n; ++s) {
    double dist2 = 0;
    for (std::size_t j = 0; j < d; ++j) {
      Z(s, j) = masks(s, j) * x[j] + (1 - masks(s, j)) * baseline[j];
      dist2 += (x[j] - Z(s, j)) * (x[j] - Z(s, j));
    }
    sw[s] = std::sqrt(std::isinf(cfg.kernel_sigma) ? 1.0 : std::exp(-dist2 / (cfg.kernel_sigma * cfg.kernel_sigma)));
  }
  auto fz = f(Z);
  if (fz.size() != n) throw ShapeError("black box must return one score per row");
  Vec y = Eigen::Map<const Vec>(fz.data(), static_cast<Eigen::Index>(n));

  SparseSurrogate g;
  g.weights.assign(d, 0.0);
  std::vector<std::size_t> active;
  WlsFit best = weighted_fit(masks, y, sw, active);
  std::vector<bool> used(d, false);
  const std::size_t K = std::min(cfg.k_sparse, d);
  while (active.size() < K) {
    std::optional<std::size_t> pick;
    WlsFit pick_fit;
    for (std::size_t j = 0; j < d; ++j) {
      if (used[j]) continue;
      auto cols = active;
      cols.push_back(j);
      WlsFit fit = weighted_fit(masks, y, sw, cols);
      if (fit.ok && (!pick || fit.sse < pick_fit.sse)) {
        pick = j;
        pick_fit = std::move(fit);
      }
    }
    if (!pick) break;
    used[*pick] = true;
    active.push_back(*pick);
    best = std::move(pick_fit);
  }
  if (!best.ok) throw DomainError("LIME design is degenerate");
  g.intercept = best.coef[0];
  for (std::size_t j = 0; j < active.size(); ++j) g.weights[active[j]] = best.coef[static_cast<Eigen::Index>(j) + 1];
  g.active = active;
  Vec w = sw.cwiseProduct(sw);
  double ybar = w.dot(y) / w.sum();
  double sst = (w.array() * (y.array() - ybar).square()).sum();
  g.weighted_r2 = sst > 0 ? 1.0 - best.sse / sst : (best.sse < 1e-20 ? 1.0 : 0.0);
  return g;
}

std::vector<double> shap_exact(const SetFunction& v, std::size_t d) {
  if (d == 0) throw DomainError("Shapley values need at least one player");
  if (d > kShapExactMaxPlayers)
    throw CapacityError("exact Shapley enumeration is limited to " + std::to_string(kShapExactMaxPlayers) +
                        " players; use shap_mc");
  const std::uint64_t total = std::uint64_t{1} << d;
  std::vector<double> value(total);
  for (std::uint64_t S = 0; S < total; ++S) value[S] = v(S);
  // w[s] = s! (d - s - 1)! / d! = 1 / (d * C(d - 1, s))
  std::vector<double> w(d);
  double binom = 1;
  for (std::size_t s = 0; s < d; ++s) {
    w[s] = 1.0 / (static_cast<double>(d) * binom);
    binom = binom * static_cast<double>(d - 1 - s) / static_cast<double>(s + 1);
  }
  std::vector<double> phi(d, 0.0);
  for (std::uint64_t S = 0; S < total; ++S) {
    const auto size = static_cast<std::size_t>(std::popcount(S));
    for (std::size_t i = 0; i < d; ++i) {
      const std::uint64_t bit = std::uint64_t{1} << i;
      if (S & bit) continue;
      phi[i] += w[size] * (value[S | bit] - value[S]);
    }
  }
  return phi;
}

std::vector<double> shap_mc(const SetFunction& v, std::size_t d, std::size_t samples, std::uint64_t seed) {
  if (d == 0) throw DomainError("Shapley values need at least one player");
  if (d > 64) throw CapacityError("coalition masks are limited to 64 players");
  if (samples < 1) throw DomainError("Monte Carlo Shapley needs at least one sample per feature");
  const Rng root(seed);
  std::vector<double> phi(d, 0.0);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < d; ++i) {
    Rng rng = root.split(i);
    const std::uint64_t bit = std::uint64_t{1} << i;
    double acc = 0;
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t m = 1 + rng.below(d);
      others.clear();
      for (std::size_t j = 0; j < d; ++j)
        if (j != i) others.push_back(j);
      std::uint64_t S = bit;
      for (std::size_t t = 0; t + 1 < m; ++t) {
        std::size_t r = t + rng.below(others.size() - t);
        std::swap(others[t], others[r]);
        S |= std::uint64_t{1} << others[t];
      }
      acc += v(S) - v(S & ~bit);
    }
    phi[i] = acc / static_cast<double>(samples);
  }
  return phi;
}

SetFunction blackbox_game(const BlackBox& f, const Tensor& x, std::span<const double> fill) {
  check_row(x);
  if (fill.size() != x.cols()) throw ShapeError("fill width differs from the input");
  if (x.cols() > 64) throw CapacityError("coalition masks are limited to 64 players");
  std::vector<double> b(fill.begin(), fill.end());
  return [f, x, b](std::uint64_t S) {
    Tensor z = x;
    for (std::size_t j = 0; j < z.cols(); ++j)
      if (!(S >> j & 1)) z[j] = b[j];
    return f(z).at(0);
  };
}

namespace {

Tensor activations(const MlpModel& model, const Tensor& X, std::size_t layer) {
  if (layer >= model.num_layers()) throw DomainError("TCAV layer must leave at least one layer above it");
  ForwardOptions fo;
  fo.last_layer = layer;
  return forward_values(model, X, fo);
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("concept sets differ in width");
  Tensor out({a.rows() + b.rows(), a.cols()});
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

Cav cav_from_activations(const Tensor& A, std::span<const int> labels, std::size_t layer, const ProbeConfig& probe) {
  ProbeResult p = fit_linear_probe(A, labels, 2, probe);
  const std::size_t q = A.cols();
  const auto& th = p.model.params();
  Cav c;
  c.layer = layer;
  c.probe_accuracy = p.test_accuracy;
  c.v.resize(q);
  double norm = 0;
  for (std::size_t j = 0; j < q; ++j) {
    c.v[j] = th[q + j] - th[j];
    norm += c.v[j] * c.v[j];
  }
  norm = std::sqrt(norm);
  if (!(norm > 0)) throw NumericError("concept probe has a zero normal");
  for (double& v : c.v) v /= norm;
  return c;
}

}  // namespace

Cav fit_cav(const MlpModel& model, std::size_t layer, const Tensor& pos, const Tensor& neg, const ProbeConfig& probe) {
  Tensor A = stack_rows(activations(model, pos, layer), activations(model, neg, layer));
  std::vector<int> y(pos.rows(), 1);
  y.resize(A.rows(), 0);
  return cav_from_activations(A, y, layer, probe);
}

std::vector<double> concept_sensitivity(const MlpModel& model, const Cav& cav, std::size_t k, const Tensor& X) {
  if (k >= model.output_dim()) throw DomainError("class index out of range");
  Tensor A = activations(model, X, cav.layer);
  if (A.cols() != cav.v.size()) throw ShapeError("CAV width differs from the layer width");
  Tape tape;
  Var a = tape.variable(A);
  ForwardOptions fo;
  fo.first_layer = cav.layer;
  Var z = forward(model, tape.constant(Tensor::row(model.params())), a, fo);
  std::vector<double> g = grad_input(sum(slice_cols(z, k, k + 1)), a);
  std::vector<double> s(A.rows(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) s[i] += g[i * A.cols() + j] * cav.v[j];
  return s;
}

double tcav_score(const MlpModel& model, const Cav& cav, std::size_t k, const Tensor& X) {
  if (X.rows() == 0) throw DomainError("TCAV needs at least one input");
  auto s = concept_sensitivity(model, cav, k, X);
  auto pos = std::count_if(s.begin(), s.end(), [](double v) { return v > 0; });
  return static_cast<double>(pos) / static_cast<double>(s.size());
}

TcavResult tcav(const MlpModel& model, std::size_t layer, const Tensor& pos, const Tensor& neg, std::size_t k,
                const Tensor& X_k, const TcavConfig& cfg) {
  TcavResult r;
  r.cav = fit_cav(model, layer, pos, neg, cfg.probe);
  r.score = tcav_score(model, r.cav, k, X_k);
  r.reliable = r.cav.probe_accuracy > cfg.min_probe_accuracy;
  Tensor A = stack_rows(activations(model, pos, layer), activations(model, neg, layer));
  const Rng root(cfg.seed);
  for (std::size_t t = 0; t < cfg.random_cavs; ++t) {
    std::vector<int> y(A.rows(), 0);
    std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(A.rows() / 2), 1);
    Rng rng = root.split(t);
    rng.shuffle(std::span<int>(y));
    ProbeConfig pc = cfg.probe;
    pc.seed = mix_seed(cfg.probe.seed, t + 1);
    r.random_scores.push_back(tcav_score(model, cav_from_activations(A, y, layer, pc), k, X_k));
  }
  const std::size_t R = r.random_scores.size();
  if (R >= 2) {
    double mu = std::accumulate(r.random_scores.begin(), r.random_scores.end(), 0.0) / static_cast<double>(R);
    double ss = 0;
    for (double s : r.random_scores) ss += (s - mu) * (s - mu);
    double sd = std::sqrt(ss / static_cast<double>(R - 1));
    if (sd == 0) {
      r.t_statistic = mu == r.score ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mu - r.score);
      r.p_value = mu == r.score ? 1.0 : 0.0;
    } else {
      r.t_statistic = (mu - r.score) / (sd / std::sqrt(static_cast<double>(R)));
      boost::math::students_t dist(static_cast<double>(R - 1));
      r.p_value = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic)));
    }
  }
  return r;
}

CascadeResult cascading_randomization(const MlpModel& model, const AttributionFn& attribution, const Tensor& x,
                                      std::uint64_t seed) {
  if (model.num_layers() < 2) throw DomainError("cascading randomization needs at least two layers");
  auto absolute = [](std::vector<double> v) {
    for (double& e : v) e = std::abs(e);
    return v;
  };
  const std::vector<double> base = absolute(attribution(model, x));
  CascadeResult r;
  r.spearman.push_back(spearman(base, base));
  MlpModel m = model;
  Rng rng(seed);
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    m.reinitialize_layer(l, rng);
    r.order.push_back(l);
    r.spearman.push_back(spearman(base, absolute(attribution(m, x))));
  }
  return r;
}

std::string RemoveClassifyResult::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "fraction,accuracy,random_accuracy,relative\n";
  for (std::size_t i = 0; i < fractions.size(); ++i)
    os << fractions[i] << ',' << accuracy[i] << ',' << random_accuracy[i] << ',' << relative[i] << '\n';
  return os.str();
}

std::string RemoveClassifyResult::to_svg() const {
  const double W = 400, H = 300, pad = 40;
  auto px = [&](double f) { return pad + f * (W - 2 * pad); };
  auto py = [&](double a) { return H - pad - a * (H - 2 * pad); };
  auto line = [&](const std::vector<double>& ys, const char* color) {
    std::ostringstream p;
    p << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < fractions.size(); ++i) p << px(fractions[i]) << ',' << py(ys[i]) << ' ';
    p << "\"/>\n";
    return p.str();
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\"" << H - 2 * pad
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << line(accuracy, "#1f77b4") << line(random_accuracy, "#999999");
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">fraction removed</text>\n";
  os << "<text x=\"12\" y=\"" << H / 2 << "\" transform=\"rotate(-90 12 " << H / 2
     << ")\" text-anchor=\"middle\">accuracy</text>\n";
  os << "</svg>\n";
  return os.str();
}

RemoveClassifyResult remove_and_classify(const MlpModel& model, const AttributionFn& attribution,
                                         const LabeledDataset& data, std::span<const double> fractions,
                                         std::span<const double> fill, std::uint64_t seed) {
  const std::size_t n = data.size(), d = data.dim();
  if (fill.size() != d) throw ShapeError("fill width differs from the features");
  if (fractions.empty()) throw DomainError("remove-and-classify needs at least one fraction");
  RemoveClassifyResult r;
  r.fractions.assign(fractions.begin(), fractions.end());
  for (double f : r.fractions)
    if (!(f >= 0 && f <= 1)) throw DomainError("removal fractions must lie in [0, 1]");
  std::sort(r.fractions.begin(), r.fractions.end());
  std::vector<std::vector<std::size_t>> ranked(n), shuffled(n);
  const Rng root(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> rows{i};
    auto s = attribution(model, data.features(rows));
    if (s.size() != d) throw ShapeError("attribution width differs from the features");
    ranked[i].resize(d);
    std::iota(ranked[i].begin(), ranked[i].end(), 0);
    std::stable_sort(ranked[i].begin(), ranked[i].end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    shuffled[i].resize(d);
    std::iota(shuffled[i].begin(), shuffled[i].end(), 0);
    Rng rng = root.split(i);
    rng.shuffle(std::span<std::size_t>(shuffled[i]));
  }
  auto erased = [&](const std::vector<std::vector<std::size_t>>& order, std::size_t k) {
    Tensor X = data.X;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < k; ++t) X(i, order[i][t]) = fill[order[i][t]];
    return accuracy(model.predict(X), data.labels);
  };
  for (double f : r.fractions) {
    auto k = static_cast<std::size_t>(std::llround(f * static_cast<double>(d)));
    double a = erased(ranked, k), b = erased(shuffled, k);
    r.accuracy.push_back(a);
    r.random_accuracy.push_back(b);
    r.relative.push_back(b > 0 ? a / b : (a == 0 ? 1.0 : std::numeric_limits<double>::infinity()));
  }
  for (std::size_t i = 1; i < r.fractions.size(); ++i) {
    double w = r.fractions[i] - r.fractions[i - 1];
    r.auc += 0.5 * w * (r.accuracy[i] + r.accuracy[i - 1]);
    r.random_auc += 0.5 * w * (r.random_accuracy[i] + r.random_accuracy[i - 1]);
  }
  return r;
}

}  // namespace trustkit
