#include "trustkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trustkit/errors.hpp"

namespace trustkit {

// ---------------------------------------------------------------------------
// PredictionSet

void PredictionSet::validate() const {
  if (probs.empty()) {
    if (!labels.empty()) throw ShapeError("labels without probabilities");
    return;
  }
  const std::size_t n = probs.rows(), K = probs.cols();
  if (labels.size() != n) throw ShapeError("label count differs from probability rows");
  if (!confidence.empty() && confidence.size() != n) throw ShapeError("confidence count differs from rows");
  const std::size_t label_range = K == 1 ? 2 : K;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) {
      double v = probs(i, k);
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("probability outside [0, 1] in row " + std::to_string(i));
      s += v;
    }
    if (K > 1 && std::abs(s - 1.0) > 1e-9) throw DomainError("row " + std::to_string(i) + " is not on the simplex");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= label_range) {
      throw DomainError("label out of range in row " + std::to_string(i));
    }
  }
}

PredictionSet PredictionSet::from_probs(Tensor probs, std::vector<int> labels) {
  PredictionSet p;
  p.probs = probs.as_matrix();
  p.labels = std::move(labels);
  p.validate();
  return p;
}

PredictionSet PredictionSet::from_logits(const Tensor& logits, std::vector<int> labels, double temperature) {
  PredictionSet p;
  p.logits = logits.as_matrix();
  p.probs = temperature_scale(p.logits, temperature);
  p.labels = std::move(labels);
  p.validate();
  return p;
}

std::vector<std::size_t> PredictionSet::predictions() const {
  std::vector<std::size_t> out(size());
  const std::size_t K = classes();
  for (std::size_t i = 0; i < size(); ++i) {
    if (K == 1) {
      out[i] = probs(i, 0) > 0.5 ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (probs(i, k) > probs(i, best)) best = k;
    out[i] = best;
  }
  return out;
}

std::vector<double> PredictionSet::confidences() const {
  if (!confidence.empty()) return confidence;
  std::vector<double> c(size());
  const std::size_t K = classes();
  for (std::size_t i = 0; i < size(); ++i) {
    if (K == 1) {
      c[i] = std::max(probs(i, 0), 1.0 - probs(i, 0));
      continue;
    }
    double m = probs(i, 0);
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, probs(i, k));
    c[i] = m;
  }
  return c;
}

std::vector<int> PredictionSet::correct() const {
  auto pred = predictions();
  std::vector<int> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = static_cast<int>(pred[i]) == labels[i];
  return out;
}

// ---------------------------------------------------------------------------
// Scoring rules

double log_score_value(std::span<const double> f, int y) {
  return std::log(std::max(f[static_cast<std::size_t>(y)], kProbClamp));
}

double brier_score_value(std::span<const double> f, int y) {
  double s = 0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    double target = static_cast<int>(k) == y ? 1.0 : 0.0;
    s -= (target - f[k]) * (target - f[k]);
  }
  return s;
}

namespace {

double label_prob(const PredictionSet& p, std::size_t i) {
  if (p.classes() == 1) return p.labels[i] == 1 ? p.probs(i, 0) : 1.0 - p.probs(i, 0);
  return p.probs(i, static_cast<std::size_t>(p.labels[i]));
}

}  // namespace

ScoreResult log_score(const PredictionSet& p) {
  p.validate();
  ScoreResult r;
  r.per_sample.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double fy = label_prob(p, i);
    if (fy < kProbClamp) ++r.clamped;
    r.per_sample[i] = std::log(std::max(fy, kProbClamp));
  }
  if (!r.per_sample.empty()) r.mean = std::accumulate(r.per_sample.begin(), r.per_sample.end(), 0.0) / p.size();
  return r;
}

ScoreResult brier_score(const PredictionSet& p, bool multiclass) {
  p.validate();
  const std::size_t K = p.classes();
  if (multiclass && K < 2) throw DomainError("multi-class Brier score needs at least 2 classes");
  if (!multiclass && K > 2) throw DomainError("binary Brier score needs 1 or 2 probability columns");
  ScoreResult r;
  r.per_sample.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (multiclass) {
      std::vector<double> row(p.probs.data().begin() + i * K, p.probs.data().begin() + (i + 1) * K);
      r.per_sample[i] = brier_score_value(row, p.labels[i]);
    } else {
      double q = K == 1 ? p.probs(i, 0) : p.probs(i, 1);
      double y = p.labels[i];
      r.per_sample[i] = -(q - y) * (q - y);
    }
  }
  if (!r.per_sample.empty()) r.mean = std::accumulate(r.per_sample.begin(), r.per_sample.end(), 0.0) / p.size();
  return r;
}

// ---------------------------------------------------------------------------
// Calibration

std::size_t calibration_bin(double c, std::size_t M) {
  if (M == 0) throw DomainError("bin count must be at least 1");
  if (!(c >= 0.0 && c <= 1.0)) throw DomainError("confidence outside [0, 1]");
  const double Md = static_cast<double>(M);
  std::size_t m = static_cast<std::size_t>(std::ceil(c * Md));
  m = std::clamp<std::size_t>(m, 1, M);
  // Compare against the same boundary values the bins report, so a
  // confidence equal to a printed edge lands in the right-closed bin.
  while (m > 1 && c <= static_cast<double>(m - 1) / Md) --m;
  while (m < M && c > static_cast<double>(m) / Md) ++m;
  return m - 1;
}

CalibrationReport ece_report(std::span<const double> confidence, std::span<const int> correct, std::size_t M) {
  if (M == 0) throw DomainError("bin count must be at least 1");
  if (confidence.empty()) throw DomainError("ECE of an empty prediction set");
  if (confidence.size() != correct.size()) throw ShapeError("confidence and correctness lengths differ");
  CalibrationReport r;
  r.bins = M;
  r.n = confidence.size();
  r.per_bin.resize(M);
  std::vector<double> acc_sum(M, 0.0), conf_sum(M, 0.0);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    std::size_t b = calibration_bin(confidence[i], M);
    r.per_bin[b].count++;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
    conf_sum[b] += confidence[i];
  }
  const double n = static_cast<double>(r.n);
  for (std::size_t b = 0; b < M; ++b) {
    CalibrationBin& bin = r.per_bin[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(M);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(M);
    if (bin.count == 0) continue;
    bin.accuracy = acc_sum[b] / static_cast<double>(bin.count);
    bin.confidence = conf_sum[b] / static_cast<double>(bin.count);
    double gap = std::abs(bin.accuracy - bin.confidence);
    r.ece += static_cast<double>(bin.count) / n * gap;
    r.mce = std::max(r.mce, gap);
  }
  return r;
}

CalibrationReport ece_report(const PredictionSet& p, std::size_t M) {
  p.validate();
  auto c = p.confidences();
  auto ok = p.correct();
  return ece_report(c, ok, M);
}

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json b = nlohmann::json::array();
  for (const auto& bin : per_bin) {
    b.push_back({{"lower", bin.lower},
                 {"upper", bin.upper},
                 {"count", bin.count},
                 {"accuracy", bin.accuracy},
                 {"confidence", bin.confidence}});
  }
  return {{"bins", bins}, {"n", n}, {"ece", ece}, {"mce", mce}, {"per_bin", b}};
}

std::string reliability_svg(const CalibrationReport& report, const std::string& title) {
  const double W = 420, left = 50, top = 40, plot = 320, hist_h = 90, gap_y = 30;
  const double H = top + plot + gap_y + hist_h + 40;
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  s.precision(4);
  s << "<text x=\"" << left + 200 << "\" y=\"20\">ECE " << report.ece << "  MCE " << report.mce << "</text>\n";
  s.precision(2);
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot << "\" height=\"" << plot
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot << "\" x2=\"" << left + plot << "\" y2=\"" << top
    << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  const double bw = plot / static_cast<double>(report.bins);
  std::size_t max_count = 1;
  for (const auto& b : report.per_bin) max_count = std::max(max_count, b.count);
  for (std::size_t i = 0; i < report.per_bin.size(); ++i) {
    const auto& b = report.per_bin[i];
    double x = left + bw * static_cast<double>(i);
    if (b.count > 0) {
      double acc_h = plot * b.accuracy;
      s << "<rect class=\"acc\" x=\"" << x << "\" y=\"" << top + plot - acc_h << "\" width=\"" << bw
        << "\" height=\"" << acc_h << "\" fill=\"#3b6fb6\" stroke=\"white\"/>\n";
      double lo = std::min(b.accuracy, b.confidence), hi = std::max(b.accuracy, b.confidence);
      s << "<rect class=\"gap\" x=\"" << x << "\" y=\"" << top + plot - plot * hi << "\" width=\"" << bw
        << "\" height=\"" << plot * (hi - lo) << "\" fill=\"#e0524a\" fill-opacity=\"0.5\" stroke=\"#e0524a\"/>\n";
    }
    double hh = hist_h * static_cast<double>(b.count) / static_cast<double>(max_count);
    double hy = top + plot + gap_y + hist_h;
    s << "<rect class=\"hist\" x=\"" << x << "\" y=\"" << hy - hh << "\" width=\"" << bw << "\" height=\"" << hh
      << "\" fill=\"#777\" stroke=\"white\"/>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    double v = t / 4.0;
    s << "<text x=\"" << left + plot * v - 8 << "\" y=\"" << top + plot + 14 << "\">" << v << "</text>\n";
    s << "<text x=\"" << left - 32 << "\" y=\"" << top + plot - plot * v + 4 << "\">" << v << "</text>\n";
  }
  s << "<text x=\"" << left + plot / 2 - 30 << "\" y=\"" << H - 8 << "\">confidence</text>\n";
  s << "<text x=\"" << left + plot + 6 << "\" y=\"" << top + plot + gap_y + hist_h << "\">count</text>\n";
  s << "<text x=\"" << left + plot + 6 << "\" y=\"" << top + 12 << "\">accuracy</text>\n";
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Temperature scaling

Tensor temperature_scale(const Tensor& logits_in, double T) {
  if (!(T > 0)) throw DomainError("temperature must be positive");
  Tensor logits = logits_in.as_matrix();
  Tensor out({logits.rows(), logits.cols()});
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
    double s = 0;
    for (std::size_t j = 0; j < logits.cols(); ++j) s += (out(i, j) = std::exp((logits(i, j) - m) / T));
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= s;
  }
  return out;
}

TemperatureFit fit_temperature(const Tensor& logits, std::span<const int> labels, std::span<const double> grid,
                               std::size_t M) {
  if (grid.empty()) throw DomainError("temperature grid is empty");
  TemperatureFit fit;
  fit.grid.assign(grid.begin(), grid.end());
  std::vector<int> y(labels.begin(), labels.end());
  bool have = false;
  for (double T : grid) {
    if (!(T > 0)) throw DomainError("temperatures must be positive");
    PredictionSet p = PredictionSet::from_logits(logits, y, T);
    double e = ece_report(p, M).ece;
    fit.grid_ece.push_back(e);
    if (!have || e < fit.ece || (e == fit.ece && T < fit.temperature)) {
      fit.ece = e;
      fit.temperature = T;
      have = true;
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Detection metrics

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("score and label counts differ");
  for (int l : labels)
    if (l != 0 && l != 1) throw DomainError("detection labels must be 0 or 1");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  std::size_t P = 0;
  for (int l : labels) P += l;
  const std::size_t N = n - P;
  if (P == 0 || N == 0) throw DomainError("AUROC is undefined when only one class is present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tied blocks give the half-credit rule.
  double rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j + 1;
  }
  double U = rank_sum - static_cast<double>(P) * static_cast<double>(P + 1) / 2.0;
  return U / (static_cast<double>(P) * static_cast<double>(N));
}

namespace {

struct Sweep {
  std::vector<double> thresholds, tp, fp;
  std::size_t P = 0, N = 0;
};

Sweep sweep(std::span<const double> scores, std::span<const int> labels) {
  Sweep s;
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (int l : labels) s.P += l;
  s.N = n - s.P;
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    s.thresholds.push_back(scores[order[i]]);
    s.tp.push_back(tp);
    s.fp.push_back(fp);
    i = j;
  }
  return s;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  Sweep s = sweep(scores, labels);
  if (s.P == 0) return 0.0;
  double ap = 0, prev_recall = 0;
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    double predicted = s.tp[k] + s.fp[k];
    if (predicted == 0) continue;  // precision undefined: excluded
    double recall = s.tp[k] / static_cast<double>(s.P);
    double precision = s.tp[k] / predicted;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

DetectionCurves detection_metrics(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  DetectionCurves c;
  Sweep s = sweep(scores, labels);
  c.thresholds = s.thresholds;
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    double tpr = s.P ? s.tp[k] / static_cast<double>(s.P) : 0.0;
    double fpr = s.N ? s.fp[k] / static_cast<double>(s.N) : 0.0;
    c.tpr.push_back(tpr);
    c.fpr.push_back(fpr);
    c.recall.push_back(tpr);
    c.precision.push_back(s.tp[k] / (s.tp[k] + s.fp[k]));
  }
  if (s.P > 0 && s.N > 0) c.auroc = auroc(scores, labels);
  c.aupr_success = average_precision(scores, labels);
  std::vector<double> neg(scores.size());
  std::vector<int> flipped(labels.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    neg[i] = -scores[i];
    flipped[i] = 1 - labels[i];
  }
  c.aupr_error = average_precision(neg, flipped);
  return c;
}

nlohmann::json DetectionCurves::to_json() const {
  nlohmann::json j = {{"aupr_success", aupr_success}, {"aupr_error", aupr_error}, {"thresholds", thresholds},
                      {"tpr", tpr},                   {"fpr", fpr},               {"precision", precision},
                      {"recall", recall}};
  j["auroc"] = auroc ? nlohmann::json(*auroc) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// NLL / perplexity

NllPerplexity nll_perplexity(const PredictionSet& p) {
  p.validate();
  if (p.size() == 0) throw DomainError("NLL of an empty prediction set");
  NllPerplexity r;
  double ln_sum = 0, log2_sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double fy = label_prob(p, i);
    if (fy < kProbClamp) ++r.clamped;
    fy = std::max(fy, kProbClamp);
    ln_sum += std::log(fy);
    log2_sum += std::log2(fy);
  }
  const double n = static_cast<double>(p.size());
  r.nll = -ln_sum / n;
  r.perplexity = std::exp2(-log2_sum / n);
  return r;
}

double entropy(std::span<const double> p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("correlation needs equal-length inputs");
  if (a.size() < 2) throw DomainError("correlation needs at least two points");
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;
  const double n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return saa == sbb ? 1.0 : 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  return pearson(average_ranks(a), average_ranks(b));
}

}  // namespace trustkit
