#include "trustkit/aleatoric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

GaussianHeadOutput split_gaussian_head(const Var& out) {
  if (out.cols() < 2) throw ShapeError("Gaussian head needs at least one mean column and a log-variance column");
  const std::size_t d = out.cols() - 1;
  return {slice_cols(out, 0, d), slice_cols(out, d, d + 1)};
}

Var hetero_nll(const GaussianHeadOutput& out, const Tensor& y) {
  const std::size_t n = out.mu.rows(), d = out.mu.cols();
  if (y.rows() != n || y.cols() != d) throw ShapeError("hetero_nll: target shape " + y.shape_string());
  if (out.log_var.rows() != n || out.log_var.cols() != 1) throw ShapeError("hetero_nll: log-variance must be n x 1");
  Var r2 = sum_rows(square(out.mu - out.mu.tape()->constant(y)));
  Var per = r2 * exp(-out.log_var) * 0.5 + out.log_var * (0.5 * static_cast<double>(d));
  return mean(per);
}

CheckpointTrace train_gaussian_head(MlpModel& model, const LabeledDataset& data, const TrainConfig& cfg) {
  if (data.targets.empty()) throw DomainError("Gaussian-head training needs regression targets");
  if (model.output_dim() != data.targets.cols() + 1)
    throw ShapeError("Gaussian head width must be target width + 1");
  const bool dropout = model.has_dropout();
  BatchObjective obj = [&](Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t seed) {
    ForwardOptions fo;
    fo.train_mode = dropout;
    fo.seed = seed;
    Var out = forward(model, theta, tape.constant(data.features(batch)), fo);
    return hetero_nll(split_gaussian_head(out), data.targets.select_rows(batch));
  };
  return train_loop(model.params(), data.size(), cfg, obj);
}

KendallResult kendall_from_passes(std::span<const Tensor> mus, std::span<const Tensor> variances, bool epistemic) {
  const std::size_t T = mus.size();
  if (T == 0 || variances.size() != T) throw DomainError("Kendall decomposition needs matching, nonempty passes");
  if (epistemic && T < 2) throw DomainError("epistemic variance needs at least two passes");
  const std::size_t n = mus[0].rows(), d = mus[0].cols();
  KendallResult r{Tensor({n, d}), Tensor({n, 1}), {}};
  // moments are shifted by the first pass so identical passes give exactly zero
  Tensor shift({n, d}), sq({n, d});
  const double inv = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (mus[t].rows() != n || mus[t].cols() != d || variances[t].rows() != n || variances[t].cols() != 1)
      throw ShapeError("Kendall passes disagree in shape");
    for (std::size_t j = 0; j < n * d; ++j) {
      double e = mus[t][j] - mus[0][j];
      shift[j] += inv * e;
      sq[j] += inv * e * e;
    }
    for (std::size_t i = 0; i < n; ++i) r.aleatoric[i] += inv * variances[t][i];
  }
  for (std::size_t j = 0; j < n * d; ++j) r.mean[j] = mus[0][j] + shift[j];
  if (epistemic) {
    r.epistemic = Tensor({n, d});
    for (std::size_t j = 0; j < n * d; ++j) r.epistemic[j] = std::max(0.0, sq[j] - shift[j] * shift[j]);
  }
  return r;
}

KendallResult kendall_uncertainties(const MlpModel& model, const Tensor& X, std::size_t T, std::uint64_t seed,
                                    bool epistemic) {
  if (model.output_dim() < 2) throw ShapeError("Kendall decomposition needs a Gaussian-head model");
  if (T == 0) throw DomainError("Kendall decomposition needs at least one pass");
  if (epistemic && T < 2) throw DomainError("epistemic variance needs at least two passes");
  const std::size_t d = model.output_dim() - 1;
  std::vector<Tensor> mus, vars;
  for (std::size_t t = 0; t < T; ++t) {
    ForwardOptions fo;
    fo.train_mode = model.has_dropout();
    fo.seed = mix_seed(seed, t);
    Tensor out = forward_values(model, X, fo);
    Tensor mu({out.rows(), d}), v({out.rows(), 1});
    for (std::size_t i = 0; i < out.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) mu(i, j) = out(i, j);
      v(i, 0) = std::exp(out(i, d));
    }
    mus.push_back(std::move(mu));
    vars.push_back(std::move(v));
  }
  return kendall_from_passes(mus, vars, epistemic);
}

std::size_t ExpertOutputs::dim() const {
  if (heads == 0 || outputs.cols() % heads != 0) throw ShapeError("expert outputs do not split into equal heads");
  return outputs.cols() / heads;
}

Var ExpertOutputs::head(std::size_t m) const {
  const std::size_t d = dim();
  if (m >= heads) throw ShapeError("expert head index out of range");
  return slice_cols(outputs, m * d, (m + 1) * d);
}

Var head_sq_errors(const ExpertOutputs& e, const Tensor& y) {
  const std::size_t d = e.dim(), n = e.outputs.rows();
  if (y.rows() != n || y.cols() != d) throw ShapeError("expert targets must be n x d");
  Var yc = e.outputs.tape()->constant(y);
  Var acc;
  for (std::size_t m = 0; m < e.heads; ++m) {
    Var col = pad_cols(sum_rows(square(e.head(m) - yc)), m, e.heads);
    acc = m == 0 ? col : acc + col;
  }
  return acc;
}

MogResult mog_nll(const ExpertOutputs& e, const Tensor& y) {
  if (!(e.sigma2 > 0)) throw DomainError("mixture variance must be positive");
  const double d = static_cast<double>(e.dim());
  Var E = head_sq_errors(e, y) * (-0.5 / e.sigma2);
  Var per = -logsumexp_rows(E) + (std::log(static_cast<double>(e.heads)) + 0.5 * d * std::log(e.sigma2));
  Tensor w = E.value();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < w.cols(); ++m) mx = std::max(mx, w(i, m));
    double z = 0;
    for (std::size_t m = 0; m < w.cols(); ++m) z += (w(i, m) = std::exp(w(i, m) - mx));
    for (std::size_t m = 0; m < w.cols(); ++m) w(i, m) /= z;
  }
  return {mean(per), w};
}

WtaResult wta_from_losses(const Var& losses) {
  const std::size_t n = losses.rows(), M = losses.cols();
  if (n == 0 || M == 0) throw ShapeError("WTA needs at least one row and one head");
  WtaResult r;
  r.mask = Tensor({n, M});
  const Tensor& L = losses.value();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < M; ++m)
      if (L(i, m) < L(i, best)) best = m;
    r.winner.push_back(best);
    r.mask(i, best) = 1.0;
  }
  r.loss = sum(losses * losses.tape()->constant(r.mask)) * (1.0 / static_cast<double>(n));
  return r;
}

WtaResult wta_loss(const ExpertOutputs& e, const Tensor& y) { return wta_from_losses(head_sq_errors(e, y)); }

CatchupResult catchup_loss(const ExpertOutputs& e, std::span<const Tensor> label_sets, double beta) {
  const std::size_t n = e.outputs.rows(), M = e.heads, d = e.dim();
  if (label_sets.size() != n) throw ShapeError("catch-up loss needs one label set per row");
  Tape& tape = *e.outputs.tape();
  Var div, catchup;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& Y = label_sets[i];
    if (Y.empty()) throw DomainError("label set is empty");
    if (Y.cols() != d) throw ShapeError("label set width differs from head width");
    // losses[c][k] = |f_c(x_i) - y_k|^2
    std::vector<std::vector<Var>> l(M);
    for (std::size_t c = 0; c < M; ++c) {
      Var f = slice_range(e.outputs, i * M * d + c * d, 1, d);
      for (std::size_t k = 0; k < Y.rows(); ++k) l[c].push_back(sum(square(f - tape.constant(Y.row_slice(k)))));
    }
    for (std::size_t k = 0; k < Y.rows(); ++k) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < M; ++c)
        if (l[c][k].item() < l[best][k].item()) best = c;
      div = div.valid() ? div + l[best][k] : l[best][k];
    }
    Var worst;
    double worst_v = -1;
    for (std::size_t c = 0; c < M; ++c) {
      std::size_t nearest = 0;
      for (std::size_t k = 1; k < Y.rows(); ++k)
        if (l[c][k].item() < l[c][nearest].item()) nearest = k;
      if (l[c][nearest].item() > worst_v) {
        worst_v = l[c][nearest].item();
        worst = l[c][nearest];
      }
    }
    catchup = catchup.valid() ? catchup + worst : worst;
  }
  const double inv = 1.0 / static_cast<double>(n);
  CatchupResult r;
  r.div = div * inv;
  r.catchup = catchup * (inv / static_cast<double>(M));
  r.combined = beta == 0.0 ? r.div : r.div + r.catchup * beta;
  return r;
}

void init_heads_at_quantiles(MlpModel& model, const Tensor& targets, double weight_scale) {
  const std::size_t M = model.heads(), d = model.classes(), L = model.num_layers() - 1;
  if (targets.empty() || targets.cols() != d) throw ShapeError("head width must equal the target width");
  auto& th = model.params();
  for (std::size_t i = model.weight_offset(L); i < model.bias_offset(L); ++i) th[i] *= weight_scale;
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col(targets.rows());
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = targets(i, j);
    std::sort(col.begin(), col.end());
    for (std::size_t m = 0; m < M; ++m) {
      double pos = (static_cast<double>(m) + 0.5) / static_cast<double>(M) * static_cast<double>(col.size() - 1);
      std::size_t k = static_cast<std::size_t>(pos);
      double frac = pos - static_cast<double>(k);
      double q = k + 1 < col.size() ? col[k] + frac * (col[k + 1] - col[k]) : col[k];
      th[model.bias_offset(L) + m * d + j] = q;
    }
  }
}

CheckpointTrace train_multihead(MlpModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                                MultiHeadLoss kind, double sigma2) {
  if (data.targets.empty()) throw DomainError("multi-head training needs regression targets");
  if (model.classes() != data.targets.cols()) throw ShapeError("head width must equal the target width");
  BatchObjective obj = [&](Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t seed) {
    ForwardOptions fo;
    fo.train_mode = model.has_dropout();
    fo.seed = seed;
    ExpertOutputs e{forward(model, theta, tape.constant(data.features(batch)), fo), model.heads(), sigma2};
    Tensor y = data.targets.select_rows(batch);
    return kind == MultiHeadLoss::wta ? wta_loss(e, y).loss : mog_nll(e, y).loss;
  };
  return train_loop(model.params(), data.size(), cfg, obj);
}

std::vector<UncertaintyBin> uncertainty_bins(std::span<const double> x, std::span<const double> true_sigma,
                                             std::span<const double> pred_sigma, std::size_t bins) {
  if (x.size() != true_sigma.size() || x.size() != pred_sigma.size()) throw ShapeError("uncertainty bins: size mismatch");
  if (bins == 0 || x.empty()) throw DomainError("uncertainty bins need data and at least one bin");
  auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it, w = (hi - lo) / static_cast<double>(bins);
  std::vector<UncertaintyBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].x_lo = lo + w * static_cast<double>(b);
    out[b].x_hi = b + 1 == bins ? hi : lo + w * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t b = w > 0 ? std::min(bins - 1, static_cast<std::size_t>((x[i] - lo) / w)) : 0;
    out[b].count++;
    out[b].true_sigma += true_sigma[i];
    out[b].pred_sigma += pred_sigma[i];
  }
  std::vector<UncertaintyBin> kept;
  for (auto& b : out) {
    if (b.count == 0) continue;
    b.true_sigma /= static_cast<double>(b.count);
    b.pred_sigma /= static_cast<double>(b.count);
    kept.push_back(b);
  }
  return kept;
}

std::string uncertainty_csv(std::span<const UncertaintyBin> bins) {
  std::ostringstream os;
  os.precision(10);
  os << "x_lo,x_hi,count,true_sigma,pred_sigma\n";
  for (const auto& b : bins)
    os << b.x_lo << ',' << b.x_hi << ',' << b.count << ',' << b.true_sigma << ',' << b.pred_sigma << '\n';
  return os.str();
}

}  // namespace trustkit
