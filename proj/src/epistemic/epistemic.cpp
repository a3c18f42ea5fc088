#include "trustkit/epistemic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/log.hpp"
#include "trustkit/metrics.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

Eigen::Map<const Mat> as_eigen(const Tensor& t) { return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                                          static_cast<Eigen::Index>(t.cols())}; }

Tensor from_eigen(const Mat& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), t.data().begin());
  return t;
}

// Class probabilities from logits; a single column is a Bernoulli logit.
Tensor probs_from_logits(const Tensor& logits) {
  if (logits.cols() != 1) return softmax_rows(logits);
  Tensor p({logits.rows(), 2});
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-logits(i, 0)));
    p(i, 0) = 1.0 - s;
    p(i, 1) = s;
  }
  return p;
}

Tensor probs_at(const MlpModel& tmpl, std::vector<double> theta, const Tensor& X, const ForwardOptions& fo = {}) {
  if (theta.size() != tmpl.param_count()) throw ShapeError("posterior draw does not match the model size");
  MlpModel m = tmpl;
  m.set_params(std::move(theta));
  return probs_from_logits(fo.train_mode ? forward_values(m, X, fo) : m.predict(X));
}

std::vector<double> gaussian_draw(std::span<const double> mu, std::span<const double> sd, Rng rng) {
  std::vector<double> th(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) th[i] = mu[i] + sd[i] * rng.normal();
  return th;
}

}  // namespace

std::string sampler_kind(const PosteriorSampler& s) {
  static const char* names[] = {"ensemble", "mc-dropout", "gaussian-diag", "swag", "curve"};
  return names[s.index()];
}

std::vector<double> BmaResult::mutual_information() const {
  std::vector<double> mi(entropy_of_mean.size());
  for (std::size_t i = 0; i < mi.size(); ++i) mi[i] = std::max(0.0, entropy_of_mean[i] - mean_entropy[i]);
  return mi;
}

BmaResult bma_from_members(std::span<const Tensor> member_probs) {
  if (member_probs.empty()) throw DomainError("BMA needs at least one member");
  const std::size_t n = member_probs[0].rows(), k = member_probs[0].cols();
  BmaResult r;
  r.draws = member_probs.size();
  r.mean_probs = Tensor({n, k});
  r.variance = Tensor({n, k});
  r.mean_entropy.assign(n, 0.0);
  const double inv = 1.0 / static_cast<double>(r.draws);
  for (const Tensor& p : member_probs) {
    if (p.rows() != n || p.cols() != k) throw ShapeError("BMA members disagree in shape");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) r.mean_probs(i, c) += inv * p(i, c);
      r.mean_entropy[i] += inv * entropy(std::span<const double>(p.data().data() + i * k, k));
    }
  }
  for (const Tensor& p : member_probs)
    for (std::size_t j = 0; j < n * k; ++j) {
      double d = p[j] - r.mean_probs[j];
      r.variance[j] += inv * d * d;
    }
  r.entropy_of_mean.resize(n);
  r.max_prob.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> row(r.mean_probs.data().data() + i * k, k);
    r.entropy_of_mean[i] = entropy(row);
    r.max_prob[i] = *std::max_element(row.begin(), row.end());
  }
  return r;
}

BmaResult predict_bma(const PosteriorSampler& sampler, const MlpModel& tmpl, const Tensor& X, std::size_t K,
                      std::uint64_t seed) {
  std::vector<Tensor> members;
  if (const auto* e = std::get_if<EnsembleSampler>(&sampler)) {
    for (const auto& th : e->members) members.push_back(probs_at(tmpl, th, X));
    return bma_from_members(members);
  }
  if (K < 1) throw DomainError("BMA needs at least one draw");
  const Rng root(seed);
  for (std::size_t k = 0; k < K; ++k) {
    if (const auto* d = std::get_if<McDropoutSampler>(&sampler)) {
      if (!tmpl.has_dropout()) throw DomainError("MC dropout needs a model with dropout");
      ForwardOptions fo;
      fo.train_mode = true;
      fo.seed = mix_seed(seed, k);
      members.push_back(probs_at(tmpl, d->theta, X, fo));
    } else if (const auto* g = std::get_if<GaussianDiagSampler>(&sampler)) {
      if (g->sigma.size() != g->mu.size()) throw ShapeError("Gaussian posterior: mu and sigma differ in size");
      members.push_back(probs_at(tmpl, gaussian_draw(g->mu, g->sigma, root.split(k)), X));
    } else if (const auto* s = std::get_if<SwagSampler>(&sampler)) {
      const std::size_t p = s->mu.size();
      Rng rng = root.split(k);
      std::vector<double> th(p);
      if (s->full()) {
        Mat cov = Eigen::Map<const Mat>(s->cov.data(), p, p);
        cov.diagonal().array() += s->damping;
        Eigen::LLT<Mat> llt(cov);
        if (llt.info() != Eigen::Success) throw NumericError("SWAG covariance is not positive definite");
        Vec z(p);
        for (std::size_t i = 0; i < p; ++i) z[i] = rng.normal();
        Vec dz = llt.matrixL() * z;
        for (std::size_t i = 0; i < p; ++i) th[i] = s->mu[i] + dz[i];
      } else {
        for (std::size_t i = 0; i < p; ++i) th[i] = s->mu[i] + std::sqrt(s->diag[i] + s->damping) * rng.normal();
      }
      members.push_back(probs_at(tmpl, std::move(th), X));
    } else if (const auto* c = std::get_if<CurveSampler>(&sampler)) {
      double t = root.split(k).uniform();
      members.push_back(probs_at(tmpl, curve_param(c->theta1, c->theta2, c->phi, t), X));
    }
  }
  return bma_from_members(members);
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t m) { return m == 0 ? seed : mix_seed(seed, m); }

EnsembleSampler ensemble_train(const MlpModel& tmpl, const LabeledDataset& data, std::size_t M,
                               const TrainConfig& cfg, LossKind kind) {
  if (M < 1) throw DomainError("ensemble needs at least one member");
  EnsembleSampler e;
  for (std::size_t m = 0; m < M; ++m) {
    MlpModel model = tmpl;
    TrainConfig c = cfg;
    c.seed = member_seed(cfg.seed, m);
    model.initialize(c.seed);
    train_sgd(model, data, c, kind);
    e.members.push_back(model.params());
  }
  return e;
}

BmaResult mc_dropout_predict(const MlpModel& model, const Tensor& X, std::size_t K, std::uint64_t seed) {
  if (!model.has_dropout()) throw DomainError("MC dropout needs a model with dropout");
  return predict_bma(McDropoutSampler{model.params()}, model, X, K, seed);
}

double gaussian_kl(std::span<const double> mu, std::span<const double> sigma, double prior) {
  if (mu.size() != sigma.size()) throw ShapeError("gaussian_kl: mu and sigma differ in size");
  if (!(prior > 0)) throw DomainError("prior scale must be positive");
  double kl = 0, s2 = prior * prior;
  for (std::size_t i = 0; i < mu.size(); ++i)
    kl += (sigma[i] * sigma[i] + mu[i] * mu[i]) / (2 * s2) - std::log(sigma[i]) + std::log(prior) - 0.5;
  return kl;
}

Var gaussian_kl(const Var& mu, const Var& sigma, double prior) {
  if (!(prior > 0)) throw DomainError("prior scale must be positive");
  const double p = static_cast<double>(mu.rows() * mu.cols());
  Var quad = sum(square(sigma) + square(mu)) * (1.0 / (2 * prior * prior));
  return (quad - sum(log(sigma))) + p * (std::log(prior) - 0.5);
}

Var bbb_sigma(const Var& rho) { return clamp_min(softplus(rho), kMinSigma); }

Var bbb_elbo(const MlpModel& model, const Var& mu, const Var& rho, const Tensor& X, const Tensor& targets,
             LossKind kind, std::size_t n_total, std::uint64_t seed, const BbbConfig& cfg) {
  if (cfg.samples < 1) throw DomainError("BBB needs at least one sample");
  if (X.rows() == 0) throw DomainError("BBB batch is empty");
  Tape& tape = *mu.tape();
  Var sigma = bbb_sigma(rho);
  Var kl = gaussian_kl(mu, sigma, cfg.prior_sigma);
  const Var x = tape.constant(X);
  const double w = static_cast<double>(n_total) / static_cast<double>(X.rows());
  const Rng root(seed);
  Var nll;
  for (std::size_t k = 0; k < cfg.samples; ++k) {
    Rng rng = root.split(k);
    Tensor eps(mu.value().shape());
    for (auto& v : eps.values()) v = rng.normal();
    Var theta = mu + sigma * tape.constant(eps);
    Var term = sum(per_sample_loss(forward(model, theta, x), targets, kind));
    nll = k == 0 ? term : nll + term;
  }
  return kl + nll * (w / static_cast<double>(cfg.samples));
}

GaussianDiagSampler train_bbb(const MlpModel& tmpl, const LabeledDataset& data, const TrainConfig& train,
                              const BbbConfig& cfg, LossKind kind) {
  if (data.size() == 0) throw DomainError("training set is empty");
  const std::size_t p = tmpl.param_count(), n = data.size();
  std::vector<double> theta = tmpl.params();
  theta.resize(2 * p, cfg.rho_init);
  BatchObjective obj = [&](Tape& tape, const Var& th, std::span<const std::size_t> batch, std::uint64_t seed) {
    (void)tape;
    Var mu = slice_cols(th, 0, p), rho = slice_cols(th, p, 2 * p);
    return bbb_elbo(tmpl, mu, rho, data.features(batch), data.loss_targets(batch, kind), kind, n, seed, cfg) *
           (1.0 / static_cast<double>(n));
  };
  train_loop(theta, n, train, obj);
  GaussianDiagSampler g;
  g.mu.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(p));
  for (std::size_t i = 0; i < p; ++i) {
    double r = theta[p + i];
    double sp = r > 30 ? r : std::log1p(std::exp(r));
    g.sigma.push_back(std::max(sp, kMinSigma));
  }
  return g;
}

SwagSampler fit_swag(const CheckpointTrace& trace, std::size_t L, bool diag, bool per_step) {
  std::vector<const std::vector<double>*> snaps;
  if (per_step)
    for (const auto& e : trace.entries) snaps.push_back(&e.theta);
  else
    for (const auto& s : trace.epoch_snapshots) snaps.push_back(&s);
  if (L < 1) throw DomainError("SWAG needs at least one snapshot");
  if (L > snaps.size())
    throw DomainError("SWAG asked for " + std::to_string(L) + " snapshots but the trace holds " +
                      std::to_string(snaps.size()));
  snaps.erase(snaps.begin(), snaps.end() - static_cast<std::ptrdiff_t>(L));
  const std::size_t p = snaps[0]->size();
  if (!diag && p > kSwagMaxFullParams)
    throw CapacityError("full SWAG covariance is limited to " + std::to_string(kSwagMaxFullParams) + " parameters");
  Mat S(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(p));
  for (std::size_t l = 0; l < L; ++l) S.row(l) = Eigen::Map<const Eigen::RowVectorXd>(snaps[l]->data(), p);
  Eigen::RowVectorXd mu = S.colwise().mean();
  Mat C = S.rowwise() - mu;
  SwagSampler s;
  s.mu.assign(mu.data(), mu.data() + p);
  Eigen::RowVectorXd var = C.array().square().colwise().sum() / static_cast<double>(L);
  s.diag.assign(var.data(), var.data() + p);
  if (!diag) {
    Mat cov = (C.transpose() * C) / static_cast<double>(L);
    s.cov.assign(cov.data(), cov.data() + cov.size());
  }
  return s;
}

std::vector<double> curve_param(std::span<const double> t1, std::span<const double> t2, std::span<const double> phi,
                                double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("curve parameter t must lie in [0, 1]");
  if (t1.size() != phi.size() || t2.size() != phi.size()) throw ShapeError("curve endpoints differ in size");
  std::vector<double> th(phi.size());
  for (std::size_t i = 0; i < th.size(); ++i)
    th[i] = t < 0.5 ? 2 * (t * phi[i] + (0.5 - t) * t1[i]) : 2 * ((t - 0.5) * t2[i] + (1 - t) * phi[i]);
  return th;
}

Var curve_param(const Var& t1, const Var& t2, const Var& phi, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("curve parameter t must lie in [0, 1]");
  if (t < 0.5) return phi * (2 * t) + t1 * (1 - 2 * t);
  return t2 * (2 * t - 1) + phi * (2 * (1 - t));
}

std::vector<double> train_curve(const MlpModel& tmpl, std::span<const double> theta1, std::span<const double> theta2,
                                const LabeledDataset& data, const TrainConfig& cfg, LossKind kind) {
  if (theta1.size() != tmpl.param_count() || theta2.size() != tmpl.param_count())
    throw ShapeError("curve endpoints do not match the model size");
  std::vector<double> phi(theta1.size());
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = 0.5 * (theta1[i] + theta2[i]);
  const Tensor a = Tensor::row({theta1.begin(), theta1.end()}), b = Tensor::row({theta2.begin(), theta2.end()});
  BatchObjective obj = [&](Tape& tape, const Var& th, std::span<const std::size_t> batch, std::uint64_t seed) {
    double t = Rng(seed).split(0x43).uniform();
    Var theta = curve_param(tape.constant(a), tape.constant(b), th, t);
    return loss(forward(tmpl, theta, tape.constant(data.features(batch))), data.loss_targets(batch, kind), kind);
  };
  train_loop(phi, data.size(), cfg, obj);
  return phi;
}

Tensor MahalanobisScorer::distances(const Tensor& F) const {
  if (F.cols() != means.cols()) throw ShapeError("Mahalanobis: feature width mismatch");
  auto f = as_eigen(F);
  auto mu = as_eigen(means);
  auto P = as_eigen(precision);
  Mat D(f.rows(), mu.rows());
  for (Eigen::Index k = 0; k < mu.rows(); ++k) {
    Mat diff = f.rowwise() - mu.row(k);
    D.col(k) = ((diff * P).array() * diff.array()).rowwise().sum();
  }
  return from_eigen(D);
}

MahalanobisScorer fit_mahalanobis(const Tensor& features, std::span<const int> labels, std::size_t classes,
                                  std::optional<double> damping) {
  const std::size_t n = features.rows(), q = features.cols();
  if (labels.size() != n) throw ShapeError("Mahalanobis: label count mismatch");
  if (n == 0 || classes == 0) throw DomainError("Mahalanobis needs data and classes");
  auto f = as_eigen(features);
  Mat mu = Mat::Zero(classes, q);
  std::vector<double> cnt(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) throw DomainError("Mahalanobis: bad label");
    mu.row(labels[i]) += f.row(i);
    cnt[labels[i]] += 1;
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (cnt[k] == 0) throw DomainError("Mahalanobis: class " + std::to_string(k) + " has no samples");
    mu.row(k) /= cnt[k];
  }
  Mat cov = Mat::Zero(q, q);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::RowVectorXd d = f.row(i) - mu.row(labels[i]);
    cov.noalias() += d.transpose() * d;
  }
  cov /= static_cast<double>(n);
  double lam = damping.value_or(0.0);
  if (!damping) {
    double tr = cov.trace();
    lam = tr > 0 ? 1e-6 * tr / static_cast<double>(q) : 1e-6;
  }
  if (lam < 0) throw DomainError("Mahalanobis damping must be non-negative");
  Mat reg = cov;
  reg.diagonal().array() += lam;
  Eigen::SelfAdjointEigenSolver<Mat> es(reg);
  const auto& ev = es.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff()))
    throw NumericError("tied covariance is singular; fit with a positive damping");
  Mat P = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  MahalanobisScorer s;
  s.means = from_eigen(mu);
  s.cov = from_eigen(cov);
  s.precision = from_eigen(P);
  s.damping = lam;
  return s;
}

std::vector<double> score_mahalanobis(const MahalanobisScorer& s, const Tensor& features) {
  Tensor D = s.distances(features);
  std::vector<double> c(D.rows());
  for (std::size_t i = 0; i < D.rows(); ++i) {
    double m = D(i, 0);
    for (std::size_t k = 1; k < D.cols(); ++k) m = std::min(m, D(i, k));
    c[i] = -m;
  }
  return c;
}

DuqState DuqState::from_centroids(const Tensor& centroids, double sigma, double gamma) {
  DuqState s;
  s.sums = centroids.as_matrix();
  s.counts.assign(s.sums.rows(), 1.0);
  s.sigma = sigma;
  s.gamma = gamma;
  s.validate();
  return s;
}

Tensor DuqState::centroids() const {
  Tensor c = sums;
  for (std::size_t k = 0; k < c.rows(); ++k)
    for (std::size_t j = 0; j < c.cols(); ++j) c(k, j) = sums(k, j) / counts[k];
  return c;
}

void DuqState::validate() const {
  if (!(sigma > 0)) throw DomainError("DUQ length scale must be positive");
  if (!(gamma >= 0 && gamma < 1)) throw DomainError("DUQ momentum must lie in [0, 1)");
  if (counts.size() != sums.rows()) throw ShapeError("DUQ counts and sums disagree");
  for (double c : counts)
    if (!(c > 0)) throw NumericError("DUQ centroid count must be positive");
}

Var duq_scores(const DuqState& state, const Var& features) {
  state.validate();
  const Tensor C = state.centroids();
  const std::size_t n = features.rows(), K = C.rows(), q = C.cols();
  if (features.cols() != q) throw ShapeError("DUQ: feature width mismatch");
  Tape& tape = *features.tape();
  Var dist;
  for (std::size_t k = 0; k < K; ++k) {
    Var ck = broadcast_to(tape.constant(C.row_slice(k)), n, q);
    Var col = pad_cols(sum_rows(square(features - ck)), k, K);
    dist = k == 0 ? col : dist + col;
  }
  return exp(dist * (-1.0 / (2 * state.sigma * state.sigma)));
}

Tensor duq_scores(const DuqState& state, const Tensor& features) {
  state.validate();
  const Tensor C = state.centroids();
  if (features.cols() != C.cols()) throw ShapeError("DUQ: feature width mismatch");
  Tensor s({features.rows(), C.rows()});
  for (std::size_t i = 0; i < features.rows(); ++i)
    for (std::size_t k = 0; k < C.rows(); ++k) {
      double d = 0;
      for (std::size_t j = 0; j < C.cols(); ++j) {
        double e = features(i, j) - C(k, j);
        d += e * e;
      }
      s(i, k) = std::exp(-d / (2 * state.sigma * state.sigma));
    }
  return s;
}

Var duq_loss(const Var& scores, std::span<const int> labels) {
  const std::size_t n = scores.rows(), K = scores.cols();
  if (labels.size() != n) throw ShapeError("DUQ loss: label count mismatch");
  Tensor Y({n, K}), notY({n, K}, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K) throw DomainError("DUQ loss: bad label");
    Y(i, labels[i]) = 1.0;
    notY(i, labels[i]) = 0.0;
  }
  constexpr double eps = 1e-12;
  Tape& tape = *scores.tape();
  Var s = -clamp_min(-clamp_min(scores, eps), -(1 - eps));
  Var ll = tape.constant(Y) * log(s) + tape.constant(notY) * log(add_scalar(-s, 1.0));
  return sum(ll) * (-1.0 / static_cast<double>(n));
}

void duq_ema_update(DuqState& state, const Tensor& features, std::span<const int> labels) {
  state.validate();
  const std::size_t K = state.sums.rows(), q = state.sums.cols();
  if (features.cols() != q || labels.size() != features.rows()) throw ShapeError("DUQ update: shape mismatch");
  std::vector<double> nk(K, 0.0);
  Tensor fk({K, q});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K) throw DomainError("DUQ update: bad label");
    nk[labels[i]] += 1;
    for (std::size_t j = 0; j < q; ++j) fk(labels[i], j) += features(i, j);
  }
  const double g = state.gamma;
  for (std::size_t k = 0; k < K; ++k) {
    if (nk[k] == 0) continue;
    state.counts[k] = g * state.counts[k] + (1 - g) * nk[k];
    for (std::size_t j = 0; j < q; ++j) state.sums(k, j) = g * state.sums(k, j) + (1 - g) * fk(k, j);
  }
}

DuqModel duq_train(const MlpModel& feature_template, const LabeledDataset& data, const DuqConfig& cfg) {
  if (data.size() == 0) throw DomainError("training set is empty");
  log_debug("duq: length scale held fixed at " + std::to_string(cfg.sigma));
  const std::size_t K = data.num_classes;
  DuqModel out{feature_template, {}};
  const Tensor F0 = out.features.predict(data.X);
  Tensor C({K, F0.cols()});
  std::vector<double> cnt(K, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    cnt[data.labels[i]] += 1;
    for (std::size_t j = 0; j < F0.cols(); ++j) C(data.labels[i], j) += F0(i, j);
  }
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < C.cols(); ++j) C(k, j) /= std::max(cnt[k], 1.0);
  out.state = DuqState::from_centroids(C, cfg.sigma, cfg.gamma);
  const MlpModel& net = out.features;
  BatchObjective obj = [&](Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t) {
    std::vector<int> y;
    for (std::size_t r : batch) y.push_back(data.labels[r]);
    Var f = forward(net, theta, tape.constant(data.features(batch)));
    Var l = duq_loss(duq_scores(out.state, f), y);
    // centroids for the next step follow the features seen in this one
    duq_ema_update(out.state, f.value(), y);
    return l;
  };
  train_loop(out.features.params(), data.size(), cfg.train, obj);
  return out;
}

OodRow ood_row(const std::string& method, std::span<const double> id_conf, std::span<const double> ood_conf) {
  std::vector<double> s(id_conf.begin(), id_conf.end());
  s.insert(s.end(), ood_conf.begin(), ood_conf.end());
  std::vector<int> lab(id_conf.size(), 1);
  lab.resize(s.size(), 0);
  DetectionCurves c = detection_metrics(s, lab);
  if (!c.auroc) throw DomainError("OOD evaluation needs both ID and OOD samples");
  return {method, *c.auroc, c.aupr_success, c.aupr_error};
}

std::string ood_csv(std::span<const OodRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "method,auroc,aupr_in,aupr_out\n";
  for (const auto& r : rows) os << r.method << ',' << r.auroc << ',' << r.aupr_in << ',' << r.aupr_out << '\n';
  return os.str();
}

}  // namespace trustkit
