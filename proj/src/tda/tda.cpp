#include "trustkit/tda.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "trustkit/errors.hpp"
#include "trustkit/grad.hpp"
#include "trustkit/metrics.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

Eigen::Map<const RowMat> as_eigen(const Tensor& t) {
  return {t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<const Vec> as_vec(std::span<const double> v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

void check_dense(std::size_t p) {
  if (p > kTdaMaxParams)
    throw CapacityError("dense curvature needs p <= " + std::to_string(kTdaMaxParams) + ", got " + std::to_string(p));
}

// Weighted loss sum over `rows` scaled by `norm`, plus the ridge term.
ScalarFn weighted_objective(const InfluenceProblem& pr, std::vector<std::size_t> rows, std::vector<double> w,
                            double norm) {
  Tensor Xs = pr.X.select_rows(rows), Ts = pr.targets.select_rows(rows);
  return [&pr, Xs, Ts, w = std::move(w), norm](const Var& theta) {
    Tape& tape = *theta.tape();
    Var l = per_sample_loss(forward(pr.model, theta, tape.constant(Xs)), Ts, pr.kind);
    Var out = scale(sum(l * tape.constant(Tensor::column(w))), 1.0 / norm);
    if (pr.weight_decay > 0) out = add(out, scale(dot(theta, theta), 0.5 * pr.weight_decay));
    return out;
  };
}

ScalarFn full_objective(const InfluenceProblem& pr, std::size_t exclude) {
  std::vector<std::size_t> rows(pr.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> w = pr.weights;
  if (exclude < w.size()) w[exclude] = 0.0;
  return weighted_objective(pr, std::move(rows), std::move(w), static_cast<double>(pr.size()));
}

ScalarFn sample_loss(const InfluenceProblem& pr, const Tensor& x, const Tensor& target) {
  return [&pr, x, target](const Var& theta) {
    return sum(per_sample_loss(forward(pr.model, theta, theta.tape()->constant(x)), target, pr.kind));
  };
}

double eval(const ScalarFn& f, std::span<const double> theta) {
  Tape tape;
  Tape::NoGradGuard guard(tape);
  return f(tape.constant(Tensor::row({theta.begin(), theta.end()}))).item();
}

void require_same_p(const Tensor& H, std::size_t p) {
  if (H.rows() != H.cols() || H.rows() != p) throw ShapeError("Hessian shape " + H.shape_string() + " mismatch");
}

}  // namespace

InfluenceProblem InfluenceProblem::from(const MlpModel& model, const LabeledDataset& data, LossKind kind,
                                        double weight_decay) {
  InfluenceProblem p{model, data.X, data.loss_targets(data.all_rows(), kind), kind, weight_decay, {}};
  p.weights.assign(data.size(), 1.0);
  return p;
}

Tensor InfluenceProblem::target_row(std::size_t j) const { return targets.row_slice(j); }

double InfluenceProblem::loss_at(std::span<const double> theta, const Tensor& x, const Tensor& target) const {
  return eval(sample_loss(*this, x, target), theta);
}

std::vector<double> InfluenceProblem::grad_at(const Tensor& x, const Tensor& target) const {
  return grad_at(model.params(), x, target);
}

std::vector<double> InfluenceProblem::grad_at(std::span<const double> theta, const Tensor& x,
                                              const Tensor& target) const {
  if (x.rows() != 1 || target.rows() != 1) throw ShapeError("grad_at expects a single sample");
  return gradient(sample_loss(*this, x, target), theta);
}

std::vector<double> InfluenceProblem::sample_grad(std::size_t j) const { return sample_grad(model.params(), j); }

std::vector<double> InfluenceProblem::sample_grad(std::span<const double> theta, std::size_t j) const {
  if (j >= size()) throw DomainError("sample index out of range");
  return grad_at(theta, X.row_slice(j), target_row(j));
}

Tensor InfluenceProblem::train_gradients() const {
  const std::size_t n = size(), p = param_count();
  Tensor G({n, p});
  for (std::size_t j = 0; j < n; ++j) {
    auto g = sample_grad(j);
    std::copy(g.begin(), g.end(), G.values().begin() + static_cast<std::ptrdiff_t>(j * p));
  }
  return G;
}

double InfluenceProblem::objective(std::span<const double> theta, std::size_t exclude) const {
  return eval(full_objective(*this, exclude), theta);
}

Tensor InfluenceProblem::hessian() const {
  check_dense(param_count());
  const std::size_t p = param_count();
  return Tensor::matrix(p, p, trustkit::hessian(full_objective(*this, kNone), model.params()));
}

std::vector<double> InfluenceProblem::hvp(std::span<const double> v) const {
  return trustkit::hvp(full_objective(*this, kNone), model.params(), v);
}

std::vector<double> InfluenceProblem::hvp(std::span<const double> v, std::span<const std::size_t> rows) const {
  if (rows.empty()) throw DomainError("HVP batch is empty");
  std::vector<double> w;
  for (std::size_t r : rows) w.push_back(weights.at(r));
  return trustkit::hvp(weighted_objective(*this, {rows.begin(), rows.end()}, std::move(w),
                                          static_cast<double>(rows.size())),
                       model.params(), v);
}

std::string InfluenceReport::to_csv(std::span<const int> labels, std::span<const int> flipped) const {
  std::ostringstream os;
  os.precision(12);
  os << "sample,score,label,flipped\n";
  for (std::size_t j = 0; j < scores.size(); ++j) {
    os << j << ',' << scores[j] << ',';
    if (j < labels.size()) os << labels[j];
    os << ',';
    if (j < flipped.size()) os << flipped[j];
    os << '\n';
  }
  return os.str();
}

std::vector<double> damped_solve(const Tensor& H, std::span<const double> v, double damping) {
  require_same_p(H, v.size());
  if (damping < 0) throw DomainError("damping must be non-negative");
  const auto p = static_cast<Eigen::Index>(v.size());
  Mat A = as_eigen(H);
  A = 0.5 * (A + A.transpose()) + damping * Mat::Identity(p, p);
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericError("Hessian plus damping " + std::to_string(damping) +
                       " is not positive definite; increase the damping lambda_d");
  Vec b = as_vec(v);
  Vec x = llt.solve(b);
  double resid = (A * x - b).norm();
  if (resid > 1e-8 * std::max(1.0, b.norm()))
    throw NumericError("damped solve residual " + std::to_string(resid) + " exceeds 1e-8; increase damping");
  return to_std(x);
}

InfluenceReport influence_from_hessian(const Tensor& H, std::span<const double> test_grad, const Tensor& train_grads,
                                       double damping) {
  if (train_grads.cols() != test_grad.size()) throw ShapeError("training gradients differ in width");
  auto s = damped_solve(H, test_grad, damping);
  InfluenceReport r;
  r.method = "exact";
  r.damping = damping;
  Vec sc = as_eigen(train_grads) * as_vec(s);
  r.scores = to_std(sc);
  return r;
}

InfluenceReport exact_influence(const InfluenceProblem& problem, const Tensor& x, const Tensor& target,
                                double damping) {
  return influence_from_hessian(problem.hessian(), problem.grad_at(x, target), problem.train_gradients(), damping);
}

HvpOracle problem_hvp_oracle(const InfluenceProblem& problem, std::size_t batch_size) {
  if (batch_size == 0) throw DomainError("HVP batch size must be positive");
  return [&problem, batch_size](std::span<const double> v, std::uint64_t seed) {
    const std::size_t n = problem.size();
    if (batch_size >= n) return problem.hvp(v);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(batch_size);
    return problem.hvp(v, idx);
  };
}

LissaResult lissa_ihvp(const HvpOracle& oracle, std::span<const double> v, const LissaConfig& cfg) {
  if (!(cfg.scale > 0)) throw DomainError("LiSSA scale must be positive");
  if (cfg.repeats < 1 || cfg.iterations < 1) throw DomainError("LiSSA needs at least one repeat and iteration");
  const Vec b = as_vec(v);
  const double bound = b.norm();
  Vec acc = Vec::Zero(b.size());
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    Vec h = b;
    for (std::size_t i = 1; i <= cfg.iterations; ++i) {
      std::uint64_t s = mix_seed(cfg.seed, r * 1000003 + i);
      auto hv = oracle(std::span<const double>(h.data(), static_cast<std::size_t>(h.size())), s);
      Vec Hh = as_vec(hv) + cfg.damping * h;
      h = b + h - Hh / cfg.scale;
      if (!std::isfinite(h.norm()) || h.norm() > 10.0 * static_cast<double>(i + 1) * bound)
        throw NumericError("LiSSA diverged at iteration " + std::to_string(i) + "; increase the scale (now " +
                           std::to_string(cfg.scale) + ")");
    }
    acc += h;
  }
  LissaResult out;
  out.iterations = cfg.iterations;
  out.estimate = to_std(acc / (static_cast<double>(cfg.repeats) * cfg.scale));
  return out;
}

double lissa_scale_bound(const Tensor& H, double factor) {
  if (H.rows() != H.cols()) throw ShapeError("Hessian must be square");
  double best = 0;
  for (std::size_t i = 0; i < H.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < H.cols(); ++j) s += std::abs(H(i, j));
    best = std::max(best, s);
  }
  return factor * best;
}

namespace {

void require_full(const CheckpointTrace& trace) {
  if (!trace.full) throw DomainError("TracIn needs batch membership; record the trace with tracin_full");
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

InfluenceReport tracin(const InfluenceProblem& problem, const CheckpointTrace& trace, const Tensor& x,
                       const Tensor& target) {
  require_full(trace);
  InfluenceReport r;
  r.method = "tracin";
  r.scores.assign(problem.size(), 0.0);
  for (const auto& e : trace.entries) {
    if (e.batch.empty() || e.lr == 0) continue;
    auto gz = problem.grad_at(e.theta, x, target);
    const double w = e.lr / static_cast<double>(e.batch.size());
    for (std::size_t j : e.batch) r.scores.at(j) += w * dotv(problem.sample_grad(e.theta, j), gz);
    ++r.iterations;
  }
  return r;
}

double tracin_pair(const InfluenceProblem& problem, const CheckpointTrace& trace, std::size_t j, const Tensor& x,
                   const Tensor& target) {
  require_full(trace);
  if (j >= problem.size()) throw DomainError("sample index out of range");
  double s = 0;
  for (const auto& e : trace.entries) {
    if (e.lr == 0) continue;
    auto hits = std::count(e.batch.begin(), e.batch.end(), j);
    if (hits == 0) continue;
    const double w = e.lr * static_cast<double>(hits) / static_cast<double>(e.batch.size());
    s += w * dotv(problem.sample_grad(e.theta, j), problem.grad_at(e.theta, x, target));
  }
  return s;
}

InfluenceReport tracin_checkpoints(const InfluenceProblem& problem, const CheckpointTrace& trace, const Tensor& x,
                                   const Tensor& target) {
  InfluenceReport r;
  r.method = "tracin-checkpoints";
  r.approximate = true;
  r.scores.assign(problem.size(), 0.0);
  for (const auto& e : trace.entries) {
    if (e.lr == 0) continue;
    auto gz = problem.grad_at(e.theta, x, target);
    for (std::size_t j = 0; j < problem.size(); ++j) r.scores[j] += e.lr * dotv(problem.sample_grad(e.theta, j), gz);
    ++r.iterations;
  }
  return r;
}

InfluenceReport eig_projected_influence(const Tensor& H, std::size_t k, std::span<const double> test_grad,
                                        const Tensor& train_grads) {
  const std::size_t p = test_grad.size();
  require_same_p(H, p);
  check_dense(p);
  if (k == 0 || k > p) throw DomainError("projection rank k must lie in [1, p]");
  if (train_grads.cols() != p) throw ShapeError("training gradients differ in width");
  Mat A = as_eigen(H);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
  const Vec& lam = es.eigenvalues();
  std::vector<Eigen::Index> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(lam[a]) > std::abs(lam[b]); });
  Mat G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
  Vec inv(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    double l = lam[order[i]];
    if (l == 0) throw NumericError("selected eigenvalue is zero; reduce k");
    G.row(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(order[i]).transpose();
    inv[static_cast<Eigen::Index>(i)] = 1.0 / l;
  }
  Vec pz = G * as_vec(test_grad);
  Mat PJ = as_eigen(train_grads) * G.transpose();
  InfluenceReport r;
  r.method = "eig-projected";
  r.k = k;
  r.scores = to_std(PJ * inv.cwiseProduct(pz));
  return r;
}

SelfInfluenceResult self_influence(const InfluenceProblem& problem, SelfInfluenceMethod method,
                                   const CheckpointTrace* trace, std::span<const int> flipped, double damping) {
  const std::size_t n = problem.size();
  SelfInfluenceResult r;
  r.scores.assign(n, 0.0);
  if (method == SelfInfluenceMethod::exact) {
    Tensor H = problem.hessian();
    for (std::size_t j = 0; j < n; ++j) {
      auto g = problem.sample_grad(j);
      r.scores[j] = dotv(g, damped_solve(H, g, damping));
    }
  } else {
    if (!trace) throw DomainError("TracIn self-influence needs a training trace");
    require_full(*trace);
    for (const auto& e : trace->entries) {
      if (e.batch.empty() || e.lr == 0) continue;
      const double w = e.lr / static_cast<double>(e.batch.size());
      for (std::size_t j : e.batch) {
        auto g = problem.sample_grad(e.theta, j);
        r.scores.at(j) += w * dotv(g, g);
      }
    }
  }
  if (!flipped.empty()) {
    if (flipped.size() != n) throw ShapeError("flip mask length differs from the training set");
    r.auroc = detection_metrics(r.scores, flipped).auroc;
  }
  return r;
}

std::vector<int> flip_labels(LabeledDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction <= 1)) throw DomainError("flip fraction must lie in [0, 1]");
  if (data.is_regression() || data.num_classes < 2) throw DomainError("label flipping needs at least two classes");
  const std::size_t n = data.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<int> mask(n, 0);
  for (std::size_t t = 0; t < m; ++t) {
    std::size_t i = idx[t];
    auto shift = 1 + static_cast<int>(rng.below(data.num_classes - 1));
    data.labels[i] = (data.labels[i] + shift) % static_cast<int>(data.num_classes);
    mask[i] = 1;
  }
  return mask;
}

std::string mislabel_report_json(const SelfInfluenceResult& result, std::span<const int> flipped,
                                 const std::string& method) {
  std::vector<std::size_t> order(result.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return result.scores[a] > result.scores[b]; });
  nlohmann::json j;
  j["method"] = method;
  j["auroc"] = result.auroc ? nlohmann::json(*result.auroc) : nlohmann::json(nullptr);
  j["n"] = result.scores.size();
  j["flipped"] = std::count(flipped.begin(), flipped.end(), 1);
  std::vector<std::size_t> top;
  for (std::size_t i : order)
    if (i < flipped.size() && flipped[i]) top.push_back(i);
  j["flipped_ranked"] = top;
  return j.dump(2);
}

FitResult fit_newton(const InfluenceProblem& problem, std::span<const double> theta0, const LooConfig& cfg,
                     std::size_t exclude) {
  const std::size_t p = problem.param_count();
  check_dense(p);
  if (theta0.size() != p) throw ShapeError("initial parameters differ in length");
  ScalarFn f = full_objective(problem, exclude);
  FitResult out;
  out.theta.assign(theta0.begin(), theta0.end());
  double fx = eval(f, out.theta);
  for (; out.iterations < cfg.max_iters; ++out.iterations) {
    auto g = gradient(f, out.theta);
    Vec gv = as_vec(g);
    out.grad_norm = gv.norm();
    if (out.grad_norm < cfg.grad_tol) {
      out.converged = true;
      return out;
    }
    Mat A = Eigen::Map<const RowMat>(trustkit::hessian(f, out.theta).data(), static_cast<Eigen::Index>(p),
                                     static_cast<Eigen::Index>(p));
    A = 0.5 * (A + A.transpose());
    Vec step;
    for (double mu = 0;; mu = mu == 0 ? 1e-8 : mu * 10) {
      Eigen::LLT<Mat> llt(A + mu * Mat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(gv);
        break;
      }
      if (mu > 1e8) throw NumericError("Newton fit could not regularize the Hessian");
    }
    double t = 1.0, slope = gv.dot(step);
    std::vector<double> cand(p);
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      for (std::size_t i = 0; i < p; ++i) cand[i] = out.theta[i] + t * step[static_cast<Eigen::Index>(i)];
      double fc = eval(f, cand);
      // Near the optimum objective differences drown in rounding; a shrinking
      // gradient then decides.
      bool accept = fc <= fx + 1e-4 * t * slope;
      if (!accept && ls == 0 && std::abs(fc - fx) <= 1e-12 * std::max(1.0, std::abs(fx)))
        accept = as_vec(gradient(f, cand)).norm() < out.grad_norm;
      if (accept) {
        out.theta = cand;
        fx = fc;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  out.grad_norm = as_vec(gradient(f, out.theta)).norm();
  out.converged = out.grad_norm < cfg.grad_tol;
  return out;
}

LooOracle::LooOracle(InfluenceProblem problem, std::vector<double> theta0, LooConfig cfg)
    : problem_(std::move(problem)), theta0_(std::move(theta0)), cfg_(cfg) {
  if (problem_.size() < 2) throw DomainError("leave-one-out needs at least two training samples");
  full_ = fit_newton(problem_, theta0_, cfg_);
  problem_.model.set_params(full_.theta);
}

LooResult LooOracle::delta(std::size_t j, const Tensor& X_test, const Tensor& targets_test) const {
  if (j >= problem_.size()) throw DomainError("sample index out of range");
  if (X_test.rows() != targets_test.rows()) throw ShapeError("test features and targets differ in rows");
  FitResult loo = fit_newton(problem_, theta0_, cfg_, j);
  LooResult r;
  r.converged = loo.converged && full_.converged;
  for (std::size_t i = 0; i < X_test.rows(); ++i) {
    Tensor x = X_test.row_slice(i), t = targets_test.row_slice(i);
    r.delta.push_back(problem_.loss_at(loo.theta, x, t) - problem_.loss_at(full_.theta, x, t));
  }
  return r;
}

LooResult loo_retrain_oracle(const InfluenceProblem& problem, std::span<const double> theta0, std::size_t j,
                             const Tensor& X_test, const Tensor& targets_test, const LooConfig& cfg) {
  LooOracle oracle(problem, {theta0.begin(), theta0.end()}, cfg);
  return oracle.delta(j, X_test, targets_test);
}

}  // namespace trustkit
