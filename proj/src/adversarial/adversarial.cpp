#include "trustkit/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/grad.hpp"

namespace trustkit {

void AttackConfig::validate() const {
  if (!(eps >= 0)) throw DomainError("attack eps must be non-negative");
  if (!(alpha > 0)) throw DomainError("attack step size must be positive");
  if (steps < 1) throw DomainError("attack needs at least one iteration");
  if (!(hi > lo)) throw DomainError("attack clip range must be increasing");
  if (eps > hi - lo) throw DomainError("attack eps exceeds the clip range");
  if (!std::isinf(p) || p < 0) throw DomainError("only the L-infinity attack is implemented");
}

namespace {

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void check_range(const Tensor& X, const AttackConfig& cfg) {
  for (double v : X.values())
    if (!(v >= cfg.lo && v <= cfg.hi)) throw DomainError("attack input lies outside the clip range");
}

Tensor input_gradient(const InputLoss& objective, const Tensor& X, double* value) {
  Tape tape;
  Var x = tape.variable(X);
  Var l = objective(x);
  if (value) *value = l.item();
  return Tensor(X.shape(), grad_input(l, x));
}

double objective_value(const InputLoss& objective, const Tensor& X) {
  Tape tape;
  Tape::NoGradGuard guard(tape);
  return objective(tape.constant(X)).item();
}

}  // namespace

InputLoss model_input_loss(const MlpModel& model, const Tensor& targets, LossKind kind) {
  return [&model, targets, kind](const Var& x) {
    Var th = x.tape()->constant(Tensor::row(model.params()));
    return sum(per_sample_loss(forward(model, th, x), targets, kind));
  };
}

Tensor fgsm(const InputLoss& objective, const Tensor& X, const AttackConfig& cfg) {
  cfg.validate();
  check_range(X, cfg);
  if (cfg.eps == 0.0) return X;
  Tensor g = input_gradient(objective, X, nullptr);
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(X[i] + cfg.eps * sgn(g[i]), cfg.lo, cfg.hi);
  return out;
}

Tensor fgsm(const MlpModel& model, const Tensor& X, const Tensor& targets, const AttackConfig& cfg) {
  return fgsm(model_input_loss(model, targets, cfg.loss), X, cfg);
}

PgdResult pgd(const InputLoss& objective, const Tensor& X, const AttackConfig& cfg) {
  cfg.validate();
  check_range(X, cfg);
  PgdResult res{X, {}};
  if (cfg.eps == 0.0) {
    res.loss_trace.push_back(objective_value(objective, X));
    return res;
  }
  Tensor lower = X, upper = X;
  for (std::size_t i = 0; i < X.size(); ++i) {
    lower[i] = std::max(cfg.lo, X[i] - cfg.eps);
    upper[i] = std::min(cfg.hi, X[i] + cfg.eps);
  }
  Tensor& x = res.x_adv;
  if (cfg.random_start) {
    Rng rng = Rng(cfg.seed).split(0x5254);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = std::clamp(X[i] + rng.uniform(-cfg.eps, cfg.eps), lower[i], upper[i]);
  }
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    double value = 0;
    Tensor g = input_gradient(objective, x, &value);
    res.loss_trace.push_back(value);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i] + cfg.alpha * sgn(g[i]), lower[i], upper[i]);
  }
  res.loss_trace.push_back(objective_value(objective, x));
  return res;
}

Tensor pgd(const MlpModel& model, const Tensor& X, const Tensor& targets, const AttackConfig& cfg) {
  return pgd(model_input_loss(model, targets, cfg.loss), X, cfg).x_adv;
}

std::vector<double> per_sample_values(const MlpModel& model, const Tensor& X, const Tensor& targets, LossKind kind) {
  Tape tape;
  Tape::NoGradGuard guard(tape);
  return per_sample_loss(tape.constant(model.predict(X)), targets, kind).value().data();
}

CheckpointTrace adversarial_train(MlpModel& model, const LabeledDataset& data, const TrainConfig& train,
                                  const AttackConfig& attack) {
  attack.validate();
  if (data.size() == 0) throw DomainError("training set is empty");
  const bool dropout = model.has_dropout();
  BatchObjective obj = [&](Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t seed) {
    Tensor X = data.features(batch);
    Tensor y = data.loss_targets(batch, attack.loss);
    if (attack.eps > 0) {
      MlpModel frozen = model;
      frozen.set_params(theta.value().data());
      AttackConfig cfg = attack;
      cfg.seed = mix_seed(attack.seed, seed);
      X = pgd(frozen, X, y, cfg);
    }
    ForwardOptions fo;
    fo.train_mode = dropout;
    fo.seed = seed;
    return loss(forward(model, theta, tape.constant(X), fo), y, attack.loss);
  };
  return train_loop(model.params(), data.size(), train, obj);
}

std::vector<AttackRow> attack_report(const MlpModel& model, const LabeledDataset& data,
                                     const std::vector<double>& eps_grid, const AttackConfig& cfg) {
  std::vector<AttackRow> rows;
  const Tensor y = data.loss_targets(cfg.loss);
  const double clean = accuracy(model, data);
  const double ratio = cfg.eps > 0 ? cfg.alpha / cfg.eps : 0.25;
  for (double eps : eps_grid) {
    AttackConfig c = cfg;
    c.eps = eps;
    c.alpha = eps > 0 ? ratio * eps : cfg.alpha;
    AttackRow r{eps, clean, 0.0, 0.0};
    r.fgsm = accuracy(model.predict(fgsm(model, data.X, y, c)), data.labels);
    r.pgd = accuracy(model.predict(pgd(model, data.X, y, c)), data.labels);
    rows.push_back(r);
  }
  return rows;
}

std::string attack_report_csv(const std::vector<AttackRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "eps,clean_acc,fgsm_acc,pgd_acc\n";
  for (const auto& r : rows) os << r.eps << ',' << r.clean << ',' << r.fgsm << ',' << r.pgd << '\n';
  return os.str();
}

Tensor eot_gradient(const InputLoss& objective, const Tensor& X, const TransformSampler& sampler, std::size_t M,
                    std::uint64_t seed) {
  if (M < 1) throw DomainError("EoT needs at least one transform sample");
  Rng rng(seed);
  Tensor mean(X.shape());
  for (std::size_t m = 0; m < M; ++m) {
    Transform t = sampler(rng);
    Tape tape;
    Var x = tape.variable(X);
    auto g = grad_input(objective(t(x)), x);
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += (g[i] - mean[i]) / static_cast<double>(m + 1);
  }
  return mean;
}

Tensor eot_gradient(const MlpModel& model, const Tensor& X, const Tensor& targets, LossKind kind,
                    const TransformSampler& sampler, std::size_t M, std::uint64_t seed) {
  return eot_gradient(model_input_loss(model, targets, kind), X, sampler, M, seed);
}

Transform permutation_transform(std::vector<std::size_t> perm) {
  const std::size_t d = perm.size();
  std::vector<bool> seen(d, false);
  for (std::size_t p : perm) {
    if (p >= d || seen[p]) throw DomainError("permutation_transform: not a permutation");
    seen[p] = true;
  }
  Tensor P({d, d});
  for (std::size_t j = 0; j < d; ++j) P(perm[j], j) = 1.0;
  return [P](const Var& x) {
    if (x.cols() != P.rows()) throw ShapeError("permutation_transform: width mismatch");
    return matmul(x, x.tape()->constant(P));
  };
}

}  // namespace trustkit
