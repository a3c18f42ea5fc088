// Acceptance run: one PASS/FAIL line per criterion. Oracles are computed here
// from closed forms or plain loops, not through the library under test.
//   acceptance            run every criterion
//   acceptance 6 11       run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trustkit/adversarial.hpp"
#include "trustkit/aleatoric.hpp"
#include "trustkit/attribution.hpp"
#include "trustkit/autodiff.hpp"
#include "trustkit/datagen.hpp"
#include "trustkit/debias.hpp"
#include "trustkit/epistemic.hpp"
#include "trustkit/grad.hpp"
#include "trustkit/metrics.hpp"
#include "trustkit/mlp.hpp"
#include "trustkit/rng.hpp"
#include "trustkit/tda.hpp"
#include "trustkit/train.hpp"

using namespace trustkit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---- independent reference statistics --------------------------------------

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pearson_ref(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> ranks_ref(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double below = 0, tied = 0;
    for (double w : v) below += w < v[i], tied += w == v[i];
    r[i] = below + (tied + 1) / 2;
  }
  return r;
}

double spearman_ref(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson_ref(ranks_ref(a), ranks_ref(b));
}

double cosine_ref(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

// P(score of a positive > score of a negative), ties counted half.
double auroc_ref(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double accuracy_ref(const Tensor& logits, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    hits += static_cast<int>(best) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> row_softmax(const Tensor& logits, std::size_t i) {
  double m = -INFINITY;
  for (std::size_t c = 0; c < logits.cols(); ++c) m = std::max(m, logits(i, c));
  std::vector<double> p(logits.cols());
  double z = 0;
  for (std::size_t c = 0; c < p.size(); ++c) z += p[c] = std::exp(logits(i, c) - m);
  for (double& v : p) v /= z;
  return p;
}

double entropy_ref(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// ---- 1 ----------------------------------------------------------------------

Outcome c01_autodiff() {
  Rng rng(101);
  double identity_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    {
      Tensor x0 = random_tensor(rng, 1, 7);
      Tape tape;
      Var x = tape.variable(x0);
      auto g = gradient_values(dot(x, x), x);
      for (std::size_t i = 0; i < 7; ++i) identity_err = std::max(identity_err, std::abs(g[i] - 2 * x0[i]));
    }
    {
      Tensor A0 = random_tensor(rng, 3, 5), B0 = random_tensor(rng, 5, 3);
      Tape tape;
      Var A = tape.variable(A0);
      Var tr = sum(mul(matmul(A, tape.constant(B0)), tape.constant(Tensor::identity(3))));
      auto g = gradient_values(tr, A);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) identity_err = std::max(identity_err, std::abs(g[i * 5 + j] - B0(j, i)));
    }
    {
      Tensor A0 = random_tensor(rng, 6, 6), x0 = random_tensor(rng, 6, 1);
      Tape tape;
      Var x = tape.variable(x0);
      auto g = gradient_values(matmul(matmul(transpose(x), tape.constant(A0)), x), x);
      for (std::size_t i = 0; i < 6; ++i) {
        double e = 0;
        for (std::size_t j = 0; j < 6; ++j) e += (A0(i, j) + A0(j, i)) * x0[j];
        identity_err = std::max(identity_err, std::abs(g[i] - e));
      }
    }
  }

  MlpModel m = MlpModel::create({5, 12, 8, 3}, Activation::tanh, Activation::identity, 7);
  Tensor X = random_tensor(rng, 16, 5);
  std::vector<int> y(16);
  for (auto& v : y) v = static_cast<int>(rng.below(3));
  auto value = [&](const std::vector<double>& th) {
    // Plain softmax cross-entropy on predict() outputs.
    MlpModel c = m;
    c.set_params(th);
    Tensor logits = c.predict(X);
    double L = 0;
    for (std::size_t i = 0; i < 16; ++i) L -= std::log(row_softmax(logits, i)[y[i]]);
    return L / 16;
  };
  Tape tape;
  Var th = tape.variable(Tensor::row(m.params()));
  Tensor targets({16, 1});
  for (std::size_t i = 0; i < 16; ++i) targets(i, 0) = y[i];
  auto g = gradient_values(loss(forward(m, th, tape.constant(X)), targets, LossKind::softmax_ce), th);
  std::vector<double> theta = m.params(), fd(theta.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    fd[i] = (value(up) - value(dn)) / (2 * h);
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < fd.size(); ++i) num += (g[i] - fd[i]) * (g[i] - fd[i]), den += fd[i] * fd[i];
  const double rel = std::sqrt(num / den);
  return {identity_err <= 1e-10 && rel < 1e-5,
          fmt("identity max err %.2e <= 1e-10, net grad rel err %.2e < 1e-5 (%zu params)", identity_err, rel,
              theta.size())};
}

// ---- 2 ----------------------------------------------------------------------

Outcome c02_aleatoric() {
  TwoGaussianSpec spec;
  spec.n = 10000;
  spec.seed = 202;
  LabeledDataset d = gen_two_gaussians(spec);
  MlpModel m = MlpModel::create({2, 16, 2}, Activation::tanh, Activation::identity, 3);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.lr = LrSchedule::linear(0.5, 0.02);
  cfg.seed = 4;
  cfg.weight_decay = 1e-3;
  train_sgd(m, d, cfg, LossKind::softmax_ce);

  const double s = spec.sigma;
  const double lo0 = std::min(spec.mu0[0], spec.mu1[0]) - 3 * s, hi0 = std::max(spec.mu0[0], spec.mu1[0]) + 3 * s;
  const double lo1 = std::min(spec.mu0[1], spec.mu1[1]) - 3 * s, hi1 = std::max(spec.mu0[1], spec.mu1[1]) + 3 * s;
  Tensor grid({41 * 41, 2});
  for (std::size_t i = 0; i < 41; ++i)
    for (std::size_t j = 0; j < 41; ++j) {
      grid(i * 41 + j, 0) = lo0 + (hi0 - lo0) * static_cast<double>(i) / 40;
      grid(i * 41 + j, 1) = lo1 + (hi1 - lo1) * static_cast<double>(j) / 40;
    }
  Tensor logits = m.predict(grid);
  double sum = 0, worst = 0;
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    auto sq = [&](const std::array<double, 2>& mu) {
      return std::pow(grid(r, 0) - mu[0], 2) + std::pow(grid(r, 1) - mu[1], 2);
    };
    const double p0 = 1 / (1 + std::exp((sq(spec.mu0) - sq(spec.mu1)) / (2 * s * s)));
    const double err = std::abs(row_softmax(logits, r)[0] - p0);
    sum += err;
    worst = std::max(worst, err);
  }
  const double mean_err = sum / static_cast<double>(grid.rows());
  return {mean_err < 0.03 && worst < 0.1, fmt("grid mean |f0-P| %.4f < 0.03, max %.4f < 0.1", mean_err, worst)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome c03_scoring() {
  Rng rng(303);
  double worst = 0;
  std::size_t cases = 0;
  for (int t = 0; t < 3; ++t) {
    // Two classes on a 1/4000 grid.
    const double p = 0.05 + 0.9 * rng.uniform();
    const std::size_t N = 4000;
    for (int rule = 0; rule < 2; ++rule) {
      double best = -INFINITY, arg = 0;
      for (std::size_t i = 0; i <= N; ++i) {
        std::vector<double> f{static_cast<double>(i) / N, 1 - static_cast<double>(i) / N};
        auto S = rule == 0 ? log_score_value : brier_score_value;
        const double e = p * S(f, 0) + (1 - p) * S(f, 1);
        if (e > best) best = e, arg = f[0];
      }
      worst = std::max(worst, std::abs(arg - p));
      ++cases;
    }
  }
  for (int t = 0; t < 3; ++t) {
    // Three classes on a 1/1000 grid of the triangle.
    double a = -std::log(rng.uniform()), b = -std::log(rng.uniform()), c = -std::log(rng.uniform());
    const double z = a + b + c;
    std::vector<double> P{a / z, b / z, c / z};
    const std::size_t N = 1000;
    for (int rule = 0; rule < 2; ++rule) {
      auto S = rule == 0 ? log_score_value : brier_score_value;
      double best = -INFINITY;
      std::vector<double> arg;
      std::vector<double> f(3);
      for (std::size_t i = 0; i <= N; ++i)
        for (std::size_t j = 0; i + j <= N; ++j) {
          f[0] = static_cast<double>(i) / N;
          f[1] = static_cast<double>(j) / N;
          f[2] = static_cast<double>(N - i - j) / N;
          double e = 0;
          for (int k = 0; k < 3; ++k) e += P[k] * S(f, k);
          if (e > best) best = e, arg = f;
        }
      for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(arg[k] - P[k]));
      ++cases;
    }
  }
  return {worst <= 1e-3, fmt("max |argmax - P| %.2e <= 1e-3 over %zu cases (log, Brier; K=2,3)", worst, cases)};
}

// ---- 4 ----------------------------------------------------------------------

Outcome c04_ece() {
  std::vector<int> correct(64);
  Rng rng(404);
  for (std::size_t i = 0; i < 48; ++i) correct[i] = 1;
  rng.shuffle(std::span<int>(correct));
  std::vector<double> conf(64, 48.0 / 64.0);
  const double gamed = ece_report(conf, correct, 15).ece;
  auto hand = ece_report(std::vector<double>{0.95, 0.95, 0.65, 0.65}, std::vector<int>{1, 0, 1, 1}, 10);
  // Bins (0.9, 1]: acc 0.5 vs conf 0.95; (0.6, 0.7]: acc 1 vs conf 0.65.
  const double ece_ref = 0.5 * 0.45 + 0.5 * 0.35, mce_ref = 0.45;
  const bool ok = gamed == 0.0 && std::abs(hand.ece - ece_ref) < 1e-12 && std::abs(hand.mce - mce_ref) < 1e-12;
  return {ok, fmt("gamed ECE %.17g == 0, hand ECE %.12f (0.40), MCE %.12f (0.45), tol 1e-12", gamed, hand.ece,
                  hand.mce)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome c05_temperature() {
  TwoGaussianSpec spec;
  spec.sigma = 1.5;
  auto bayes_logits = [&](const LabeledDataset& d) {
    Tensor L({d.size(), 2});
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (int k = 0; k < 2; ++k) {
        const auto& mu = k == 0 ? spec.mu0 : spec.mu1;
        const double sq = std::pow(d.X(i, 0) - mu[0], 2) + std::pow(d.X(i, 1) - mu[1], 2);
        L(i, k) = 3.0 * (-sq / (2 * spec.sigma * spec.sigma));
      }
    }
    return L;
  };
  spec.n = 4000;
  spec.seed = 505;
  auto fit_set = gen_two_gaussians(spec);
  spec.seed = 506;
  auto eval_set = gen_two_gaussians(spec);
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i) grid.push_back(0.25 * std::pow(40.0, i / 400.0));
  Tensor Lf = bayes_logits(fit_set), Le = bayes_logits(eval_set);
  auto fit = fit_temperature(Lf, fit_set.labels, grid, 15);
  auto ece_at = [&](double T) {
    // Equal-width 15-bin ECE computed directly.
    std::vector<double> cs(15), as(15), ns(15);
    for (std::size_t i = 0; i < Le.rows(); ++i) {
      Tensor row({1, 2});
      row(0, 0) = Le(i, 0) / T;
      row(0, 1) = Le(i, 1) / T;
      auto p = row_softmax(row, 0);
      const std::size_t pred = p[1] > p[0];
      const double c = p[pred];
      const std::size_t b = std::min<std::size_t>(14, static_cast<std::size_t>(std::ceil(c * 15)) - 1);
      cs[b] += c;
      as[b] += static_cast<int>(pred) == eval_set.labels[i];
      ns[b] += 1;
    }
    double e = 0;
    for (std::size_t b = 0; b < 15; ++b) e += std::abs(as[b] - cs[b]) / static_cast<double>(Le.rows());
    return e;
  };
  const double before = ece_at(1.0), after = ece_at(fit.temperature);
  Tensor scaled = Le;
  for (double& v : scaled.values()) v /= fit.temperature;
  const double acc0 = accuracy_ref(Le, eval_set.labels), acc1 = accuracy_ref(scaled, eval_set.labels);
  return {after <= 0.5 * before && acc0 == acc1,
          fmt("T=%.3f, held-out ECE %.4f -> %.4f (%.0f%% reduction >= 50%%), accuracy %.4f -> %.4f", fit.temperature,
              before, after, 100 * (1 - after / before), acc0, acc1)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome c06_attacks() {
  RobustFeatureSpec rs;
  rs.n = 1000;
  rs.seed = 601;
  auto train = gen_robust_features(rs);
  rs.n = 500;
  rs.seed = 602;
  auto test = gen_robust_features(rs);
  double lo = INFINITY, hi = -INFINITY;
  for (double v : train.X.values()) lo = std::min(lo, v), hi = std::max(hi, v);
  const double eps = 0.3 * (hi - lo);

  MlpModel plain = MlpModel::create({train.dim(), 32, 2}, Activation::tanh, Activation::identity, 61);
  MlpModel robust = plain;
  TrainConfig tc;
  tc.epochs = 40;
  tc.lr = LrSchedule::linear(0.5, 0.01);
  tc.seed = 62;
  train_sgd(plain, train, tc, LossKind::softmax_ce);
  AttackConfig at;
  at.eps = eps;
  at.steps = 10;
  at.alpha = 2.5 * eps / 10;
  at.lo = lo;
  at.hi = hi;
  at.random_start = true;
  at.seed = 63;
  adversarial_train(robust, train, tc, at);

  AttackConfig ev;
  ev.eps = eps;
  ev.steps = 40;
  ev.alpha = 2.5 * eps / 40;
  ev.lo = lo;
  ev.hi = hi;
  Tensor y = test.loss_targets(LossKind::softmax_ce);
  const double plain_clean = accuracy_ref(plain.predict(test.X), test.labels);
  const double plain_pgd = accuracy_ref(plain.predict(pgd(plain, test.X, y, ev)), test.labels);
  const double robust_pgd = accuracy_ref(robust.predict(pgd(robust, test.X, y, ev)), test.labels);

  auto ce = [&](const MlpModel& m, const Tensor& X) {
    Tensor L = m.predict(X);
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = -std::log(row_softmax(L, i)[test.labels[i]]);
    return out;
  };
  AttackConfig one = ev;
  auto lf = ce(plain, fgsm(plain, test.X, y, one));
  auto lp = ce(plain, pgd(plain, test.X, y, ev));
  std::size_t ge = 0;
  for (std::size_t i = 0; i < lf.size(); ++i) ge += lp[i] >= lf[i] - 1e-12 * std::max(1.0, std::abs(lf[i]));
  const double frac = static_cast<double>(ge) / static_cast<double>(lf.size());
  return {plain_pgd <= 0.05 && robust_pgd >= 0.70 && frac >= 0.95,
          fmt("eps %.3f: undefended clean %.3f, PGD-40 %.3f <= 0.05; PGD-trained PGD-40 %.3f >= 0.70; "
              "PGD >= FGSM loss on %.3f >= 0.95",
              eps, plain_clean, plain_pgd, robust_pgd, frac)};
}

// ---- 7 ----------------------------------------------------------------------

double worst_group_ref(const MlpModel& m, const LabeledDataset& d) {
  Tensor L = m.predict(d.X);
  std::vector<double> hit(4), n(4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int pred = L(i, 1) > L(i, 0);
    hit[d.groups[i]] += pred == d.labels[i];
    n[d.groups[i]] += 1;
  }
  double w = 1;
  for (int g = 0; g < 4; ++g)
    if (n[g] > 0) w = std::min(w, hit[g] / n[g]);
  return w;
}

Outcome c07_group_dro() {
  std::vector<double> gaps, dro, erm;
  for (std::uint64_t s = 0; s < 5; ++s) {
    SpuriousSpec sp;
    sp.n = 2000;
    sp.majority = 0.97;
    sp.seed = 700 + s;
    auto train = gen_spurious_groups(sp);
    sp.balanced = true;
    sp.seed = 750 + s;
    auto test = gen_spurious_groups(sp);
    MlpModel init = MlpModel::create({2, 2}, Activation::identity, Activation::identity, 70 + s);
    GdroConfig cfg;
    cfg.seed = 71 + s;
    auto r = gdro_train(init, train, test, cfg);
    dro.push_back(worst_group_ref(r.model, test));
    erm.push_back(worst_group_ref(r.erm_model, test));
    gaps.push_back(dro.back() - erm.back());
  }
  const double min_gap = *std::min_element(gaps.begin(), gaps.end());
  return {min_gap >= 0.10, fmt("worst-group DRO %.3f vs ERM %.3f (means); smallest per-seed gap %.3f >= 0.10",
                               mean_of(dro), mean_of(erm), min_gap)};
}

// ---- 8 ----------------------------------------------------------------------

Outcome c08_lff() {
  std::vector<double> lff, erm;
  std::size_t wins = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    DiagonalSpec ds;
    ds.n = 4000;
    ds.rho = 0.99;
    ds.noise_sigma = 0.5;
    ds.task_scale = 1.0;
    ds.bias_scale = 3.0;
    ds.seed = 800 + s;
    auto train = gen_diagonal(ds);
    ds.unbiased = true;
    ds.n = 2000;
    ds.seed = 850 + s;
    auto test = gen_diagonal(ds);
    const std::size_t d = train.dim();
    ExpertPair init{MlpModel::create({d, 2}, Activation::identity, Activation::identity, 80 + s),
                    MlpModel::create({d, 2}, Activation::identity, Activation::identity, 90 + s)};
    LffConfig cfg;
    cfg.seed = 81 + s;
    cfg.epochs = 30;
    cfg.lr = 0.005;
    auto r = lff_train(init, train, test, cfg);
    // LfF steps on the batch sum; ERM on the mean with the matching step.
    MlpModel base = init.second;
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = LrSchedule::constant(cfg.lr * static_cast<double>(cfg.batch_size));
    tc.seed = cfg.seed;
    train_sgd(base, train, tc, LossKind::softmax_ce);
    lff.push_back(accuracy_ref(r.models.second.predict(test.X), test.labels));
    erm.push_back(accuracy_ref(base.predict(test.X), test.labels));
    wins += lff.back() > erm.back();
  }
  return {mean_of(lff) > mean_of(erm),
          fmt("mean unbiased-test accuracy over 5 seeds LfF %.3f vs ERM %.3f; LfF ahead on %zu/5 seeds",
              mean_of(lff), mean_of(erm), wins)};
}

// ---- 9 ----------------------------------------------------------------------

Outcome c09_ig() {
  MlpModel m = MlpModel::create({6, 16, 16, 3}, Activation::tanh, Activation::identity, 9);
  Rng rng(909);
  Tensor x = random_tensor(rng, 1, 6);
  for (double& v : x.values()) v *= 2;
  Tensor x0({1, 6});
  std::vector<double> gaps;
  bool halving = true;
  std::string trail;
  for (std::size_t steps = 16; steps <= 512; steps *= 2) {
    const double gap = integrated_gradients(m, x, x0, 1, steps).completeness_gap;
    if (!gaps.empty()) halving = halving && gap <= 0.5 * gaps.back();
    gaps.push_back(gap);
    trail += fmt("%s%.1e", trail.empty() ? "" : " ", gap);
  }
  return {gaps.back() <= 1e-3 && halving,
          fmt("gap at 512 steps %.2e <= 1e-3; gaps 16..512: %s (each <= half the last)", gaps.back(), trail.c_str())};
}

// ---- 10 ---------------------------------------------------------------------

Outcome c10_shap() {
  // Players 0 and 1 enter symmetrically and share x and fill; 6 and 7 are ignored.
  BlackBox f = [](const Tensor& Z) {
    std::vector<double> out(Z.rows());
    for (std::size_t i = 0; i < Z.rows(); ++i) {
      double z[8];
      for (std::size_t j = 0; j < 8; ++j) z[j] = Z(i, j);
      out[i] = std::tanh(z[0] + z[1]) + z[2] * z[3] - 0.5 * z[4] * z[4] + std::sin(z[5]) + 0.3 * z[0] * z[1] * z[4];
    }
    return out;
  };
  Tensor x = Tensor::row({0.8, 0.8, -1.1, 0.6, 1.3, 2.0, -0.4, 0.9});
  std::vector<double> fill{0.1, 0.1, 0.3, -0.2, 0.0, -0.5, 0.2, 0.0};
  SetFunction v = blackbox_game(f, x, fill);
  auto phi = shap_exact(v, 8);
  const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
  const double completeness = std::abs(total - (v(0xFF) - v(0)));
  const double symmetry = std::abs(phi[0] - phi[1]);
  const double null_player = std::max(std::abs(phi[6]), std::abs(phi[7]));

  // Permutation-average Shapley values over all 8! orderings.
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> ref(8);
  std::size_t count = 0;
  do {
    std::uint64_t S = 0;
    double prev = v(0);
    for (int p : perm) {
      S |= 1ull << p;
      const double cur = v(S);
      ref[p] += cur - prev;
      prev = cur;
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  double exact_vs_ref = 0;
  for (int i = 0; i < 8; ++i) exact_vs_ref = std::max(exact_vs_ref, std::abs(phi[i] - ref[i] / count));

  auto mc = shap_mc(v, 8, 10000, 1010);
  double sup = 0;
  for (int i = 0; i < 8; ++i) sup = std::max(sup, std::abs(mc[i] - phi[i]));
  const bool ok = completeness <= 1e-9 && symmetry <= 1e-9 && null_player <= 1e-9 && exact_vs_ref <= 1e-9 && sup < 0.05;
  return {ok, fmt("completeness %.1e, symmetry %.1e, null %.1e, vs permutations %.1e (all <= 1e-9); "
                  "MC sup-norm %.4f < 0.05",
                  completeness, symmetry, null_player, exact_vs_ref, sup)};
}

// ---- 11 ---------------------------------------------------------------------

Outcome c11_influence() {
  TwoGaussianSpec gs;
  gs.n = 200;
  gs.seed = 1101;
  auto data = gen_two_gaussians(gs);
  gs.n = 6;
  gs.seed = 1102;
  auto test = gen_two_gaussians(gs);
  MlpModel m = MlpModel::create({2, 2}, Activation::identity, Activation::identity, 11);
  auto base = InfluenceProblem::from(m, data, LossKind::softmax_ce, 0.01);
  LooOracle oracle(base, m.params());
  const auto& pr = oracle.problem();
  Tensor tt = test.loss_targets(test.all_rows(), LossKind::softmax_ce);
  std::vector<std::vector<double>> loo(200);
  bool converged = oracle.full_fit().converged;
  for (std::size_t j = 0; j < 200; ++j) {
    auto r = oracle.delta(j, test.X, tt);
    converged = converged && r.converged;
    loo[j] = r.delta;
  }
  double worst_r = 1;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto inf = exact_influence(pr, test.X.row_slice(i), tt.row_slice(i), 0.0);
    std::vector<double> a, b;
    for (std::size_t j = 0; j < 200; ++j) a.push_back(inf.scores[j] / 200.0), b.push_back(loo[j][i]);
    worst_r = std::min(worst_r, pearson_ref(a, b));
  }

  Tensor H = pr.hessian();
  const std::size_t p = pr.param_count();
  Eigen::MatrixXd Hd(p, p);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) Hd(a, b) = H(a, b) + (a == b ? kDefaultDamping : 0.0);
  double worst_cos = 1;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto gz = pr.grad_at(test.X.row_slice(i), tt.row_slice(i));
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(gz.data(), static_cast<Eigen::Index>(p));
    Eigen::VectorXd sol = Hd.fullPivLu().solve(rhs);
    LissaConfig lc;
    lc.damping = kDefaultDamping;
    lc.scale = lissa_scale_bound(H);
    lc.iterations = 500;
    lc.seed = 1103 + i;
    auto est = lissa_ihvp(problem_hvp_oracle(pr, pr.size()), gz, lc).estimate;
    worst_cos = std::min(worst_cos, cosine_ref(est, std::vector<double>(sol.data(), sol.data() + p)));
  }
  return {converged && worst_r >= 0.99 && worst_cos >= 0.99,
          fmt("n=200, %zu test points: min Pearson(IF/n, LOO) %.4f >= 0.99; min LiSSA cosine %.5f >= 0.99%s",
              test.size(), worst_r, worst_cos, converged ? "" : "; a refit did not converge")};
}

// ---- 12 ---------------------------------------------------------------------

Outcome c12_tracin_eig() {
  TwoGaussianSpec gs;
  gs.n = 200;
  gs.seed = 1201;
  auto data = gen_two_gaussians(gs);
  auto flipped = flip_labels(data, 0.1, 1202);
  MlpModel m = MlpModel::create({2, 2}, Activation::identity, Activation::identity, 12);
  TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.epochs = 10;
  cfg.lr = LrSchedule::constant(0.1);
  cfg.seed = 1203;
  cfg.tracin_full = true;
  auto trace = train_sgd(m, data, cfg, LossKind::softmax_ce);
  auto pr = InfluenceProblem::from(m, data, LossKind::softmax_ce);
  auto self = self_influence(pr, SelfInfluenceMethod::tracin, &trace);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < self.scores.size(); ++i) (flipped[i] ? pos : neg).push_back(self.scores[i]);
  const double au = auroc_ref(pos, neg);

  // Four features (two informative, one noise, one noisy mix); 10 parameters.
  Rng rng(1204);
  gs.n = 150;
  gs.seed = 1205;
  auto base = gen_two_gaussians(gs);
  LabeledDataset w = base;
  w.X = Tensor({base.size(), 4});
  for (std::size_t i = 0; i < base.size(); ++i) {
    w.X(i, 0) = base.X(i, 0);
    w.X(i, 1) = base.X(i, 1);
    w.X(i, 2) = rng.normal();
    w.X(i, 3) = base.X(i, 0) - base.X(i, 1) + 0.3 * rng.normal();
  }
  MlpModel lin = MlpModel::create({4, 2}, Activation::identity, Activation::identity, 13);
  auto p2 = InfluenceProblem::from(lin, w, LossKind::softmax_ce, 0.01);
  auto fit = fit_newton(p2, lin.params(), LooConfig{});
  p2.model.set_params(fit.theta);
  Tensor H = p2.hessian(), G = p2.train_gradients();
  double worst_rho = 1;
  for (std::size_t z = 0; z < 5; ++z) {
    auto gz = p2.sample_grad(z);
    auto eig = eig_projected_influence(H, 8, gz, G);
    auto exact = influence_from_hessian(H, gz, G, 0.0);
    worst_rho = std::min(worst_rho, spearman_ref(eig.scores, exact.scores));
  }
  return {au >= 0.85 && worst_rho >= 0.9 && fit.converged,
          fmt("TracIn self-influence AUROC %.3f >= 0.85 (10%% flipped, n=200); eig k=8 of p=%zu min Spearman %.4f "
              ">= 0.9",
              au, p2.param_count(), worst_rho)};
}

// ---- 13 ---------------------------------------------------------------------

// Test rows moved `k` standard deviations along the decision boundary.
Tensor shifted_along_boundary(const Tensor& X, const TwoGaussianSpec& s, double k) {
  const double dx = s.mu1[0] - s.mu0[0], dy = s.mu1[1] - s.mu0[1];
  const double n = std::hypot(dx, dy);
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    out(i, 0) += k * s.sigma * (-dy / n);
    out(i, 1) += k * s.sigma * (dx / n);
  }
  return out;
}

Outcome c13_ensemble() {
  TwoGaussianSpec gs;
  gs.n = 600;
  gs.seed = 1301;
  auto train = gen_two_gaussians(gs);
  gs.n = 400;
  gs.seed = 1302;
  auto test = gen_two_gaussians(gs);
  Tensor ood = shifted_along_boundary(test.X, gs, 5.0);
  MlpModel tmpl = MlpModel::create({2, 16, 2}, Activation::tanh, Activation::identity, 1303);
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 1304;
  auto ens = ensemble_train(tmpl, train, 10, tc);
  // Entropy of an M-member ensemble, averaged over every M-subset of the 10
  // trained members so the estimate does not depend on member order.
  auto member_probs = [&](const Tensor& X) {
    std::vector<std::vector<std::vector<double>>> P;
    for (const auto& theta : ens.members) {
      MlpModel mk = tmpl;
      mk.set_params(theta);
      Tensor L = mk.predict(X);
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < X.rows(); ++i) rows.push_back(row_softmax(L, i));
      P.push_back(std::move(rows));
    }
    return P;
  };
  const auto P_ood = member_probs(ood), P_id = member_probs(test.X);
  auto mean_entropy = [&](std::size_t M, const std::vector<std::vector<std::vector<double>>>& P) {
    std::vector<bool> pick(P.size(), false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(M), true);
    double total = 0;
    std::size_t subsets = 0;
    do {
      for (std::size_t i = 0; i < P[0].size(); ++i) {
        std::vector<double> p(2);
        for (std::size_t k = 0; k < P.size(); ++k)
          if (pick[k]) p[0] += P[k][i][0] / M, p[1] += P[k][i][1] / M;
        total += entropy_ref(p);
      }
      ++subsets;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return total / static_cast<double>(subsets * P[0].size());
  };
  std::vector<double> h;
  std::string trail;
  for (std::size_t M : {1, 2, 5, 10}) {
    h.push_back(mean_entropy(M, P_ood));
    trail += fmt("%sM=%zu %.4f", trail.empty() ? "" : ", ", M, h.back());
  }
  const double id = mean_entropy(10, P_id);
  bool increasing = true;
  for (std::size_t i = 1; i < h.size(); ++i) increasing = increasing && h[i] > h[i - 1];
  return {increasing && h.back() > id,
          fmt("OOD entropy %s (strictly increasing); ID at M=10 %.4f < %.4f", trail.c_str(), id, h.back())};
}

// ---- 14 ---------------------------------------------------------------------

Outcome c14_ood() {
  std::size_t wins = 0;
  std::vector<double> maha, maxp;
  for (std::uint64_t s = 0; s < 5; ++s) {
    TwoGaussianSpec gs;
    gs.n = 600;
    gs.seed = 1400 + s;
    auto train = gen_two_gaussians(gs);
    gs.n = 300;
    gs.seed = 1450 + s;
    auto test = gen_two_gaussians(gs);
    Tensor ood = shifted_along_boundary(test.X, gs, 5.0);
    MlpModel m = MlpModel::create({2, 16, 2}, Activation::tanh, Activation::identity, 140 + s);
    TrainConfig tc;
    tc.epochs = 20;
    tc.seed = 141 + s;
    train_sgd(m, train, tc, LossKind::softmax_ce);
    const std::size_t L = m.num_layers() - 1;
    auto scorer = fit_mahalanobis(features_at(m, train.X, L), train.labels, 2);
    auto mid = score_mahalanobis(scorer, features_at(m, test.X, L));
    auto mood = score_mahalanobis(scorer, features_at(m, ood, L));
    auto maxprob = [&](const Tensor& X) {
      Tensor Lg = m.predict(X);
      std::vector<double> out(X.rows());
      for (std::size_t i = 0; i < X.rows(); ++i) {
        auto p = row_softmax(Lg, i);
        out[i] = std::max(p[0], p[1]);
      }
      return out;
    };
    maha.push_back(auroc_ref(mid, mood));
    maxp.push_back(auroc_ref(maxprob(test.X), maxprob(ood)));
    wins += maha.back() >= maxp.back();
  }

  TwoGaussianSpec gs;
  gs.n = 400;
  gs.seed = 1499;
  auto d = gen_two_gaussians(gs);
  DuqConfig dc;
  dc.train.epochs = 5;
  auto duq = duq_train(MlpModel::create({2, 16, 8}, Activation::tanh, Activation::identity, 149), d, dc);
  Tensor C = duq.state.centroids();
  Tensor K = duq_scores(duq.state, C);
  bool ones = true;
  for (std::size_t k = 0; k < C.rows(); ++k) ones = ones && K(k, k) == 1.0;
  return {wins == 5 && ones, fmt("AUROC Mahalanobis %.3f vs max-prob %.3f (means); Mahalanobis >= max-prob on %zu/5 "
                                 "seeds; DUQ K_k(mu_k) == 1 exactly: %s",
                                 mean_of(maha), mean_of(maxp), wins, ones ? "yes" : "no")};
}

// ---- 15 ---------------------------------------------------------------------

Outcome c15_multihead() {
  Rng rng(1501);
  LabeledDataset d;
  const std::size_t n = 2000;
  d.X = Tensor({n, 1});
  d.targets = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    d.X(i, 0) = rng.uniform(-1, 1);
    d.targets(i, 0) = (rng.uniform() < 0.5 ? 1.0 : -1.0) + 0.05 * rng.normal();
  }
  MlpModel m = MlpModel::create({1, 16, 2}, Activation::tanh, Activation::identity, 1502, 0.0, 2);
  init_heads_at_quantiles(m, d.targets);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = LrSchedule::linear(0.05, 0.002);
  cfg.seed = 1503;
  train_multihead(m, d, cfg, MultiHeadLoss::wta);
  Tensor grid({41, 1});
  for (std::size_t i = 0; i < 41; ++i) grid(i, 0) = -1 + 0.05 * static_cast<double>(i);
  Tensor out = m.predict(grid);
  double mode_err = 0;
  for (std::size_t i = 0; i < 41; ++i) {
    const double lo = std::min(out(i, 0), out(i, 1)), hi = std::max(out(i, 0), out(i, 1));
    mode_err = std::max({mode_err, std::abs(lo + 1), std::abs(hi - 1)});
  }

  // grad MoG NLL = sum_m w_m grad(|y - f_m|^2 / 2 sigma^2), with w from a direct softmax.
  double id_err = 0;
  for (int trial = 0; trial < 5; ++trial) {
    MlpModel h = MlpModel::create({3, 6, 2}, Activation::tanh, Activation::identity, 1510 + trial, 0.0, 2);
    Tensor x = random_tensor(rng, 1, 3), y = random_tensor(rng, 1, 1);
    const double s2 = 0.7;
    Tape tape;
    Var th = tape.variable(Tensor::row(h.params()));
    ExpertOutputs e{forward(h, th, tape.constant(x)), 2, s2};
    auto g = gradient_values(mog_nll(e, y).loss, th);
    Tensor f = h.predict(x);
    const double e0 = std::pow(y[0] - f(0, 0), 2) / (2 * s2), e1 = std::pow(y[0] - f(0, 1), 2) / (2 * s2);
    const double w0 = 1 / (1 + std::exp(e0 - e1)), w1 = 1 - w0;
    auto theta = h.params();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      // Head-loss gradients by central differences.
      auto head = [&](std::vector<double> t, std::size_t col) {
        MlpModel c = h;
        c.set_params(std::move(t));
        return std::pow(y[0] - c.predict(x)(0, col), 2) / (2 * s2);
      };
      auto up = theta, dn = theta;
      up[k] += 1e-6;
      dn[k] -= 1e-6;
      const double g0 = (head(up, 0) - head(dn, 0)) / 2e-6, g1 = (head(up, 1) - head(dn, 1)) / 2e-6;
      id_err = std::max(id_err, std::abs(g[k] - (w0 * g0 + w1 * g1)));
    }
  }
  return {mode_err < 0.1 && id_err <= 1e-6,
          fmt("WTA heads max distance to modes -1/+1 %.4f < 0.1; MoG gradient identity err %.2e <= 1e-6", mode_err,
              id_err)};
}

// ---- 16 ---------------------------------------------------------------------

Outcome c16_sanity() {
  RobustFeatureSpec rs;
  rs.n = 600;
  rs.weak = 15;
  rs.seed = 1601;
  auto data = gen_robust_features(rs);
  MlpModel m = MlpModel::create({data.dim(), 24, 24, 2}, Activation::tanh, Activation::identity, 1602);
  TrainConfig tc;
  tc.epochs = 15;
  tc.seed = 1603;
  train_sgd(m, data, tc, LossKind::softmax_ce);
  Tensor x = data.X.row_slice(0);
  AttributionFn pseudo = [](const MlpModel&, const Tensor& row) {
    std::vector<double> a(row.values().begin(), row.values().end());
    for (double& v : a) v = std::abs(v - 0.5);
    return a;
  };
  const std::size_t c = static_cast<std::size_t>(data.labels[0]);
  AttributionFn sal = [c](const MlpModel& model, const Tensor& row) { return saliency(model, row, c).raw; };
  auto pr = cascading_randomization(m, pseudo, x, 1604);
  auto sr = cascading_randomization(m, sal, x, 1604);
  double pseudo_min = 1;
  for (double r : pr.spearman) pseudo_min = std::min(pseudo_min, r);
  const double sal_final = sr.spearman.back();
  std::string trail;
  for (double r : sr.spearman) trail += fmt("%s%.3f", trail.empty() ? "" : " ", r);
  return {std::abs(pseudo_min - 1) <= 1e-12 && sal_final < 1,
          fmt("pseudo-attribution min rho %.15f (== 1 to 1e-12); saliency rho by stage %s, final < 1",
              pseudo_min, trail.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const double none = INFINITY;
  std::vector<Criterion> all{
      {1, "autodiff identities and gradient check", 10, c01_autodiff},
      {2, "aleatoric recovery of P(Y|x)", 60, c02_aleatoric},
      {3, "proper scoring rule maximizers", none, c03_scoring},
      {4, "ECE gaming and hand-binned case", none, c04_ece},
      {5, "temperature scaling", none, c05_temperature},
      {6, "FGSM, PGD and adversarial training", 180, c06_attacks},
      {7, "group DRO worst-group accuracy", none, c07_group_dro},
      {8, "learning from failure on diagonal data", none, c08_lff},
      {9, "integrated gradients completeness", none, c09_ig},
      {10, "Shapley value axioms and Monte Carlo", none, c10_shap},
      {11, "influence functions vs leave-one-out and LiSSA", 300, c11_influence},
      {12, "TracIn mislabel detection and eigen-projected influence", none, c12_tracin_eig},
      {13, "ensemble entropy on shifted inputs", none, c13_ensemble},
      {14, "Mahalanobis vs max-prob OOD and DUQ kernel", none, c14_ood},
      {15, "winner-takes-all heads and MoG gradient", none, c15_multihead},
      {16, "cascading randomization sanity check", none, c16_sanity},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::string timing = std::isinf(c.limit_seconds) ? fmt("%.1f s", secs) : fmt("%.1f s < %.0f s", secs, c.limit_seconds);
    std::printf("%s  %2d  %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
