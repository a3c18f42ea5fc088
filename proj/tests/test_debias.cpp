#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "trustkit/datagen.hpp"
#include "trustkit/debias.hpp"
#include "trustkit/errors.hpp"
#include "trustkit/grad.hpp"
#include "trustkit/probe.hpp"
#include "trustkit/rng.hpp"
#include "trustkit/train.hpp"

using namespace trustkit;

namespace {

Tensor gaussian(Rng& rng, std::size_t n, std::size_t d, double shift = 0.0) {
  Tensor t({n, d});
  for (double& v : t.data()) v = rng.normal() + shift;
  return t;
}

MlpModel linear_model(std::size_t in, std::size_t out, std::vector<double> theta) {
  MlpModel m = MlpModel::create({in, out}, Activation::identity, Activation::identity, 0);
  m.set_params(std::move(theta));
  return m;
}

// HSIC_1 as the U-statistic over ordered 4-tuples of distinct indices.
double hsic_ustat(const Tensor& U, const Tensor& V, double su, double sv) {
  const std::size_t n = U.rows();
  auto kern = [](const Tensor& M, std::size_t i, std::size_t j, double s) {
    double d = 0;
    for (std::size_t k = 0; k < M.cols(); ++k) d += (M(i, k) - M(j, k)) * (M(i, k) - M(j, k));
    return std::exp(-d / (2 * s * s));
  };
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t q = 0; q < n; ++q)
        for (std::size_t r = 0; r < n; ++r) {
          if (i == j || i == q || i == r || j == q || j == r || q == r) continue;
          std::array<std::size_t, 4> idx{i, j, q, r};
          std::array<int, 4> perm{0, 1, 2, 3};
          double h = 0;
          do {
            std::size_t t = idx[perm[0]], u = idx[perm[1]], v = idx[perm[2]], w = idx[perm[3]];
            h += kern(U, t, u, su) * kern(V, t, u, sv) + kern(U, t, u, su) * kern(V, v, w, sv) -
                 2 * kern(U, t, u, su) * kern(V, t, v, sv);
          } while (std::next_permutation(perm.begin(), perm.end()));
          total += h / 24.0;
          ++count;
        }
  return total / static_cast<double>(count);
}

}  // namespace

// ---- moment matching -------------------------------------------------------

TEST(MomentPenalty, IdenticalDomainsGiveZero) {
  Rng rng(1);
  Tensor a = gaussian(rng, 20, 3);
  std::vector<Tensor> d{a, a, a};
  EXPECT_DOUBLE_EQ(moment_align_penalty(d), 0.0);
}

TEST(MomentPenalty, ShiftGivesSquaredNorm) {
  Rng rng(2);
  Tensor a = gaussian(rng, 30, 3);
  Tensor b = a;
  const std::array<double, 3> v{0.5, -1.0, 2.0};
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) b(i, j) += v[j];
  std::vector<Tensor> d{a, b};
  EXPECT_NEAR(moment_align_penalty(d), 0.25 + 1.0 + 4.0, 1e-10);
}

TEST(MomentPenalty, SymmetricUnderRelabeling) {
  Rng rng(3);
  std::vector<Tensor> d{gaussian(rng, 10, 2), gaussian(rng, 12, 2, 1.0), gaussian(rng, 8, 2, -0.5)};
  double p = moment_align_penalty(d);
  std::vector<Tensor> r{d[2], d[0], d[1]};
  EXPECT_NEAR(moment_align_penalty(r), p, 1e-12);
}

TEST(MomentPenalty, MatchesDirectComputation) {
  Rng rng(4);
  std::vector<Tensor> d{gaussian(rng, 6, 2), gaussian(rng, 5, 2, 0.3)};
  auto moments = [](const Tensor& F) {
    std::array<double, 2> mu{0, 0};
    std::array<double, 4> cov{0, 0, 0, 0};
    const double n = static_cast<double>(F.rows());
    for (std::size_t i = 0; i < F.rows(); ++i)
      for (std::size_t j = 0; j < 2; ++j) mu[j] += F(i, j) / n;
    for (std::size_t i = 0; i < F.rows(); ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) cov[j * 2 + k] += (F(i, j) - mu[j]) * (F(i, k) - mu[k]) / (n - 1);
    return std::pair{mu, cov};
  };
  auto [ma, ca] = moments(d[0]);
  auto [mb, cb] = moments(d[1]);
  double expect = 0;
  for (int j = 0; j < 2; ++j) expect += (ma[j] - mb[j]) * (ma[j] - mb[j]);
  for (int j = 0; j < 4; ++j) expect += (ca[j] - cb[j]) * (ca[j] - cb[j]);
  EXPECT_NEAR(moment_align_penalty(d), expect, 1e-12);
}

TEST(MomentPenalty, RejectsSingletonDomain) {
  std::vector<Tensor> d{Tensor::from_rows({{1, 2}}), Tensor::from_rows({{1, 2}, {3, 4}})};
  EXPECT_THROW(moment_align_penalty(d), DomainError);
  std::vector<Tensor> one{Tensor::from_rows({{1, 2}, {3, 4}})};
  EXPECT_THROW(moment_align_penalty(one), DomainError);
}

TEST(MomentPenalty, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor a = gaussian(rng, 5, 2), b = gaussian(rng, 4, 2, 0.5);
  auto f = [&](std::span<const double> x) {
    Tensor aa({5, 2}, std::vector<double>(x.begin(), x.end()));
    std::vector<Tensor> d{aa, b};
    return moment_align_penalty(d);
  };
  Tape tape;
  Var av = tape.variable(a);
  std::vector<Var> vars{av, tape.constant(b)};
  auto g = grad_input(moment_align_penalty(vars), av);
  auto fd = finite_diff_grad(f, a.data(), 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-6);
}

// ---- group DRO -------------------------------------------------------------

TEST(GroupDro, HandComputedStep) {
  // Zero-weight linear softmax model: loss is exactly ln 2, p = (0.5, 0.5).
  MlpModel m = linear_model(2, 2, std::vector<double>(6, 0.0));
  Tensor X = Tensor::from_rows({{1.0, 2.0}});
  Tensor y = Tensor::column({0});
  GroupWeights q = GroupWeights::uniform(2);
  double l = gdro_step(q, m, X, y, 0, 1.0, 0.3);
  EXPECT_NEAR(l, std::log(2.0), 1e-15);
  EXPECT_NEAR(q.q[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(q.q[1], 1.0 / 3.0, 1e-12);
  // dL/dW_k = (p_k - [k == y]) x, dL/db_k = p_k - [k == y]; step scaled by q_0 = 2/3.
  const double s = 0.3 * 2.0 / 3.0;
  std::vector<double> expect{s * 0.5 * 1.0, s * 0.5 * 2.0, -s * 0.5 * 1.0, -s * 0.5 * 2.0, s * 0.5, -s * 0.5};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(m.params()[i], expect[i], 1e-12);
}

TEST(GroupDro, ZeroEtaKeepsWeights) {
  MlpModel m = linear_model(2, 2, {0.1, 0.2, -0.3, 0.4, 0.0, 0.1});
  GroupWeights q{{0.2, 0.3, 0.5}};
  gdro_step(q, m, Tensor::from_rows({{1, 1}}), Tensor::column({1}), 2, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(q.q[0], 0.2);
  EXPECT_DOUBLE_EQ(q.q[1], 0.3);
  EXPECT_DOUBLE_EQ(q.q[2], 0.5);
}

TEST(GroupDro, EqualLossesStayUniform) {
  GroupWeights q = GroupWeights::uniform(2);
  Tensor X = Tensor::from_rows({{1.0, -1.0}});
  for (int t = 0; t < 50; ++t) {
    MlpModel m = linear_model(2, 2, std::vector<double>(6, 0.0));
    gdro_step(q, m, X, Tensor::column({0}), static_cast<std::size_t>(t % 2), 0.5, 0.1);
    if (t % 2 == 1) {
      EXPECT_NEAR(q.q[0], 0.5, 1e-12);
      EXPECT_NEAR(q.q[1], 0.5, 1e-12);
    }
  }
}

TEST(GroupDro, WeightsStayOnSimplex) {
  SpuriousSpec sp;
  sp.n = 400;
  sp.seed = 3;
  auto data = gen_spurious_groups(sp);
  MlpModel m = MlpModel::create({2, 2}, Activation::identity, Activation::identity, 1);
  GroupWeights q = GroupWeights::uniform(4);
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    std::size_t g = rng.below(4);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size() && rows.size() < 4; ++i)
      if (static_cast<std::size_t>(data.groups[i]) == g) rows.push_back(i);
    gdro_step(q, m, data.features(rows), data.loss_targets(rows, LossKind::softmax_ce), g, 0.2, 0.1);
    EXPECT_NEAR(std::accumulate(q.q.begin(), q.q.end(), 0.0), 1.0, 1e-12);
    for (double w : q.q) EXPECT_GE(w, 0.0);
  }
}

TEST(GroupDro, SingleGroupMatchesSampledSgd) {
  SpuriousSpec sp;
  sp.n = 200;
  auto data = gen_spurious_groups(sp);
  std::fill(data.groups.begin(), data.groups.end(), 0);
  MlpModel init = MlpModel::create({2, 4, 2}, Activation::tanh, Activation::identity, 5);
  GdroConfig cfg;
  cfg.steps = 100;
  cfg.eta_q = 0.5;
  cfg.seed = 11;
  auto res = gdro_train(init, data, data, cfg);
  EXPECT_EQ(res.model.params(), res.erm_model.params());
  EXPECT_DOUBLE_EQ(res.q.q[0], 1.0);
}

TEST(GroupDro, MissingGroupsRejected) {
  auto data = gen_two_gaussians({});
  MlpModel init = MlpModel::create({2, 2}, Activation::identity, Activation::identity, 0);
  EXPECT_THROW(gdro_train(init, data, data, {}), DomainError);
}

TEST(GroupDro, ReportCountsAndCsv) {
  auto data = gen_spurious_groups({});
  MlpModel m = MlpModel::create({2, 2}, Activation::identity, Activation::identity, 0);
  auto r = group_report(m, data);
  ASSERT_EQ(r.accuracy.size(), 4u);
  EXPECT_EQ(std::accumulate(r.count.begin(), r.count.end(), std::size_t{0}), data.size());
  EXPECT_LE(r.worst_group, *std::min_element(r.accuracy.begin(), r.accuracy.end()) + 1e-15);
  auto csv = r.to_csv("erm");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

// ---- GCE and LfF -----------------------------------------------------------

TEST(Gce, HandValues) {
  Tape tape;
  Var p = tape.constant(Tensor::from_rows({{0.0, 1.0}, {0.5, 0.5}}));
  std::vector<int> y{1, 0};
  EXPECT_NEAR(gce_loss(p, y, 1.0).item(), 0.25, 1e-15);
  Var p1 = tape.constant(Tensor::from_rows({{0.0, 1.0}}));
  EXPECT_DOUBLE_EQ(gce_loss(p1, std::vector<int>{1}, 0.7).item(), 0.0);
  Var p2 = tape.constant(Tensor::from_rows({{0.5, 0.5}}));
  EXPECT_NEAR(gce_loss(p2, std::vector<int>{0}, 1.0).item(), 0.5, 1e-15);
}

TEST(Gce, SmallQApproachesCrossEntropy) {
  Tape tape;
  Var z = tape.constant(Tensor::from_rows({{0.3, -0.2, 0.5}, {0.1, 0.0, 0.4}}));
  std::vector<int> y{2, 2};
  double ce = loss(z, Tensor::column({2, 2}), LossKind::softmax_ce).item();
  EXPECT_NEAR(gce_loss_logits(z, y, 1e-4).item(), ce, 1e-4);
  Var p = tape.constant(softmax_rows(z.value()));
  EXPECT_NEAR(gce_loss(p, y, 1e-4).item(), ce, 1e-4);
}

TEST(Gce, GradientIsCeGradientTimesPowerOfPy) {
  MlpModel m = MlpModel::create({3, 4, 3}, Activation::tanh, Activation::identity, 2);
  Tensor x = Tensor::from_rows({{0.5, -0.2, 1.0}});
  const double q = 0.7;
  Tape tape;
  Var th = tape.variable(Tensor::row(m.params()));
  Var z = forward(m, th, tape.constant(x));
  auto g_gce = grad_params(gce_loss_logits(z, std::vector<int>{1}, q), th);
  auto g_ce = grad_params(loss(z, Tensor::column({1}), LossKind::softmax_ce), th);
  double py = softmax_rows(z.value())(0, 1);
  for (std::size_t i = 0; i < g_ce.size(); ++i) EXPECT_NEAR(g_gce[i], std::pow(py, q) * g_ce[i], 1e-12);
}

TEST(Gce, RejectsNonPositiveQ) {
  Tape tape;
  Var p = tape.constant(Tensor::from_rows({{0.5, 0.5}}));
  EXPECT_THROW(gce_loss(p, std::vector<int>{0}, 0.0), DomainError);
  EXPECT_THROW(gce_loss(p, std::vector<int>{0}, -1.0), DomainError);
  LffConfig cfg;
  cfg.q = 0.0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(LfF, WeightExamples) {
  EXPECT_NEAR(lff_weight(5.0, 0.5), 5.0 / 5.5, 1e-15);
  EXPECT_NEAR(lff_weight(5.0, 0.5), 0.9091, 5e-5);
  EXPECT_DOUBLE_EQ(lff_weight(1.3, 1.3), 0.5);
  EXPECT_DOUBLE_EQ(lff_weight(2.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(lff_weight(0.0, 0.0), 0.5);
  EXPECT_THROW(lff_weight(-1.0, 1.0), DomainError);
}

TEST(LfF, WeightsBoundedAndMonotone) {
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    double b = rng.uniform(0, 5), d = rng.uniform(0, 5), e = rng.uniform(0.01, 1);
    double w = lff_weight(b, d);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
    EXPECT_GE(lff_weight(b + e, d), w);
    EXPECT_LE(lff_weight(b, d + e), w);
  }
}

TEST(LfF, UnbiasedDataStartsNeutral) {
  DiagonalSpec ds;
  ds.n = 600;
  ds.rho = 0.0;
  ds.noise_sigma = 0.5;
  ds.seed = 2;
  auto train = gen_diagonal(ds);
  MlpModel m = MlpModel::create({4, 8, 2}, Activation::tanh, Activation::identity, 1);
  LffConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.1 / 64;
  auto res = lff_train({m, m}, train, train, cfg);
  EXPECT_NEAR(res.epoch_mean_weight[0], 0.5, 0.05);
}

TEST(LfF, ConflictingSamplesGetLargerWeights) {
  DiagonalSpec ds;
  ds.n = 1000;
  ds.rho = 0.95;
  ds.noise_sigma = 0.3;
  ds.task_scale = 0.5;
  ds.bias_scale = 2.0;
  auto train = gen_diagonal(ds);
  ExpertPair init{MlpModel::create({4, 8, 2}, Activation::tanh, Activation::identity, 1),
                  MlpModel::create({4, 8, 2}, Activation::tanh, Activation::identity, 2)};
  LffConfig cfg;
  cfg.epochs = 10;
  auto res = lff_train(init, train, train, cfg);
  Tape tape;
  Tensor yt = train.loss_targets(LossKind::softmax_ce);
  auto ce = [&](const MlpModel& m) {
    return per_sample_loss(tape.constant(m.predict(train.X)), yt, LossKind::softmax_ce).value().data();
  };
  auto w = lff_weights(ce(res.models.first), ce(res.models.second));
  double aligned = 0, conflicting = 0;
  std::size_t na = 0, nc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (train.bias[i] == train.labels[i]) aligned += w[i], ++na;
    else conflicting += w[i], ++nc;
  }
  ASSERT_GT(nc, 0u);
  EXPECT_GT(conflicting / static_cast<double>(nc), aligned / static_cast<double>(na));
}

// ---- DANN ------------------------------------------------------------------

TEST(Dann, ZeroLambdaMatchesErm) {
  DiagonalSpec ds;
  ds.n = 200;
  ds.rho = 0.5;
  auto data = gen_diagonal(ds);
  MlpModel init = MlpModel::create({4, 6, 2}, Activation::tanh, Activation::identity, 3);
  MlpModel head = MlpModel::create({6, 2}, Activation::identity, Activation::identity, 4);
  DannConfig cfg;
  cfg.lambda_max = 0.0;
  cfg.train.epochs = 3;
  cfg.train.seed = 8;
  auto res = dann_train(init, head, data, data.bias, cfg);
  MlpModel erm = init;
  train_sgd(erm, data, cfg.train, LossKind::softmax_ce);
  EXPECT_EQ(res.model.params(), erm.params());
}

TEST(Dann, SingleDomainRejected) {
  auto data = gen_diagonal({});
  MlpModel init = MlpModel::create({4, 6, 2}, Activation::tanh, Activation::identity, 3);
  MlpModel head = MlpModel::create({6, 2}, Activation::identity, Activation::identity, 4);
  std::vector<int> one(data.size(), 0);
  EXPECT_THROW(dann_train(init, head, data, one, {}), DomainError);
}

TEST(Dann, ScrubsDomainFromFeatures) {
  DiagonalSpec ds;
  ds.n = 1000;
  ds.unbiased = true;
  ds.noise_sigma = 0.3;
  ds.seed = 5;
  auto data = gen_diagonal(ds);
  MlpModel init = MlpModel::create({4, 8, 2}, Activation::tanh, Activation::identity, 3);
  MlpModel head = MlpModel::create({8, 2}, Activation::identity, Activation::identity, 4);
  ProbeConfig pc;
  pc.holdout = 0.3;
  pc.epochs = 40;

  // Sanity floor: the domain is easy to read from untrained features.
  auto before = fit_linear_probe(features_at(init, data.X, 1), data.bias, 2, pc);
  EXPECT_GT(before.test_accuracy, 0.9);

  DannConfig cfg;
  cfg.train.epochs = 60;
  cfg.train.lr = LrSchedule::linear(0.1, 0.0);
  cfg.lambda_max = 3.0;
  cfg.domain_lr = 0.5;
  cfg.domain_steps = 30;
  auto res = dann_train(init, head, data, data.bias, cfg);
  auto after = fit_linear_probe(features_at(res.model, data.X, 1), data.bias, 2, pc);
  EXPECT_LE(after.test_accuracy, 0.5 + 0.10);
  EXPECT_GT(accuracy(res.model, data), 0.9);
}

// ---- HSIC ------------------------------------------------------------------

TEST(Hsic, MatchesUStatisticDefinition) {
  Rng rng(6);
  Tensor U = gaussian(rng, 7, 2), V = gaussian(rng, 7, 1);
  for (std::size_t i = 0; i < 7; ++i) V(i, 0) += U(i, 0);
  HsicOptions o{0.8, 1.3};
  EXPECT_NEAR(hsic_unbiased(U, V, o), hsic_ustat(U, V, 0.8, 1.3), 1e-10);
}

TEST(Hsic, Symmetric) {
  Rng rng(7);
  Tensor U = gaussian(rng, 40, 3), V = gaussian(rng, 40, 2);
  EXPECT_NEAR(hsic_unbiased(U, V), hsic_unbiased(V, U), 1e-10);
}

TEST(Hsic, ConstantArgumentGivesExactZero) {
  Rng rng(8);
  Tensor U = gaussian(rng, 30, 2);
  Tensor V = Tensor::full(30, 3, 1.7);
  EXPECT_EQ(hsic_unbiased(U, V), 0.0);
  EXPECT_EQ(hsic_unbiased(V, U), 0.0);
}

TEST(Hsic, RejectsTooFewSamples) {
  Tensor U = Tensor::from_rows({{1}, {2}, {3}});
  EXPECT_THROW(hsic_unbiased(U, U), DomainError);
}

TEST(Hsic, PermutationNull) {
  const std::size_t n = 500;
  Rng rng(10);
  Tensor U = gaussian(rng, n, 2), V = gaussian(rng, n, 2);
  HsicOptions o{median_pairwise_distance(U), median_pairwise_distance(V)};
  auto null_quantile = [&](const Tensor& A, const Tensor& B) {
    Rng prng(99);
    std::vector<double> null;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (int p = 0; p < 200; ++p) {
      prng.shuffle(std::span<std::size_t>(idx));
      null.push_back(hsic_unbiased(A, B.select_rows(idx), o));
    }
    std::sort(null.begin(), null.end());
    return null[197];
  };
  double q99 = null_quantile(U, V);
  EXPECT_LT(std::abs(hsic_unbiased(U, V, o)), q99);
  HsicOptions same{o.sigma_u, o.sigma_u};
  double q99_same = null_quantile(U, U);
  EXPECT_GT(hsic_unbiased(U, U, same), q99_same);
}

TEST(Hsic, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor U = gaussian(rng, 6, 2), V = gaussian(rng, 6, 1);
  HsicOptions o{1.1, 0.9};
  Tape tape;
  Var uv = tape.variable(U);
  auto g = grad_input(hsic_unbiased(uv, tape.constant(V), o), uv);
  auto f = [&](std::span<const double> x) {
    return hsic_unbiased(Tensor({6, 2}, std::vector<double>(x.begin(), x.end())), V, o);
  };
  auto fd = finite_diff_grad(f, U.data(), 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-8);
}

// ---- ReBias ----------------------------------------------------------------

TEST(Rebias, ZeroLambdaIsTwoIndependentSteps) {
  ExpertPair pair{MlpModel::create({4, 5, 2}, Activation::tanh, Activation::identity, 1),
                  MlpModel::create({4, 2}, Activation::identity, Activation::identity, 2)};
  auto data = gen_diagonal({});
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7};
  Tensor X = data.features(rows);
  std::vector<int> y(data.labels.begin(), data.labels.begin() + 8);
  auto plain_step = [&](MlpModel m) {
    Tape tape;
    Var th = tape.variable(Tensor::row(m.params()));
    auto g = grad_params(loss(forward(m, th, tape.constant(X)), data.loss_targets(rows, LossKind::softmax_ce),
                              LossKind::softmax_ce),
                         th);
    for (std::size_t i = 0; i < g.size(); ++i) m.params()[i] -= 0.2 * g[i];
    return m.params();
  };
  auto ef = plain_step(pair.first), eg = plain_step(pair.second);
  rebias_step(pair, X, y, 0.0, 0.2);
  EXPECT_EQ(pair.first.params(), ef);
  EXPECT_EQ(pair.second.params(), eg);
}

TEST(Rebias, SmallModelLearnsTheBias) {
  DiagonalSpec ds;
  ds.n = 600;
  ds.rho = 1.0;
  ds.noise_sigma = 0.3;
  auto data = gen_diagonal(ds);
  MlpModel g = MlpModel::create({4, 2}, Activation::identity, Activation::identity, 2);
  TrainConfig tc;
  tc.epochs = 10;
  train_sgd(g, data, tc, LossKind::softmax_ce);
  EXPECT_GT(accuracy(g, data), 0.95);
}

TEST(Rebias, TrainingLowersMonitoredHsic) {
  DiagonalSpec ds;
  ds.n = 512;
  ds.rho = 0.99;
  ds.noise_sigma = 0.3;
  auto data = gen_diagonal(ds);
  ExpertPair init{MlpModel::create({4, 8, 2}, Activation::tanh, Activation::identity, 1),
                  MlpModel::create({4, 4, 2}, Activation::tanh, Activation::identity, 2)};
  RebiasConfig cfg;
  cfg.lambda = 5.0;
  cfg.epochs = 10;
  auto res = rebias_train(init, data, cfg);
  ASSERT_EQ(res.epoch_hsic.size(), 11u);
  EXPECT_LT(res.epoch_hsic.back(), res.epoch_hsic.front());
}

// ---- input-gradient independence -------------------------------------------

TEST(GradIndep, OrthogonalGradientsGiveZero) {
  std::vector<MlpModel> models{linear_model(2, 1, {1.0, 0.0, 0.3}), linear_model(2, 1, {0.0, 2.0, -0.1})};
  Tape tape;
  std::vector<Var> th{tape.variable(Tensor::row(models[0].params())), tape.variable(Tensor::row(models[1].params()))};
  auto r = grad_indep_loss(models, th, Tensor::from_rows({{0.2, 0.4}, {1.0, -1.0}}));
  EXPECT_EQ(r.loss.item(), 0.0);
  EXPECT_EQ(mi_surrogate(r.cos2[0]), 0.0);
}

TEST(GradIndep, IdenticalModelsGiveOne) {
  MlpModel m = MlpModel::create({3, 5, 2}, Activation::tanh, Activation::identity, 1);
  std::vector<MlpModel> models{m, m, m};
  Tape tape;
  std::vector<Var> th;
  for (auto& mm : models) th.push_back(tape.variable(Tensor::row(mm.params())));
  auto r = grad_indep_loss(models, th, Tensor::from_rows({{0.2, 0.4, -1.0}, {1.0, -1.0, 0.5}}));
  EXPECT_EQ(r.pairs, 3u);
  EXPECT_NEAR(r.loss.item(), 1.0, 1e-12);
}

TEST(GradIndep, InvariantToPositiveRescaling) {
  MlpModel a = MlpModel::create({3, 4, 1}, Activation::tanh, Activation::identity, 1);
  MlpModel b = MlpModel::create({3, 4, 1}, Activation::tanh, Activation::identity, 2);
  Tensor X = Tensor::from_rows({{0.2, 0.4, -1.0}, {1.0, -1.0, 0.5}, {0.0, 0.3, 0.3}});
  auto eval = [&](const MlpModel& m2) {
    std::vector<MlpModel> models{a, m2};
    Tape tape;
    std::vector<Var> th{tape.constant(Tensor::row(a.params())), tape.constant(Tensor::row(m2.params()))};
    return grad_indep_loss(models, th, X).loss.item();
  };
  MlpModel b3 = b;
  for (std::size_t i = b3.weight_offset(1); i < b3.param_count(); ++i) b3.params()[i] *= 3.0;
  EXPECT_NEAR(eval(b), eval(b3), 1e-12);
  double l = eval(b);
  EXPECT_GT(l, 0.0);
  EXPECT_LT(l, 1.0);
}

TEST(GradIndep, ZeroGradientPairSkipped) {
  std::vector<MlpModel> models{linear_model(2, 1, {1.0, 0.0, 0.3}), linear_model(2, 1, {0.0, 0.0, 1.0})};
  Tape tape;
  std::vector<Var> th{tape.constant(Tensor::row(models[0].params())), tape.constant(Tensor::row(models[1].params()))};
  auto r = grad_indep_loss(models, th, Tensor::from_rows({{0.2, 0.4}}));
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.pairs, 0u);
  EXPECT_EQ(r.loss.item(), 0.0);
}

TEST(GradIndep, LossGradientMatchesFiniteDifferences) {
  MlpModel a = MlpModel::create({2, 3, 2}, Activation::tanh, Activation::identity, 4);
  MlpModel b = MlpModel::create({2, 3, 2}, Activation::tanh, Activation::identity, 5);
  Tensor X = Tensor::from_rows({{0.2, 0.4}, {-0.7, 0.1}});
  auto value = [&](std::span<const double> p) {
    MlpModel a2 = a;
    a2.set_params(std::vector<double>(p.begin(), p.end()));
    std::vector<MlpModel> models{a2, b};
    Tape tape;
    std::vector<Var> th{tape.constant(Tensor::row(a2.params())), tape.constant(Tensor::row(b.params()))};
    return grad_indep_loss(models, th, X).loss.item();
  };
  std::vector<MlpModel> models{a, b};
  Tape tape;
  std::vector<Var> th{tape.variable(Tensor::row(a.params())), tape.constant(Tensor::row(b.params()))};
  auto g = grad_params(grad_indep_loss(models, th, X).loss, th[0]);
  auto fd = finite_diff_grad(value, a.params(), 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-7);
}

TEST(GradIndep, MiSurrogate) {
  EXPECT_EQ(mi_surrogate(0.0), 0.0);
  EXPECT_NEAR(mi_surrogate(0.75), -0.5 * std::log(0.25), 1e-15);
  EXPECT_THROW(mi_surrogate(1.5), DomainError);
}

// ---- the diagonal premise --------------------------------------------------

TEST(Diagonal, ErmOnFullyDiagonalDataMatchesBiasOnlyPredictor) {
  DiagonalSpec ds;
  ds.n = 1000;
  ds.classes = 4;
  ds.embed_dim = 4;
  ds.rho = 1.0;
  ds.noise_sigma = 0.2;
  ds.task_scale = 1.0;
  ds.bias_scale = 3.0;
  auto train = gen_diagonal(ds);
  auto test_spec = ds;
  test_spec.unbiased = true;
  test_spec.seed = 17;
  test_spec.n = 2000;
  auto test = gen_diagonal(test_spec);

  MlpModel erm = MlpModel::create({8, 16, 4}, Activation::tanh, Activation::identity, 3);
  TrainConfig tc;
  tc.epochs = 20;
  train_sgd(erm, train, tc, LossKind::softmax_ce);
  const double acc_erm = accuracy(erm, test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += test.bias[i] == test.labels[i];
  const double acc_bias = static_cast<double>(hits) / static_cast<double>(test.size());
  // Two-proportion z statistic.
  const double n = static_cast<double>(test.size());
  const double pooled = 0.5 * (acc_erm + acc_bias);
  const double z = (acc_erm - acc_bias) / std::sqrt(pooled * (1 - pooled) * 2.0 / n);
  EXPECT_LT(std::abs(z), 3.0) << "erm " << acc_erm << " bias-only " << acc_bias;
}
