#include "trustkit/debias.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/grad.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

namespace {

Tensor label_column(std::span<const int> labels) {
  Tensor t({labels.size(), 1});
  for (std::size_t i = 0; i < labels.size(); ++i) t(i, 0) = labels[i];
  return t;
}

Tensor one_hot(std::span<const int> labels, std::size_t K) {
  Tensor t({labels.size(), K});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K) throw DomainError("label out of range");
    t(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return t;
}

void sgd_update(std::vector<double>& theta, std::span<const double> g, double lr, double weight_decay,
                double grad_scale = 1.0) {
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * (grad_scale * g[i] + weight_decay * theta[i]);
}

std::vector<int> gather(std::span<const int> v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace

// ---- moment matching -------------------------------------------------------

Var moment_align_penalty(std::span<const Var> domains) {
  if (domains.size() < 2) throw DomainError("moment penalty needs at least two domains");
  const std::size_t q = domains[0].cols();
  std::vector<Var> mu, cov;
  for (const Var& F : domains) {
    if (F.cols() != q) throw ShapeError("moment penalty: domains have different feature widths");
    const std::size_t n = F.rows();
    if (n < 2) throw DomainError("moment penalty: every domain needs at least two samples");
    Var m = scale(sum_to(F, 1, q), 1.0 / static_cast<double>(n));
    Var C = F - m;
    mu.push_back(m);
    cov.push_back(scale(matmul(transpose(C), C), 1.0 / static_cast<double>(n - 1)));
  }
  Var total;
  for (std::size_t a = 0; a < domains.size(); ++a) {
    for (std::size_t b = a + 1; b < domains.size(); ++b) {
      Var term = sum(square(mu[a] - mu[b])) + sum(square(cov[a] - cov[b]));
      total = total.valid() ? total + term : term;
    }
  }
  return total;
}

double moment_align_penalty(std::span<const Tensor> domains) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : domains) vars.push_back(tape.constant(t.as_matrix()));
  return moment_align_penalty(vars).item();
}

// ---- group DRO -------------------------------------------------------------

GroupWeights GroupWeights::uniform(std::size_t m) {
  if (m == 0) throw DomainError("group weights need at least one group");
  return {std::vector<double>(m, 1.0 / static_cast<double>(m))};
}

double gdro_step(GroupWeights& state, MlpModel& model, const Tensor& X, const Tensor& targets, std::size_t g,
                 double eta_q, double eta_theta, LossKind kind, double weight_decay) {
  if (g >= state.size()) throw DomainError("group index out of range");
  Tape tape;
  Var theta = tape.variable(Tensor::row(model.params()));
  Var l = loss(forward(model, theta, tape.constant(X)), targets, kind);
  const double value = l.item();
  auto grad = grad_params(l, theta);

  state.q[g] *= std::exp(eta_q * value);
  const double total = std::accumulate(state.q.begin(), state.q.end(), 0.0);
  if (!std::isfinite(total) || total <= 0) throw NumericError("group weights overflowed");
  for (double& w : state.q) w /= total;

  sgd_update(model.params(), grad, eta_theta, weight_decay, state.q[g]);
  return value;
}

std::string GroupReport::to_csv(const std::string& label) const {
  std::ostringstream os;
  os.precision(10);
  os << "model,group,count,accuracy\n";
  for (std::size_t g = 0; g < accuracy.size(); ++g) os << label << ',' << g << ',' << count[g] << ',' << accuracy[g] << '\n';
  os << label << ",worst," << std::accumulate(count.begin(), count.end(), std::size_t{0}) << ',' << worst_group << '\n';
  os << label << ",average," << std::accumulate(count.begin(), count.end(), std::size_t{0}) << ',' << average << '\n';
  return os.str();
}

GroupReport group_report(const MlpModel& model, const LabeledDataset& data) {
  if (!data.has_groups()) throw DomainError("dataset has no group labels");
  const std::size_t m = data.num_groups();
  Tensor logits = model.predict(data.X);
  std::vector<std::size_t> hits(m, 0);
  GroupReport r;
  r.count.assign(m, 0);
  r.accuracy.assign(m, 0.0);
  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto g = static_cast<std::size_t>(data.groups[i]);
    Tensor row = logits.row_slice(i);
    std::vector<int> y{data.labels[i]};
    bool ok = accuracy(row.as_matrix(), y) == 1.0;
    ++r.count[g];
    hits[g] += ok;
    total_hits += ok;
  }
  r.worst_group = 1.0;
  for (std::size_t g = 0; g < m; ++g) {
    if (r.count[g] == 0) continue;
    r.accuracy[g] = static_cast<double>(hits[g]) / static_cast<double>(r.count[g]);
    r.worst_group = std::min(r.worst_group, r.accuracy[g]);
  }
  r.average = data.size() ? static_cast<double>(total_hits) / static_cast<double>(data.size()) : 0.0;
  return r;
}

namespace {

// Draws (group, batch) pairs; group choice and within-group indices use
// separate streams so a one-group run matches sampling from all rows.
class GroupSampler {
 public:
  GroupSampler(std::vector<std::vector<std::size_t>> members, std::uint64_t seed, bool by_size)
      : members_(std::move(members)), group_rng_(Rng(seed).split(1)), row_rng_(Rng(seed).split(2)), by_size_(by_size) {
    for (const auto& m : members_) total_ += m.size();
  }

  std::size_t next_group() {
    if (by_size_) {
      std::size_t r = group_rng_.below(total_);
      for (std::size_t g = 0; g < members_.size(); ++g) {
        if (r < members_[g].size()) return g;
        r -= members_[g].size();
      }
    }
    std::size_t g;
    do g = group_rng_.below(members_.size());
    while (members_[g].empty());
    return g;
  }

  std::vector<std::size_t> batch(std::size_t g, std::size_t size) {
    std::vector<std::size_t> out(size);
    for (auto& r : out) r = members_[g][row_rng_.below(members_[g].size())];
    return out;
  }

 private:
  std::vector<std::vector<std::size_t>> members_;
  Rng group_rng_, row_rng_;
  bool by_size_;
  std::size_t total_ = 0;
};

void check_gdro(const GdroConfig& cfg) {
  if (cfg.batch_size < 1) throw DomainError("batch_size must be at least 1");
  if (!(cfg.eta_q >= 0) || !(cfg.eta_theta >= 0)) throw DomainError("step sizes must be non-negative");
}

}  // namespace

void sampled_sgd(MlpModel& model, const LabeledDataset& data, const GdroConfig& cfg) {
  check_gdro(cfg);
  if (data.size() == 0) throw DomainError("training set is empty");
  GroupSampler sampler({data.all_rows()}, cfg.seed, false);
  GroupWeights one = GroupWeights::uniform(1);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::size_t g = sampler.next_group();
    auto rows = sampler.batch(g, cfg.batch_size);
    gdro_step(one, model, data.features(rows), data.loss_targets(rows, LossKind::softmax_ce), 0, 0.0, cfg.eta_theta,
              LossKind::softmax_ce, cfg.weight_decay);
  }
}

GdroResult gdro_train(const MlpModel& init, const LabeledDataset& train, const LabeledDataset& test,
                      const GdroConfig& cfg) {
  check_gdro(cfg);
  if (!train.has_groups()) throw DomainError("group DRO needs group labels");
  const std::size_t m = train.num_groups();
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t i = 0; i < train.size(); ++i) members[static_cast<std::size_t>(train.groups[i])].push_back(i);

  GdroResult res{init, GroupWeights::uniform(m), {}, init, {}};
  GroupSampler sampler(members, cfg.seed, cfg.sample_by_size);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::size_t g = sampler.next_group();
    auto rows = sampler.batch(g, cfg.batch_size);
    gdro_step(res.q, res.model, train.features(rows), train.loss_targets(rows, LossKind::softmax_ce), g, cfg.eta_q,
              cfg.eta_theta, LossKind::softmax_ce, cfg.weight_decay);
  }
  sampled_sgd(res.erm_model, train, cfg);
  res.report = group_report(res.model, test);
  res.erm_report = group_report(res.erm_model, test);
  return res;
}

// ---- generalized cross-entropy and LfF --------------------------------------

namespace {

Var gce_from_log_py(const Var& log_py, double q) {
  // (1 - exp(q log p_y)) / q
  return scale(add_scalar(neg(exp(scale(log_py, q))), 1.0), 1.0 / q);
}

void check_q(double q) {
  if (!(q > 0) || !std::isfinite(q)) throw DomainError("GCE exponent q must be positive");
}

}  // namespace

Var gce_loss(const Var& probs, std::span<const int> labels, double q) {
  check_q(q);
  if (probs.rows() != labels.size()) throw ShapeError("gce_loss: label count differs from rows");
  Tape& tape = *probs.tape();
  Var mask = tape.constant(one_hot(labels, probs.cols()));
  Var py = sum_rows(probs * mask);
  return mean(gce_from_log_py(log(clamp_min(py, 1e-12)), q));
}

Var gce_per_sample(const Var& logits, std::span<const int> labels, double q) {
  check_q(q);
  if (logits.rows() != labels.size()) throw ShapeError("gce_loss: label count differs from rows");
  Var log_py = neg(per_sample_loss(logits, label_column(labels), LossKind::softmax_ce));
  return gce_from_log_py(log_py, q);
}

Var gce_loss_logits(const Var& logits, std::span<const int> labels, double q) {
  return mean(gce_per_sample(logits, labels, q));
}

double lff_weight(double loss_b, double loss_d) {
  if (!(loss_b >= 0) || !(loss_d >= 0)) throw DomainError("LfF losses must be non-negative");
  const double s = loss_b + loss_d;
  return s == 0.0 ? 0.5 : loss_b / s;
}

std::vector<double> lff_weights(std::span<const double> loss_b, std::span<const double> loss_d) {
  if (loss_b.size() != loss_d.size()) throw ShapeError("lff_weights: length mismatch");
  std::vector<double> w(loss_b.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = lff_weight(loss_b[i], loss_d[i]);
  return w;
}

void LffConfig::validate() const {
  check_q(q);
  if (batch_size < 1 || epochs < 1) throw DomainError("batch_size and epochs must be at least 1");
  if (!(lr >= 0)) throw DomainError("learning rate must be non-negative");
}

LffResult lff_train(const ExpertPair& init, const LabeledDataset& train, const LabeledDataset& test,
                    const LffConfig& cfg) {
  cfg.validate();
  if (train.size() == 0 || train.labels.empty()) throw DomainError("LfF needs a labeled training set");
  if (init.first.output_dim() != init.second.output_dim()) throw ShapeError("LfF models have different outputs");
  LffResult res{init, {}, 0.0, 0.0};
  MlpModel& fb = res.models.first;
  MlpModel& fd = res.models.second;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double wsum = 0.0;
    for (const auto& batch : epoch_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
      const Tensor X = train.features(batch);
      const auto y = gather(train.labels, batch);
      const Tensor yt = label_column(y);
      {
        Tape tape;
        Var th = tape.variable(Tensor::row(fb.params()));
        Var l = sum(gce_per_sample(forward(fb, th, tape.constant(X)), y, cfg.q));
        sgd_update(fb.params(), grad_params(l, th), cfg.lr, cfg.weight_decay);
      }
      Tape tape;
      Var thd = tape.variable(Tensor::row(fd.params()));
      Var ce_d = per_sample_loss(forward(fd, thd, tape.constant(X)), yt, LossKind::softmax_ce);
      Tensor ce_b = per_sample_loss(tape.constant(fb.predict(X)), yt, LossKind::softmax_ce).value();
      Tensor w({batch.size(), 1});
      for (std::size_t i = 0; i < batch.size(); ++i) {
        w(i, 0) = lff_weight(ce_b(i, 0), ce_d.value()(i, 0));
        wsum += w(i, 0);
      }
      Var l = sum(ce_d * tape.constant(w));
      sgd_update(fd.params(), grad_params(l, thd), cfg.lr, cfg.weight_decay);
    }
    res.epoch_mean_weight.push_back(wsum / static_cast<double>(train.size()));
  }
  res.biased_accuracy = accuracy(fb, test);
  res.debiased_accuracy = accuracy(fd, test);
  return res;
}

// ---- domain-adversarial training ------------------------------------------

Tensor features_at(const MlpModel& model, const Tensor& X, std::size_t layer) {
  ForwardOptions fo;
  fo.last_layer = layer;
  return forward_values(model, X, fo);
}

DannResult dann_train(const MlpModel& init, const MlpModel& domain_head, const LabeledDataset& data,
                      std::span<const int> domains, const DannConfig& cfg) {
  if (domains.size() != data.size()) throw ShapeError("dann: one domain label per row is required");
  if (cfg.split_layer < 1 || cfg.split_layer >= init.num_layers())
    throw DomainError("dann: split_layer must leave at least one layer on each side");
  const std::size_t feat_dim = init.layers()[cfg.split_layer - 1].out;
  if (domain_head.input_dim() != feat_dim) throw ShapeError("dann: domain head input width differs from features");
  int max_domain = *std::max_element(domains.begin(), domains.end());
  std::vector<bool> seen(static_cast<std::size_t>(max_domain) + 1, false);
  for (int d : domains) {
    if (d < 0) throw DomainError("dann: negative domain label");
    seen[static_cast<std::size_t>(d)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) throw DomainError("dann needs at least two domains");
  if (domain_head.output_dim() <= static_cast<std::size_t>(max_domain))
    throw ShapeError("dann: domain head has too few outputs");

  DannResult res{init, domain_head, {}, {}};
  const std::size_t per_epoch = (data.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;
  const std::size_t total = per_epoch * cfg.train.epochs;
  const bool dropout = init.has_dropout();
  std::size_t step = 0;
  MlpModel& model = res.model;
  MlpModel& head = res.domain_head;

  BatchObjective obj = [&](Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t seed) {
    const double lambda = total > 1 ? cfg.lambda_max * static_cast<double>(step) / static_cast<double>(total - 1)
                                    : cfg.lambda_max;
    res.lambda.push_back(lambda);
    ++step;
    Var x = tape.constant(data.features(batch));
    ForwardOptions feat_opts;
    feat_opts.train_mode = dropout;
    feat_opts.seed = seed;
    feat_opts.last_layer = cfg.split_layer;
    Var feats = forward(model, theta, x, feat_opts);
    ForwardOptions head_opts = feat_opts;
    head_opts.first_layer = cfg.split_layer;
    head_opts.last_layer = std::numeric_limits<std::size_t>::max();
    Var ly = loss(forward(model, theta, feats, head_opts), data.loss_targets(batch, LossKind::softmax_ce),
                  LossKind::softmax_ce);
    if (lambda == 0.0) return ly;

    const Tensor dt = label_column(gather(domains, batch));
    for (std::size_t k = 0; k < cfg.domain_steps; ++k) {
      Tape inner;
      Var phi = inner.variable(Tensor::row(head.params()));
      Var ld = loss(forward(head, phi, inner.constant(feats.value())), dt, LossKind::softmax_ce);
      sgd_update(head.params(), grad_params(ld, phi), cfg.domain_lr, 0.0);
    }
    Var phi = tape.constant(Tensor::row(head.params()));
    Var ld = loss(forward(head, phi, feats), dt, LossKind::softmax_ce);
    return ly - scale(ld, lambda);
  };
  res.trace = train_loop(model.params(), data.size(), cfg.train, obj);
  return res;
}

// ---- HSIC and ReBias ------------------------------------------------------

double median_pairwise_distance(const Tensor& X) {
  const Tensor M = X.as_matrix();
  const std::size_t n = M.rows(), d = M.cols();
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += (M(i, k) - M(j, k)) * (M(i, k) - M(j, k));
      dist.push_back(std::sqrt(s));
    }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double med = *mid;
  if (dist.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dist.begin(), mid));
  return med > 0 ? med : 1.0;
}

namespace {

bool rows_identical(const Tensor& M) {
  for (std::size_t i = 1; i < M.rows(); ++i)
    for (std::size_t k = 0; k < M.cols(); ++k)
      if (M(i, k) != M(0, k)) return false;
  return true;
}

// RBF kernel with a zeroed diagonal.
Var rbf_offdiag(const Var& U, double sigma) {
  Tape& tape = *U.tape();
  const std::size_t n = U.rows();
  Var sq = sum_rows(square(U));
  Var D = clamp_min(sq + transpose(sq) - scale(matmul(U, transpose(U)), 2.0), 0.0);
  Tensor mask = Tensor::full(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = 0.0;
  return exp(scale(D, -1.0 / (2.0 * sigma * sigma))) * tape.constant(mask);
}

}  // namespace

Var hsic_unbiased(const Var& U, const Var& V, const HsicOptions& options) {
  if (U.rows() != V.rows()) throw ShapeError("hsic: U and V have different row counts");
  const std::size_t n = U.rows();
  if (n < 4) throw DomainError("hsic needs at least 4 samples");
  Tape& tape = *U.tape();
  if (rows_identical(U.value()) || rows_identical(V.value())) return tape.constant(Tensor::scalar(0.0));
  const double su = options.sigma_u.value_or(median_pairwise_distance(U.value()));
  const double sv = options.sigma_v.value_or(median_pairwise_distance(V.value()));
  if (!(su > 0) || !(sv > 0)) throw DomainError("hsic kernel widths must be positive");
  Var K = rbf_offdiag(U, su);
  Var L = rbf_offdiag(V, sv);
  const double nd = static_cast<double>(n);
  Var trace_kl = sum(K * L);
  Var ones_k = sum(K), ones_l = sum(L);
  Var cross = sum(sum_rows(K) * sum_rows(L));
  Var total = trace_kl + scale(ones_k * ones_l, 1.0 / ((nd - 1) * (nd - 2))) - scale(cross, 2.0 / (nd - 2));
  return scale(total, 1.0 / (nd * (nd - 3)));
}

double hsic_unbiased(const Tensor& U, const Tensor& V, const HsicOptions& options) {
  Tape tape;
  return hsic_unbiased(tape.constant(U.as_matrix()), tape.constant(V.as_matrix()), options).item();
}

Var rebias_features(const MlpModel& model, const Var& theta, const Var& X) {
  ForwardOptions fo;
  if (model.num_layers() > 1) fo.last_layer = model.num_layers() - 1;
  return forward(model, theta, X, fo);
}

RebiasLosses rebias_step(ExpertPair& pair, const Tensor& X, std::span<const int> labels, double lambda, double lr) {
  MlpModel& f = pair.first;
  MlpModel& g = pair.second;
  const Tensor yt = label_column(labels);
  RebiasLosses out;
  {
    Tape tape;
    Var x = tape.constant(X);
    Var th = tape.variable(Tensor::row(f.params()));
    Var lf = loss(forward(f, th, x), yt, LossKind::softmax_ce);
    out.loss_f = lf.item();
    Var obj = lf;
    if (lambda != 0.0) {
      Var h = hsic_unbiased(rebias_features(f, th, x), tape.constant(rebias_features(g, tape.constant(Tensor::row(g.params())), x).value()));
      out.hsic = h.item();
      obj = lf + scale(h, lambda);
    }
    sgd_update(f.params(), grad_params(obj, th), lr, 0.0);
  }
  Tape tape;
  Var x = tape.constant(X);
  Var th = tape.variable(Tensor::row(g.params()));
  Var lg = loss(forward(g, th, x), yt, LossKind::softmax_ce);
  out.loss_g = lg.item();
  Var obj = lg;
  if (lambda != 0.0) {
    Var fixed = tape.constant(rebias_features(f, tape.constant(Tensor::row(f.params())), x).value());
    obj = lg - scale(hsic_unbiased(fixed, rebias_features(g, th, x)), lambda);
  }
  sgd_update(g.params(), grad_params(obj, th), lr, 0.0);
  return out;
}

RebiasResult rebias_train(const ExpertPair& init, const LabeledDataset& data, const RebiasConfig& cfg) {
  if (cfg.batch_size < 4) throw DomainError("rebias batches need at least 4 rows for HSIC");
  if (cfg.epochs < 1) throw DomainError("epochs must be at least 1");
  RebiasResult res{init, {}};
  std::vector<std::size_t> monitor(std::min(cfg.monitor_rows, data.size()));
  std::iota(monitor.begin(), monitor.end(), std::size_t{0});
  const Tensor Xm = data.features(monitor);
  auto monitor_hsic = [&] {
    Tape tape;
    Var x = tape.constant(Xm);
    const auto& p = res.models;
    return hsic_unbiased(rebias_features(p.first, tape.constant(Tensor::row(p.first.params())), x),
                         rebias_features(p.second, tape.constant(Tensor::row(p.second.params())), x))
        .item();
  };
  res.epoch_hsic.push_back(monitor_hsic());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& batch : epoch_batches(data.size(), cfg.batch_size, cfg.seed, epoch)) {
      if (batch.size() < 4) continue;
      rebias_step(res.models, data.features(batch), gather(data.labels, batch), cfg.lambda, cfg.lr);
    }
    res.epoch_hsic.push_back(monitor_hsic());
  }
  return res;
}

// ---- input-gradient independence -------------------------------------------

GradIndepResult grad_indep_loss(std::span<const MlpModel> models, std::span<const Var> thetas, const Tensor& X) {
  if (models.size() < 2) throw DomainError("grad_indep_loss needs at least two models");
  if (thetas.size() != models.size()) throw ShapeError("grad_indep_loss: one theta per model");
  Tape& tape = *thetas[0].tape();
  // Per model: gradient of each summed logit column w.r.t. the input. Rows
  // are independent, so these blocks together form the flattened Jacobian.
  std::vector<std::vector<Var>> grads(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    Var x = tape.variable(X.as_matrix());
    Var z = forward(models[m], thetas[m], x);
    GradOptions go;
    go.create_graph = true;
    for (std::size_t k = 0; k < z.cols(); ++k) grads[m].push_back(tape.gradient(sum(slice_cols(z, k, k + 1)), x, go));
  }
  if (grads[0].size() == 0) throw ShapeError("grad_indep_loss: models have no outputs");
  auto inner = [&](std::size_t a, std::size_t b) {
    if (grads[a].size() != grads[b].size()) throw ShapeError("grad_indep_loss: output widths differ");
    Var s = sum(grads[a][0] * grads[b][0]);
    for (std::size_t k = 1; k < grads[a].size(); ++k) s = s + sum(grads[a][k] * grads[b][k]);
    return s;
  };
  std::vector<Var> norms;
  for (std::size_t m = 0; m < models.size(); ++m) norms.push_back(inner(m, m));

  GradIndepResult res;
  Var total;
  for (std::size_t a = 0; a < models.size(); ++a) {
    for (std::size_t b = a + 1; b < models.size(); ++b) {
      if (std::sqrt(norms[a].item()) < 1e-12 || std::sqrt(norms[b].item()) < 1e-12) {
        ++res.skipped;
        continue;
      }
      Var ab = inner(a, b);
      Var c2 = square(ab) / (norms[a] * norms[b]);
      res.cos2.push_back(c2.item());
      total = total.valid() ? total + c2 : c2;
      ++res.pairs;
    }
  }
  res.loss = res.pairs ? scale(total, 1.0 / static_cast<double>(res.pairs)) : tape.constant(Tensor::scalar(0.0));
  return res;
}

double mi_surrogate(double cos2) {
  if (!(cos2 >= 0) || cos2 > 1) throw DomainError("cos^2 must lie in [0, 1]");
  return -0.5 * std::log1p(-cos2);
}

}  // namespace trustkit
