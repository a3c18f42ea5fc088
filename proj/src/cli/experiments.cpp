#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "trustkit/adversarial.hpp"
#include "trustkit/attribution.hpp"
#include "trustkit/cli.hpp"
#include "trustkit/datagen.hpp"
#include "trustkit/epistemic.hpp"
#include "trustkit/errors.hpp"
#include "trustkit/log.hpp"
#include "trustkit/metrics.hpp"
#include "trustkit/serialize.hpp"
#include "trustkit/tda.hpp"
#include "trustkit/train.hpp"

namespace fs = std::filesystem;

namespace trustkit::cli {

namespace {

struct Context {
  json cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::vector<std::string> artifacts;

  const json& section(const char* name) const {
    static const json empty = json::object();
    return cfg.contains(name) ? cfg[name] : empty;
  }
  const json& params() const { return section("params"); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (out / name).string());
    f << content;
    artifacts.push_back(name);
  }
};

struct Split {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<int> flipped;
};

Split load_data(const json& d, std::uint64_t seed) {
  Split s;
  const auto n = d.value("n", std::size_t{1000});
  const auto test_n = d.value("test_n", n);
  const std::uint64_t test_seed = mix_seed(seed, 1);
  if (d.contains("csv")) {
    if (d.contains("generator")) throw ConfigError("/data: give either csv or generator, not both");
    LabeledDataset all = load_csv(d["csv"].get<std::string>());
    if (d.contains("test_csv")) {
      s.train = std::move(all);
      s.test = load_csv(d["test_csv"].get<std::string>(), CsvSchema{s.train.num_classes});
    } else {
      auto rows = all.all_rows();
      Rng rng(seed);
      rng.shuffle(std::span<std::size_t>(rows));
      std::size_t cut = std::max<std::size_t>(1, rows.size() * 7 / 10);
      if (cut >= rows.size()) throw ConfigError("/data/csv: need at least two rows to split off a test set");
      s.train = all.subset(std::span<const std::size_t>(rows).subspan(0, cut));
      s.test = all.subset(std::span<const std::size_t>(rows).subspan(cut));
    }
  } else {
    const std::string gen = d.value("generator", std::string("two_gaussians"));
    if (gen == "two_gaussians") {
      TwoGaussianSpec g;
      g.n = n;
      g.seed = seed;
      g.sigma = d.value("sigma", g.sigma);
      if (d.contains("mu0")) g.mu0 = d["mu0"].get<std::array<double, 2>>();
      if (d.contains("mu1")) g.mu1 = d["mu1"].get<std::array<double, 2>>();
      s.train = gen_two_gaussians(g);
      g.n = test_n;
      g.seed = test_seed;
      s.test = gen_two_gaussians(g);
    } else if (gen == "diagonal") {
      DiagonalSpec g;
      g.n = n;
      g.seed = seed;
      g.classes = d.value("classes", g.classes);
      g.rho = d.value("rho", g.rho);
      g.embed_dim = d.value("embed_dim", g.embed_dim);
      g.noise_sigma = d.value("noise_sigma", g.noise_sigma);
      g.task_scale = d.value("task_scale", g.task_scale);
      g.bias_scale = d.value("bias_scale", g.bias_scale);
      s.train = gen_diagonal(g);
      g.n = test_n;
      g.seed = test_seed;
      g.unbiased = d.value("unbiased_test", true);
      s.test = gen_diagonal(g);
    } else if (gen == "spurious") {
      SpuriousSpec g;
      g.n = n;
      g.seed = seed;
      g.majority = d.value("majority", g.majority);
      s.train = gen_spurious_groups(g);
      g.n = test_n;
      g.seed = test_seed;
      g.balanced = true;
      s.test = gen_spurious_groups(g);
    } else {
      RobustFeatureSpec g;
      g.n = n;
      g.seed = seed;
      g.weak = d.value("weak", g.weak);
      g.weak_shift = d.value("weak_shift", g.weak_shift);
      g.weak_sigma = d.value("weak_sigma", g.weak_sigma);
      s.train = gen_robust_features(g);
      g.n = test_n;
      g.seed = test_seed;
      s.test = gen_robust_features(g);
    }
  }
  if (s.train.is_regression()) throw ConfigError("/data: experiments need a classification dataset");
  const double flip = d.value("flip_fraction", 0.0);
  if (flip > 0) s.flipped = flip_labels(s.train, flip, mix_seed(seed, 2));
  return s;
}

MlpModel build_model(const json& m, const LabeledDataset& data, std::uint64_t seed, double default_dropout = 0.0,
                     std::vector<std::size_t> default_hidden = {16}) {
  std::vector<std::size_t> dims{data.dim()};
  for (auto h : m.value("hidden", default_hidden)) dims.push_back(h);
  dims.push_back(data.num_classes);
  const Activation act = activation_from_string(m.value("activation", std::string("tanh")));
  return MlpModel::create(dims, act, Activation::identity, seed, m.value("dropout", default_dropout));
}

TrainConfig train_config(const json& t, std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.epochs = t.value("epochs", std::size_t{20});
  c.batch_size = t.value("batch_size", std::size_t{32});
  c.weight_decay = t.value("weight_decay", 0.0);
  const double lr = t.value("lr", 0.1);
  c.lr = t.contains("final_lr") ? LrSchedule::linear(lr, t["final_lr"].get<double>()) : LrSchedule::constant(lr);
  return c;
}

Tensor test_targets(const LabeledDataset& d) { return d.loss_targets(d.all_rows(), LossKind::softmax_ce); }

std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                           const std::vector<double>& xs, const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const double W = 480, H = 320, L = 56, R = 16, T = 32, B = 44;
  double xmin = *std::min_element(xs.begin(), xs.end()), xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = 0, ymax = 1;
  for (const auto& [_, ys] : series)
    for (double y : ys) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 14 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << py(ymin) << "\" text-anchor=\"end\">" << ymin << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << py(ymax) + 4 << "\" text-anchor=\"end\">" << ymax << "</text>\n";
  std::size_t c = 0;
  for (const auto& [name, ys] : series) {
    const char* col = colors[c % 5];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << ',' << py(ys[i]) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (c + 1) << "\" text-anchor=\"end\" fill=\"" << col
       << "\">" << name << "</text>\n";
    ++c;
  }
  os << "</svg>\n";
  return os.str();
}

std::pair<double, double> feature_range(const Split& s) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* d : {&s.train, &s.test})
    for (double v : d->X.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return {lo, hi};
}

// ---- kinds ------------------------------------------------------------------

json run_train(Context& ctx, const Split& data) {
  MlpModel model = build_model(ctx.section("model"), data.train, ctx.seed);
  auto trace = train_sgd(model, data.train, train_config(ctx.section("train"), ctx.seed), LossKind::softmax_ce);
  for (const auto& p : save_model(model, ctx.out / "model")) ctx.artifacts.push_back(p.filename().string());
  std::ostringstream csv;
  csv.precision(12);
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < trace.epoch_loss.size(); ++e) csv << e + 1 << ',' << trace.epoch_loss[e] << '\n';
  ctx.write("loss.csv", csv.str());
  std::vector<double> epochs(trace.epoch_loss.size());
  std::iota(epochs.begin(), epochs.end(), 1.0);
  ctx.write("loss.svg", line_chart_svg("Training loss", "epoch", "loss", epochs, {{"train", trace.epoch_loss}}));
  return {{"train_accuracy", accuracy(model, data.train)},
          {"test_accuracy", accuracy(model, data.test)},
          {"final_loss", trace.epoch_loss.empty() ? 0.0 : trace.epoch_loss.back()},
          {"params", model.param_count()}};
}

json run_calibrate(Context& ctx, const Split& data) {
  const json& p = ctx.params();
  MlpModel model = build_model(ctx.section("model"), data.train, ctx.seed);
  train_sgd(model, data.train, train_config(ctx.section("train"), ctx.seed), LossKind::softmax_ce);
  Tensor logits = model.predict(data.test.X);
  const double amp = p.value("logit_scale", 1.0);
  for (auto& v : logits.values()) v *= amp;
  // Even rows fit the temperature, odd rows evaluate it.
  std::vector<std::size_t> fit_rows, eval_rows;
  for (std::size_t i = 0; i < logits.rows(); ++i) (i % 2 == 0 ? fit_rows : eval_rows).push_back(i);
  if (eval_rows.empty()) throw ConfigError("/data/test_n: calibration needs at least two test rows");
  auto pick = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> y;
    for (std::size_t r : rows) y.push_back(data.test.labels[r]);
    return y;
  };
  const auto bins = p.value("bins", std::size_t{10});
  const double t_min = p.value("t_min", 0.05), t_max = p.value("t_max", 20.0);
  const auto steps = p.value("t_steps", std::size_t{200});
  if (!(t_max > t_min)) throw ConfigError("/params/t_max: must exceed t_min");
  std::vector<double> grid(steps);
  for (std::size_t i = 0; i < steps; ++i)
    grid[i] = t_min * std::pow(t_max / t_min, static_cast<double>(i) / static_cast<double>(steps - 1));
  auto fit = fit_temperature(logits.select_rows(fit_rows), pick(fit_rows), grid, bins);
  Tensor eval_logits = logits.select_rows(eval_rows);
  auto before = ece_report(PredictionSet::from_logits(eval_logits, pick(eval_rows)), bins);
  auto after = ece_report(PredictionSet::from_logits(eval_logits, pick(eval_rows), fit.temperature), bins);
  ctx.write("reliability_before.svg", reliability_svg(before, "Before temperature scaling"));
  ctx.write("reliability_after.svg", reliability_svg(after, "After temperature scaling"));
  std::ostringstream csv;
  csv.precision(12);
  csv << "temperature,ece\n";
  for (std::size_t i = 0; i < fit.grid.size(); ++i) csv << fit.grid[i] << ',' << fit.grid_ece[i] << '\n';
  ctx.write("temperature_grid.csv", csv.str());
  return {{"temperature", fit.temperature},
          {"ece_before", before.ece},
          {"ece_after", after.ece},
          {"mce_before", before.mce},
          {"mce_after", after.mce},
          {"accuracy", accuracy(eval_logits, pick(eval_rows))},
          {"reliability_before", before.to_json()},
          {"reliability_after", after.to_json()}};
}

json run_attack(Context& ctx, const Split& data) {
  const json& p = ctx.params();
  auto [lo, hi] = feature_range(data);
  AttackConfig a;
  a.lo = p.value("lo", lo);
  a.hi = p.value("hi", hi);
  a.steps = p.value("steps", std::size_t{10});
  const double ratio = p.value("alpha_ratio", 2.5 / static_cast<double>(a.steps));
  a.random_start = p.value("random_start", false);
  a.seed = mix_seed(ctx.seed, 3);
  const auto grid = p.value("eps", std::vector<double>{0.0, 0.05, 0.1, 0.2});
  MlpModel model = build_model(ctx.section("model"), data.train, ctx.seed);
  TrainConfig tc = train_config(ctx.section("train"), ctx.seed);
  const bool robust = p.value("adversarial_train", false);
  if (robust) {
    AttackConfig t = a;
    t.eps = p.value("train_eps", grid.back());
    t.alpha = ratio * t.eps;
    adversarial_train(model, data.train, tc, t);
  } else {
    train_sgd(model, data.train, tc, LossKind::softmax_ce);
  }
  a.eps = grid.back();
  a.alpha = ratio * a.eps;
  auto rows = attack_report(model, data.test, grid, a);
  ctx.write("attack.csv", attack_report_csv(rows));
  std::vector<double> clean, fg, pg;
  json table = json::array();
  for (const auto& r : rows) {
    clean.push_back(r.clean);
    fg.push_back(r.fgsm);
    pg.push_back(r.pgd);
    table.push_back({{"eps", r.eps}, {"clean", r.clean}, {"fgsm", r.fgsm}, {"pgd", r.pgd}});
  }
  ctx.write("robustness.svg", line_chart_svg("Accuracy under attack", "eps", "accuracy", grid,
                                             {{"clean", clean}, {"fgsm", fg}, {"pgd", pg}}));
  return {{"adversarial_train", robust}, {"lo", a.lo}, {"hi", a.hi}, {"rows", table},
          {"pgd_accuracy", rows.back().pgd}, {"clean_accuracy", rows.front().clean}};
}

json run_attribute(Context& ctx, const Split& data) {
  const json& p = ctx.params();
  MlpModel model = build_model(ctx.section("model"), data.train, ctx.seed);
  train_sgd(model, data.train, train_config(ctx.section("train"), ctx.seed), LossKind::softmax_ce);
  const std::string method = p.value("method", std::string("saliency"));
  const auto steps = p.value("steps", std::size_t{64});
  const auto samples = p.value("samples", std::size_t{50});
  const double sigma = p.value("sigma", 0.15);
  const std::size_t d = data.train.dim();
  std::vector<double> fill =
      p.value("baseline", std::string("mean")) == "mean" ? feature_means(data.train.X) : std::vector<double>(d, 0.0);
  double gap_sum = 0;
  std::size_t gap_count = 0;
  AttributionFn attribution = [&](const MlpModel& m, const Tensor& x) -> std::vector<double> {
    const std::size_t c = argmax_rows(m.predict(x))[0];
    if (method == "saliency") return saliency(m, x, c).scores;
    if (method == "smoothgrad") {
      SmoothGradConfig sg;
      sg.samples = samples;
      sg.sigma = sigma;
      sg.seed = ctx.seed;
      return smoothgrad(m, x, c, sg).scores;
    }
    if (method == "ig") {
      auto r = integrated_gradients(m, x, Tensor::row(fill), c, steps);
      gap_sum += r.completeness_gap;
      ++gap_count;
      return r.map.raw;
    }
    if (method == "lime") {
      LimeConfig lc;
      lc.samples = std::max(samples, d + 1);
      lc.seed = ctx.seed;
      return lime(model_blackbox(m, c), x, fill, lc).weights;
    }
    auto game = blackbox_game(model_blackbox(m, c), x, fill);
    if (method == "shap_exact") return shap_exact(game, d);
    return shap_mc(game, d, samples, ctx.seed);
  };
  const auto rows = std::min(p.value("rows", std::size_t{5}), data.test.size());
  std::ostringstream csv;
  csv.precision(12);
  csv << "row,feature,score\n";
  json maps = json::array();
  for (std::size_t i = 0; i < rows; ++i) {
    auto a = attribution(model, data.test.X.row_slice(i));
    for (std::size_t j = 0; j < a.size(); ++j) csv << i << ',' << j << ',' << a[j] << '\n';
    maps.push_back(a);
  }
  ctx.write("attributions.csv", csv.str());
  json out{{"method", method}, {"rows", rows}, {"maps", maps}, {"test_accuracy", accuracy(model, data.test)}};
  if (gap_count) out["mean_completeness_gap"] = gap_sum / static_cast<double>(gap_count);
  if (p.contains("fractions")) {
    auto fr = p["fractions"].get<std::vector<double>>();
    auto rc = remove_and_classify(model, attribution, data.test, fr, fill, mix_seed(ctx.seed, 4));
    ctx.write("remove_classify.csv", rc.to_csv());
    ctx.write("remove_classify.svg", rc.to_svg());
    out["remove_classify"] = {{"fractions", rc.fractions},   {"accuracy", rc.accuracy},
                              {"random_accuracy", rc.random_accuracy}, {"auc", rc.auc},
                              {"random_auc", rc.random_auc}};
  }
  return out;
}

json run_influence(Context& ctx, const Split& data) {
  const json& p = ctx.params();
  const std::string method = p.value("method", std::string("exact"));
  // Hessian-based scores need a convex objective, so the default is a linear model.
  MlpModel model = build_model(ctx.section("model"), data.train, ctx.seed, 0.0, {});
  TrainConfig tc = train_config(ctx.section("train"), ctx.seed);
  tc.tracin_full = method == "tracin";
  auto trace = train_sgd(model, data.train, tc, LossKind::softmax_ce);
  auto problem = InfluenceProblem::from(model, data.train, LossKind::softmax_ce, tc.weight_decay);
  const auto idx = p.value("test_index", std::size_t{0});
  if (idx >= data.test.size()) throw ConfigError("/params/test_index: beyond the test set");
  Tensor x = data.test.X.row_slice(idx), t = test_targets(data.test).row_slice(idx);
  const double damping = p.value("damping", kDefaultDamping);
  InfluenceReport rep;
  if (method == "tracin") {
    rep = tracin(problem, trace, x, t);
  } else {
    Tensor H = problem.hessian();
    auto gz = problem.grad_at(x, t);
    Tensor G = problem.train_gradients();
    if (method == "exact") {
      rep = influence_from_hessian(H, gz, G, damping);
    } else if (method == "eig") {
      rep = eig_projected_influence(H, std::min(p.value("k", std::size_t{8}), problem.param_count()), gz, G);
    } else {
      LissaConfig lc;
      lc.damping = damping;
      lc.scale = lissa_scale_bound(H);
      lc.iterations = p.value("iterations", std::size_t{500});
      lc.repeats = p.value("repeats", std::size_t{1});
      lc.seed = ctx.seed;
      auto h = lissa_ihvp(problem_hvp_oracle(problem, p.value("batch_size", problem.size())), gz, lc).estimate;
      rep.method = "lissa";
      rep.damping = damping;
      rep.iterations = lc.iterations;
      for (std::size_t j = 0; j < G.rows(); ++j) {
        double s = 0;
        for (std::size_t c = 0; c < G.cols(); ++c) s += G(j, c) * h[c];
        rep.scores.push_back(s);
      }
    }
  }
  ctx.write("influence.csv", rep.to_csv(data.train.labels, data.flipped));
  std::vector<std::size_t> order(rep.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rep.scores[a] > rep.scores[b]; });
  const std::size_t top = std::min<std::size_t>(5, order.size());
  json out{{"method", rep.method},
           {"test_index", idx},
           {"damping", rep.damping},
           {"approximate", rep.approximate},
           {"top_helpful", std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top))},
           {"top_harmful", std::vector<std::size_t>(order.rbegin(), order.rbegin() + static_cast<std::ptrdiff_t>(top))}};
  if (method == "eig") out["k"] = rep.k;
  if (p.value("self_influence", !data.flipped.empty())) {
    auto how = method == "tracin" ? SelfInfluenceMethod::tracin : SelfInfluenceMethod::exact;
    auto self = self_influence(problem, how, &trace, data.flipped, damping);
    InfluenceReport srep;
    srep.scores = self.scores;
    ctx.write("self_influence.csv", srep.to_csv(data.train.labels, data.flipped));
    if (!data.flipped.empty()) ctx.write("mislabel.json", mislabel_report_json(self, data.flipped, rep.method) + "\n");
    out["self_influence_auroc"] = self.auroc ? json(*self.auroc) : json(nullptr);
  }
  return out;
}

json run_uncertainty(Context& ctx, const Split& data) {
  const json& p = ctx.params();
  const std::string method = p.value("method", std::string("ensemble"));
  MlpModel model = build_model(ctx.section("model"), data.train, ctx.seed, method == "mc_dropout" ? 0.1 : 0.0);
  TrainConfig tc = train_config(ctx.section("train"), ctx.seed);
  const auto K = p.value("samples", std::size_t{20});
  PosteriorSampler sampler;
  if (method == "ensemble") {
    sampler = ensemble_train(model, data.train, p.value("members", std::size_t{5}), tc);
  } else {
    auto trace = train_sgd(model, data.train, tc, LossKind::softmax_ce);
    if (method == "mc_dropout") {
      if (!model.has_dropout()) throw ConfigError("/model/dropout: mc_dropout needs a positive dropout rate");
      sampler = McDropoutSampler{model.params()};
    } else {
      sampler = fit_swag(trace, std::min(p.value("rank", std::size_t{10}), trace.epoch_snapshots.size()), true);
    }
  }
  // OOD inputs: the test set shifted along every axis by ood_shift training standard deviations.
  const double shift = p.value("ood_shift", 5.0);
  auto mean = feature_means(data.train.X);
  Tensor ood = data.test.X;
  for (std::size_t j = 0; j < ood.cols(); ++j) {
    double ss = 0;
    for (std::size_t i = 0; i < data.train.size(); ++i) ss += std::pow(data.train.X(i, j) - mean[j], 2);
    const double sd = std::sqrt(ss / static_cast<double>(data.train.size()));
    for (std::size_t i = 0; i < ood.rows(); ++i) ood(i, j) += shift * sd;
  }
  auto id = predict_bma(sampler, model, data.test.X, K, ctx.seed);
  auto od = predict_bma(sampler, model, ood, K, mix_seed(ctx.seed, 5));
  auto neg = [](std::vector<double> v) {
    for (double& x : v) x = -x;
    return v;
  };
  std::vector<OodRow> rows{ood_row("max_prob", id.max_prob, od.max_prob),
                           ood_row("neg_entropy", neg(id.entropy_of_mean), neg(od.entropy_of_mean))};
  ctx.write("ood.csv", ood_csv(rows));
  auto rel = ece_report(PredictionSet::from_probs(id.mean_probs, data.test.labels), 15);
  ctx.write("reliability.svg", reliability_svg(rel, "BMA reliability"));
  auto avg = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  return {{"method", sampler_kind(sampler)},
          {"accuracy", accuracy(id.mean_probs, data.test.labels)},
          {"ece", rel.ece},
          {"id_entropy", avg(id.entropy_of_mean)},
          {"ood_entropy", avg(od.entropy_of_mean)},
          {"ood_auroc_max_prob", rows[0].auroc},
          {"ood_auroc_entropy", rows[1].auroc}};
}

json artifact_entry(const fs::path& dir, const std::string& name) {
  std::ifstream f(dir / name, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return {{"path", name}, {"bytes", bytes.size()}, {"fnv1a64", buf}};
}

}  // namespace

fs::path write_manifest(const fs::path& out, const json& cfg, const std::vector<std::string>& artifacts) {
  json hashed = cfg;
  hashed.erase("out");
  json m{{"tool", "trustkit"},
         {"version", TRUSTKIT_VERSION},
         {"kind", cfg.value("kind", std::string())},
         {"seed", cfg.value("seed", std::uint64_t{0})},
         {"config_hash", config_hash(hashed)},
         {"config", hashed},
         {"artifacts", json::array()}};
  for (const auto& a : artifacts) m["artifacts"].push_back(artifact_entry(out, a));
  std::ofstream f(out / "manifest.json", std::ios::binary);
  f << m.dump(2) << '\n';
  return out / "manifest.json";
}

RunResult run_experiment(json config, const RunOptions& opts) {
  if (opts.seed) config["seed"] = *opts.seed;
  if (!config.contains("seed")) config["seed"] = 0;
  validate_config(config);
  const std::string kind = config["kind"].get<std::string>();
  if (kind == "sweep") return run_sweep(std::move(config), opts);
  Context ctx;
  ctx.seed = config["seed"].get<std::uint64_t>();
  ctx.out = !opts.out.empty() ? opts.out : fs::path(config.value("out", "runs/" + kind));
  ctx.cfg = config;
  fs::create_directories(ctx.out);
  log_info("running " + kind + " (seed " + std::to_string(ctx.seed) + ") into " + ctx.out.string());
  Split data = load_data(ctx.section("data"), ctx.seed);
  json metrics;
  if (kind == "train")
    metrics = run_train(ctx, data);
  else if (kind == "calibrate")
    metrics = run_calibrate(ctx, data);
  else if (kind == "attack")
    metrics = run_attack(ctx, data);
  else if (kind == "attribute")
    metrics = run_attribute(ctx, data);
  else if (kind == "influence")
    metrics = run_influence(ctx, data);
  else
    metrics = run_uncertainty(ctx, data);
  metrics["kind"] = kind;
  metrics["seed"] = ctx.seed;
  ctx.write("metrics.json", metrics.dump(2) + "\n");
  RunResult r;
  r.metrics = std::move(metrics);
  r.artifacts = ctx.artifacts;
  r.manifest = write_manifest(ctx.out, config, ctx.artifacts);
  return r;
}

}  // namespace trustkit::cli
