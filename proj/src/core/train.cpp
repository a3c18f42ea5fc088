#include "trustkit/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "trustkit/errors.hpp"
#include "trustkit/rng.hpp"

namespace trustkit {

double LrSchedule::at(std::size_t step, std::size_t total_steps) const {
  if (kind == Kind::constant || total_steps <= 1) return lr;
  double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return lr + (final_lr - lr) * frac;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("batch_size must be at least 1");
  if (epochs < 1) throw DomainError("epochs must be at least 1");
  if (checkpoint_every < 1) throw DomainError("checkpoint_every must be at least 1");
  if (!(weight_decay >= 0)) throw DomainError("weight_decay must be non-negative");
  if (!(lr.lr >= 0) || !(lr.final_lr >= 0)) throw DomainError("learning rates must be non-negative");
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t step) { return mix_seed(seed, 0x5354455000000000ull + step); }

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).split(epoch);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

CheckpointTrace train_loop(std::vector<double>& theta, std::size_t n, const TrainConfig& cfg,
                           const BatchObjective& objective) {
  cfg.validate();
  if (n == 0) throw DomainError("training set is empty");
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  CheckpointTrace trace;
  trace.total_steps = total;
  trace.full = cfg.tracin_full;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (const auto& batch : epoch_batches(n, cfg.batch_size, cfg.seed, epoch)) {
      const double lr = cfg.lr.at(step, total);
      if (cfg.tracin_full || step % cfg.checkpoint_every == 0) {
        trace.entries.push_back({step, theta, lr, batch});
      }
      std::vector<double> g;
      double value = 0.0;
      try {
        Tape tape;
        Var th = tape.variable(Tensor::row(theta));
        Var l = objective(tape, th, batch, step_seed(cfg.seed, step));
        value = l.item();
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        g = l.requires_grad() ? tape.gradient(l, th).value().data() : std::vector<double>(theta.size(), 0.0);
      } catch (const NumericError& e) {
        std::ostringstream os;
        os << "training aborted at epoch " << epoch << ", step " << step << " (lr " << lr << ", batch of "
           << batch.size() << "): " << e.what();
        throw NumericError(os.str());
      }
      epoch_sum += value * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * (g[i] + cfg.weight_decay * theta[i]);
      ++step;
    }
    trace.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
    trace.epoch_snapshots.push_back(theta);
  }
  trace.entries.push_back({step, theta, 0.0, {}});
  return trace;
}

CheckpointTrace train_sgd(MlpModel& model, const LabeledDataset& data, const TrainConfig& cfg, LossKind kind) {
  if (data.size() == 0) throw DomainError("training set is empty");
  const bool dropout = model.has_dropout();
  BatchObjective obj = [&](Tape& tape, const Var& theta, std::span<const std::size_t> batch, std::uint64_t seed) {
    Var x = tape.constant(data.features(batch));
    ForwardOptions fo;
    fo.train_mode = dropout;
    fo.seed = seed;
    return loss(forward(model, theta, x, fo), data.loss_targets(batch, kind), kind);
  };
  return train_loop(model.params(), data.size(), cfg, obj);
}

}  // namespace trustkit
