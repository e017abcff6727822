#pragma once

// Minibatch Adam on MSE with validation-based early stopping.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "kinetrace/decoders/networks.hpp"
#include "kinetrace/errors.hpp"
#include "kinetrace/matrix.hpp"
#include "kinetrace/nn/optim.hpp"
#include "kinetrace/rng.hpp"

namespace kinetrace::decoders {

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  nn::AdamConfig adam{};
  std::uint64_t seed = 1;

  void validate() const {
    if (max_epochs == 0) throw ArgumentError("train: max_epochs must be >= 1");
    if (batch_size < 2) throw ArgumentError("train: batch_size must be >= 2 (batch normalization)");
    if (patience == 0) throw ArgumentError("train: patience must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw ArgumentError("train: learning rate must be positive");
  }
};

// Epochs are numbered from 1.
struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

// Counts epochs without strict improvement of the validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when `loss` is a new best.
  bool observe(std::size_t epoch, double loss) {
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const noexcept { return stale_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

// Generic loop: `train_epoch(e)` runs one epoch and returns its mean training
// loss, `val_loss(e)` scores the network afterwards. The best-epoch parameters
// are restored before returning. `on_epoch` (optional) sees the network after
// each epoch's validation.
inline TrainReport run_training(nn::Sequential& net, const TrainConfig& cfg,
                                const std::function<double(std::size_t)>& train_epoch,
                                const std::function<double(std::size_t)>& val_loss,
                                const std::function<void(std::size_t, nn::Sequential&)>& on_epoch = {}) {
  cfg.validate();
  TrainReport report;
  EarlyStopping stopper(cfg.patience);
  std::vector<nn::Tensor> best = net.snapshot();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double tl = train_epoch(epoch);
    if (!std::isfinite(tl)) throw DivergenceError(epoch, "training loss is not finite");
    const double vl = val_loss(epoch);
    if (!std::isfinite(vl)) throw DivergenceError(epoch, "validation loss is not finite");
    report.train_loss.push_back(tl);
    report.val_loss.push_back(vl);
    report.stopped_epoch = epoch;
    if (stopper.observe(epoch, vl)) best = net.snapshot();
    if (on_epoch) on_epoch(epoch, net);
    if (stopper.should_stop()) break;
  }
  report.best_epoch = stopper.best_epoch();
  net.restore(best);
  return report;
}

inline nn::Tensor to_tensor(const Matrix& m, std::size_t first, std::size_t count) {
  nn::Tensor t({count, m.cols()});
  std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(first * m.cols()), count * m.cols(), t.values().begin());
  return t;
}

inline nn::Tensor gather_rows(const Matrix& m, const std::vector<std::size_t>& order, std::size_t first, std::size_t count) {
  nn::Tensor t({count, m.cols()});
  for (std::size_t i = 0; i < count; ++i) {
    const auto row = m.row(order[first + i]);
    std::copy(row.begin(), row.end(), t.data() + i * m.cols());
  }
  return t;
}

// Eval-mode forward pass in fixed chunks.
inline Matrix predict(NeuralDecoder& model, const Matrix& X, std::size_t chunk = 256) {
  if (X.cols() != model.input_dim())
    throw ShapeError("predict: model expects " + std::to_string(model.input_dim()) + " features, got " +
                     std::to_string(X.cols()));
  Matrix out(X.rows(), 3);
  for (std::size_t first = 0; first < X.rows(); first += chunk) {
    const std::size_t n = std::min(chunk, X.rows() - first);
    const auto y = model.net.forward(to_tensor(X, first, n), nn::Mode::eval);
    std::copy(y.values().begin(), y.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(first * 3));
  }
  return out;
}

inline double evaluate_mse(NeuralDecoder& model, const Matrix& X, const Matrix& Y) {
  const Matrix p = predict(model, X);
  double s = 0.0;
  for (std::size_t i = 0; i < p.data().size(); ++i) {
    const double d = p.data()[i] - Y.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(p.data().size());
}

// Batch boundaries over n shuffled rows; a trailing single row joins the
// previous batch (batch normalization needs at least two rows).
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t first = 0; first < n; first += batch) out.emplace_back(first, std::min(batch, n - first));
  if (out.size() > 1 && out.back().second == 1) {
    out[out.size() - 2].second += 1;
    out.pop_back();
  }
  return out;
}

// One optimizer step per minibatch; returns the mean batch loss.
inline double train_one_epoch(NeuralDecoder& model, nn::Adam& opt, const Matrix& X, const Matrix& Y,
                              std::size_t batch_size, Rng& shuffle_rng) {
  std::vector<std::size_t> order(X.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_rng.shuffle(order);
  double total = 0.0;
  std::size_t batches = 0;
  for (const auto& [first, count] : batch_ranges(order.size(), batch_size)) {
    const auto xb = gather_rows(X, order, first, count);
    const auto yb = gather_rows(Y, order, first, count);
    const auto pred = model.net.forward(xb, nn::Mode::train);
    const auto loss = nn::mse_loss(pred, yb);
    model.net.backward(loss.grad);
    opt.step();
    total += loss.value;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

inline TrainReport train(NeuralDecoder& model, const Matrix& Xtr, const Matrix& Ytr, const Matrix& Xval,
                         const Matrix& Yval, const TrainConfig& cfg) {
  cfg.validate();
  if (Xtr.rows() < 2 || Xval.rows() == 0) throw ArgumentError("train: empty training or validation data");
  if (Xtr.rows() != Ytr.rows() || Xval.rows() != Yval.rows()) throw ShapeError("train: feature/target row mismatch");
  if (Xtr.cols() != model.input_dim() || Xval.cols() != model.input_dim())
    throw ShapeError("train: feature width does not match the model input");
  if (Ytr.cols() != 3 || Yval.cols() != 3) throw ShapeError("train: targets must have 3 columns");
  for (std::size_t i = 0; i < model.net.size(); ++i)
    if (auto* d = dynamic_cast<nn::Dropout*>(&model.net.layer(i))) d->reseed(derive_seed(cfg.seed, 1000 + i));
  nn::Adam opt(model.net.parameters(), cfg.adam);
  Rng shuffle_rng(derive_seed(cfg.seed, 7));
  return run_training(
      model.net, cfg,
      [&](std::size_t) { return train_one_epoch(model, opt, Xtr, Ytr, cfg.batch_size, shuffle_rng); },
      [&](std::size_t) { return evaluate_mse(model, Xval, Yval); });
}

}  // namespace kinetrace::decoders
