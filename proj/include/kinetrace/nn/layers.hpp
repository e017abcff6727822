#pragma once

// Layers with hand-written forward and backward passes. Each layer caches
// what its backward pass needs during forward; backward overwrites (does not
// accumulate) the parameter gradients and returns the input gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kinetrace/errors.hpp"
#include "kinetrace/nn/tensor.hpp"
#include "kinetrace/rng.hpp"

namespace kinetrace::nn {

enum class Mode { train, eval };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;  // false for running statistics

  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

template <typename Derived>
class LayerBase : public Layer {
 public:
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Derived>(static_cast<const Derived&>(*this)); }
};

namespace detail {

inline void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

// y = x W^T + b, x: B x I.
class Dense : public LayerBase<Dense> {
 public:
  Dense(std::size_t in, std::size_t out, std::uint64_t seed)
      : weight_("weight", Tensor({out, in})), bias_("bias", Tensor({out})) {
    Rng rng(seed);
    detail::init_uniform(weight_.value, std::sqrt(6.0 / static_cast<double>(in)), rng);
  }

  std::string kind() const override { return "dense"; }
  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  Tensor forward(const Tensor& x, Mode) override {
    require_rank(x, 2, "dense");
    const std::size_t B = x.dim(0), I = in_features(), O = out_features();
    if (x.dim(1) != I)
      throw ShapeError("dense: expected " + std::to_string(I) + " input features, got " + std::to_string(x.dim(1)));
    input_ = x;
    Tensor y({B, O});
    const double* W = weight_.value.data();
    for (std::size_t b = 0; b < B; ++b) {
      const double* xb = x.data() + b * I;
      for (std::size_t o = 0; o < O; ++o) {
        const double* wo = W + o * I;
        double acc = bias_.value[o];
        for (std::size_t i = 0; i < I; ++i) acc += wo[i] * xb[i];
        y.at(b, o) = acc;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t B = input_.dim(0), I = in_features(), O = out_features();
    if (g.shape() != Shape{B, O}) throw ShapeError("dense backward: gradient shape mismatch");
    weight_.grad.fill(0.0);
    bias_.grad.fill(0.0);
    Tensor dx({B, I});
    const double* W = weight_.value.data();
    double* dW = weight_.grad.data();
    for (std::size_t b = 0; b < B; ++b) {
      const double* xb = input_.data() + b * I;
      double* dxb = dx.data() + b * I;
      for (std::size_t o = 0; o < O; ++o) {
        const double go = g.at(b, o);
        if (go == 0.0) continue;
        bias_.grad[o] += go;
        double* dwo = dW + o * I;
        const double* wo = W + o * I;
        for (std::size_t i = 0; i < I; ++i) {
          dwo[i] += go * xb[i];
          dxb[i] += go * wo[i];
        }
      }
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// Same-length 1-D cross-correlation with symmetric zero padding (K-1)/2.
// x: B x C x L, weight: F x C x K, output: B x F x L.
class Conv1dSame : public LayerBase<Conv1dSame> {
 public:
  Conv1dSame(std::size_t channels, std::size_t filters, std::size_t kernel, std::uint64_t seed)
      : weight_("weight", Tensor({filters, channels, check_kernel(kernel)})), bias_("bias", Tensor({filters})) {
    Rng rng(seed);
    detail::init_uniform(weight_.value, std::sqrt(6.0 / static_cast<double>(channels * kernel)), rng);
  }

  std::string kind() const override { return "conv1d"; }
  std::size_t filters() const { return weight_.value.dim(0); }
  std::size_t channels() const { return weight_.value.dim(1); }
  std::size_t kernel() const { return weight_.value.dim(2); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  Tensor forward(const Tensor& x, Mode) override {
    require_rank(x, 3, "conv1d");
    const std::size_t B = x.dim(0), C = channels(), L = x.dim(2), F = filters(), K = kernel();
    if (x.dim(1) != C) throw ShapeError("conv1d: expected " + std::to_string(C) + " input channels");
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
    input_ = x;
    Tensor y({B, F, L});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) {
        double* yr = &y.at(b, f, 0);
        std::fill(yr, yr + L, bias_.value[f]);
        for (std::size_t c = 0; c < C; ++c) {
          const double* xr = &x.at(b, c, 0);
          const double* w = &weight_.value.at(f, c, 0);
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
            const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
            const std::size_t t1 = shift > 0 ? (L > static_cast<std::size_t>(shift) ? L - static_cast<std::size_t>(shift) : 0) : L;
            const double wk = w[k];
            for (std::size_t t = t0; t < t1; ++t) yr[t] += wk * xr[static_cast<std::ptrdiff_t>(t) + shift];
          }
        }
      }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t B = input_.dim(0), C = channels(), L = input_.dim(2), F = filters(), K = kernel();
    if (g.shape() != Shape{B, F, L}) throw ShapeError("conv1d backward: gradient shape mismatch");
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
    weight_.grad.fill(0.0);
    bias_.grad.fill(0.0);
    Tensor dx(input_.shape());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) {
        const double* gr = &g.at(b, f, 0);
        for (std::size_t t = 0; t < L; ++t) bias_.grad[f] += gr[t];
        for (std::size_t c = 0; c < C; ++c) {
          const double* xr = &input_.at(b, c, 0);
          double* dxr = &dx.at(b, c, 0);
          const double* w = &weight_.value.at(f, c, 0);
          double* dw = &weight_.grad.at(f, c, 0);
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
            const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
            const std::size_t t1 = shift > 0 ? (L > static_cast<std::size_t>(shift) ? L - static_cast<std::size_t>(shift) : 0) : L;
            const double wk = w[k];
            double acc = 0.0;
            for (std::size_t t = t0; t < t1; ++t) {
              const auto s = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift);
              acc += gr[t] * xr[s];
              dxr[s] += gr[t] * wk;
            }
            dw[k] += acc;
          }
        }
      }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  static std::size_t check_kernel(std::size_t k) {
    if (k == 0 || k % 2 == 0) throw ArgumentError("conv1d: kernel size must be odd");
    return k;
  }

  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// Non-overlapping max pooling over the last axis with a final partial window
// (output length ceil(L / W)). Ties route the gradient to the first maximum.
class MaxPool1d : public LayerBase<MaxPool1d> {
 public:
  explicit MaxPool1d(std::size_t window) : window_(window) {
    if (window == 0) throw ArgumentError("maxpool1d: window must be >= 1");
  }

  std::string kind() const override { return "maxpool1d"; }
  static std::size_t output_length(std::size_t L, std::size_t W) { return (L + W - 1) / W; }

  Tensor forward(const Tensor& x, Mode) override {
    require_rank(x, 3, "maxpool1d");
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    const std::size_t Lo = output_length(L, window_);
    input_shape_ = x.shape();
    argmax_.assign(B * C * Lo, 0);
    Tensor y({B, C, Lo});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t o = 0; o < Lo; ++o) {
          const std::size_t start = o * window_;
          const std::size_t stop = std::min(L, start + window_);
          std::size_t best = start;
          for (std::size_t t = start + 1; t < stop; ++t)
            if (x.at(b, c, t) > x.at(b, c, best)) best = t;
          y.at(b, c, o) = x.at(b, c, best);
          argmax_[(b * C + c) * Lo + o] = best;
        }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t B = input_shape_[0], C = input_shape_[1];
    const std::size_t Lo = output_length(input_shape_[2], window_);
    if (g.shape() != Shape{B, C, Lo}) throw ShapeError("maxpool1d backward: gradient shape mismatch");
    Tensor dx(input_shape_);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t o = 0; o < Lo; ++o) dx.at(b, c, argmax_[(b * C + c) * Lo + o]) += g.at(b, c, o);
    return dx;
  }

 private:
  std::size_t window_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

// Batch normalization. Rank-2 input B x F normalizes each feature over the
// batch; rank-3 input B x C x L normalizes each channel over batch and time.
class BatchNorm : public LayerBase<BatchNorm> {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  explicit BatchNorm(std::size_t features)
      : gamma_("gamma", Tensor({features}, 1.0)),
        beta_("beta", Tensor({features})),
        running_mean_("running_mean", Tensor({features}), false),
        running_var_("running_var", Tensor({features}, 1.0), false) {}

  std::string kind() const override { return "batchnorm"; }
  std::size_t features() const { return gamma_.value.size(); }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Parameter& running_mean() { return running_mean_; }
  Parameter& running_var() { return running_var_; }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 2 && x.rank() != 3) throw ShapeError("batchnorm: expected rank-2 or rank-3 input");
    const std::size_t B = x.dim(0), F = x.dim(1), L = x.rank() == 3 ? x.dim(2) : 1;
    if (F != features()) throw ShapeError("batchnorm: feature count mismatch");
    mode_ = mode;
    shape_ = x.shape();
    Tensor y(x.shape());
    xhat_ = Tensor(x.shape());
    inv_std_.assign(F, 0.0);
    if (mode == Mode::train) {
      if (B < 2) throw DegenerateBatchError("batchnorm: batch size 1 in train mode");
      const double M = static_cast<double>(B * L);
      for (std::size_t f = 0; f < F; ++f) {
        double mean = 0.0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < L; ++t) mean += x[(b * F + f) * L + t];
        mean /= M;
        double var = 0.0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < L; ++t) {
            const double d = x[(b * F + f) * L + t] - mean;
            var += d * d;
          }
        const double unbiased = var / (M - 1.0);
        var /= M;
        inv_std_[f] = 1.0 / std::sqrt(var + kEps);
        running_mean_.value[f] = (1.0 - kMomentum) * running_mean_.value[f] + kMomentum * mean;
        running_var_.value[f] = (1.0 - kMomentum) * running_var_.value[f] + kMomentum * unbiased;
        normalize(x, y, f, mean);
      }
    } else {
      for (std::size_t f = 0; f < F; ++f) {
        inv_std_[f] = 1.0 / std::sqrt(running_var_.value[f] + kEps);
        normalize(x, y, f, running_mean_.value[f]);
      }
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    if (g.shape() != shape_) throw ShapeError("batchnorm backward: gradient shape mismatch");
    const std::size_t B = shape_[0], F = shape_[1], L = shape_.size() == 3 ? shape_[2] : 1;
    const double M = static_cast<double>(B * L);
    gamma_.grad.fill(0.0);
    beta_.grad.fill(0.0);
    Tensor dx(shape_);
    for (std::size_t f = 0; f < F; ++f) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t i = (b * F + f) * L + t;
          sum_g += g[i];
          sum_gx += g[i] * xhat_[i];
        }
      gamma_.grad[f] = sum_gx;
      beta_.grad[f] = sum_g;
      const double scale = gamma_.value[f] * inv_std_[f];
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t i = (b * F + f) * L + t;
          dx[i] = mode_ == Mode::train ? scale * (g[i] - sum_g / M - xhat_[i] * sum_gx / M) : scale * g[i];
        }
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

 private:
  void normalize(const Tensor& x, Tensor& y, std::size_t f, double mean) {
    const std::size_t B = shape_[0], F = shape_[1], L = shape_.size() == 3 ? shape_[2] : 1;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = (b * F + f) * L + t;
        xhat_[i] = (x[i] - mean) * inv_std_[f];
        y[i] = gamma_.value[f] * xhat_[i] + beta_.value[f];
      }
  }

  Parameter gamma_;
  Parameter beta_;
  Parameter running_mean_;
  Parameter running_var_;
  Mode mode_ = Mode::train;
  Shape shape_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

// Inverted dropout: in train mode kept values are scaled by 1/(1-rate); eval
// mode is the identity. The mask stream is seeded.
class Dropout : public LayerBase<Dropout> {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout: rate must lie in [0, 1)");
  }

  std::string kind() const override { return "dropout"; }
  double rate() const { return rate_; }
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }
  const std::vector<double>& last_mask() const { return mask_; }

  Tensor forward(const Tensor& x, Mode mode) override {
    mask_.assign(x.size(), 1.0);
    if (mode == Mode::train && rate_ > 0.0) {
      const double keep_scale = 1.0 / (1.0 - rate_);
      for (double& m : mask_) m = rng_.uniform() >= rate_ ? keep_scale : 0.0;
    }
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask_[i];
    return y;
  }

  Tensor backward(const Tensor& g) override {
    if (g.size() != mask_.size()) throw ShapeError("dropout backward: gradient shape mismatch");
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * mask_[i];
    return dx;
  }

 private:
  double rate_;
  Rng rng_;
  std::vector<double> mask_;
};

class Relu : public LayerBase<Relu> {
 public:
  std::string kind() const override { return "relu"; }

  Tensor forward(const Tensor& x, Mode) override {
    Tensor y(x.shape());
    active_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) {
        y[i] = x[i];
        active_[i] = 1;
      }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    if (g.size() != active_.size()) throw ShapeError("relu backward: gradient shape mismatch");
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = active_[i] ? g[i] : 0.0;
    return dx;
  }

 private:
  std::vector<unsigned char> active_;
};

// Reinterprets B x ... as B x `shape` (row-major, no data movement).
class Reshape : public LayerBase<Reshape> {
 public:
  explicit Reshape(Shape per_sample) : per_sample_(std::move(per_sample)) {}
  std::string kind() const override { return "reshape"; }

  Tensor forward(const Tensor& x, Mode) override {
    in_shape_ = x.shape();
    Shape s{x.dim(0)};
    s.insert(s.end(), per_sample_.begin(), per_sample_.end());
    if (shape_size(s) != x.size()) throw ShapeError("reshape: size mismatch for " + shape_string(s));
    return x.reshaped(std::move(s));
  }
  Tensor backward(const Tensor& g) override { return g.reshaped(in_shape_); }

 private:
  Shape per_sample_;
  Shape in_shape_;
};

// B x A x C -> B x C x A.
class SwapLastAxes : public LayerBase<SwapLastAxes> {
 public:
  std::string kind() const override { return "swap_axes"; }
  Tensor forward(const Tensor& x, Mode) override {
    require_rank(x, 3, "swap_axes");
    return swap(x);
  }
  Tensor backward(const Tensor& g) override { return swap(g); }

 private:
  static Tensor swap(const Tensor& x) {
    const std::size_t B = x.dim(0), A = x.dim(1), C = x.dim(2);
    Tensor y({B, C, A});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t c = 0; c < C; ++c) y.at(b, c, a) = x.at(b, a, c);
    return y;
  }
};

enum class LstmActivation { relu, tanh };

// Single-layer LSTM over x: B x T x I returning the last hidden state B x H.
// Gate order in the stacked weights is (input, forget, cell, output); gates
// use the sigmoid, the cell candidate and the hidden output use `activation`.
class Lstm : public LayerBase<Lstm> {
 public:
  Lstm(std::size_t input, std::size_t hidden, LstmActivation activation, std::uint64_t seed)
      : input_weight_("input_weight", Tensor({4 * hidden, input})),
        recurrent_weight_("recurrent_weight", Tensor({4 * hidden, hidden})),
        bias_("bias", Tensor({4 * hidden})),
        activation_(activation) {
    Rng rng(seed);
    detail::init_uniform(input_weight_.value, std::sqrt(1.0 / static_cast<double>(input)), rng);
    detail::init_uniform(recurrent_weight_.value, std::sqrt(1.0 / static_cast<double>(hidden)), rng);
    for (std::size_t h = 0; h < hidden; ++h) bias_.value[hidden + h] = 1.0;
  }

  std::string kind() const override { return "lstm"; }
  std::size_t hidden() const { return recurrent_weight_.value.dim(1); }
  std::size_t input_size() const { return input_weight_.value.dim(1); }
  LstmActivation activation() const { return activation_; }
  Parameter& input_weight() { return input_weight_; }
  Parameter& recurrent_weight() { return recurrent_weight_; }
  Parameter& bias() { return bias_; }

  Tensor forward(const Tensor& x, Mode) override {
    require_rank(x, 3, "lstm");
    const std::size_t B = x.dim(0), T = x.dim(1), I = input_size(), H = hidden();
    if (T == 0) throw ArgumentError("lstm: sequence length must be >= 1");
    if (x.dim(2) != I) throw ShapeError("lstm: expected " + std::to_string(I) + " input features");
    input_ = x;
    // Per step caches: gates (B x 4H, post-nonlinearity), cell state and hidden state.
    gates_.assign(T, Tensor({B, 4 * H}));
    cells_.assign(T + 1, Tensor({B, H}));
    hiddens_.assign(T + 1, Tensor({B, H}));
    const double* Wx = input_weight_.value.data();
    const double* Wh = recurrent_weight_.value.data();
    std::vector<double> z(4 * H);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t b = 0; b < B; ++b) {
        const double* xt = &x.at(b, t, 0);
        const double* hp = &hiddens_[t].at(b, 0);
        for (std::size_t r = 0; r < 4 * H; ++r) {
          double acc = bias_.value[r];
          const double* wx = Wx + r * I;
          for (std::size_t i = 0; i < I; ++i) acc += wx[i] * xt[i];
          const double* wh = Wh + r * H;
          for (std::size_t j = 0; j < H; ++j) acc += wh[j] * hp[j];
          z[r] = acc;
        }
        double* gt = &gates_[t].at(b, 0);
        for (std::size_t h = 0; h < H; ++h) {
          gt[h] = detail::sigmoid(z[h]);
          gt[H + h] = detail::sigmoid(z[H + h]);
          gt[2 * H + h] = act(z[2 * H + h]);
          gt[3 * H + h] = detail::sigmoid(z[3 * H + h]);
          const double c = gt[H + h] * cells_[t].at(b, h) + gt[h] * gt[2 * H + h];
          cells_[t + 1].at(b, h) = c;
          hiddens_[t + 1].at(b, h) = gt[3 * H + h] * act(c);
        }
      }
    return hiddens_[T];
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t B = input_.dim(0), T = input_.dim(1), I = input_size(), H = hidden();
    if (g.shape() != Shape{B, H}) throw ShapeError("lstm backward: gradient shape mismatch");
    input_weight_.grad.fill(0.0);
    recurrent_weight_.grad.fill(0.0);
    bias_.grad.fill(0.0);
    Tensor dx(input_.shape());
    Tensor dh = g;
    Tensor dc({B, H});
    std::vector<double> dz(4 * H);
    const double* Wx = input_weight_.value.data();
    const double* Wh = recurrent_weight_.value.data();
    double* dWx = input_weight_.grad.data();
    double* dWh = recurrent_weight_.grad.data();
    for (std::size_t t = T; t-- > 0;) {
      Tensor dh_prev({B, H});
      for (std::size_t b = 0; b < B; ++b) {
        const double* gt = &gates_[t].at(b, 0);
        for (std::size_t h = 0; h < H; ++h) {
          const double i = gt[h], f = gt[H + h], cand = gt[2 * H + h], o = gt[3 * H + h];
          const double c = cells_[t + 1].at(b, h);
          const double ac = act(c);
          const double dhv = dh.at(b, h);
          const double dcv = dc.at(b, h) + dhv * o * act_grad_from_input(c);
          dz[h] = dcv * cand * i * (1.0 - i);
          dz[H + h] = dcv * cells_[t].at(b, h) * f * (1.0 - f);
          dz[2 * H + h] = dcv * i * act_grad_from_output(cand);
          dz[3 * H + h] = dhv * ac * o * (1.0 - o);
          dc.at(b, h) = dcv * f;
        }
        const double* xt = &input_.at(b, t, 0);
        const double* hp = &hiddens_[t].at(b, 0);
        double* dxt = &dx.at(b, t, 0);
        double* dhp = &dh_prev.at(b, 0);
        for (std::size_t r = 0; r < 4 * H; ++r) {
          const double d = dz[r];
          if (d == 0.0) continue;
          bias_.grad[r] += d;
          const double* wx = Wx + r * I;
          double* dwx = dWx + r * I;
          for (std::size_t k = 0; k < I; ++k) {
            dwx[k] += d * xt[k];
            dxt[k] += d * wx[k];
          }
          const double* wh = Wh + r * H;
          double* dwh = dWh + r * H;
          for (std::size_t j = 0; j < H; ++j) {
            dwh[j] += d * hp[j];
            dhp[j] += d * wh[j];
          }
        }
      }
      dh = std::move(dh_prev);
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&input_weight_, &recurrent_weight_, &bias_}; }

 private:
  double act(double v) const { return activation_ == LstmActivation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v); }
  // Derivative evaluated at the pre-activation value.
  double act_grad_from_input(double v) const {
    if (activation_ == LstmActivation::relu) return v > 0.0 ? 1.0 : 0.0;
    const double th = std::tanh(v);
    return 1.0 - th * th;
  }
  // Derivative expressed through the activation's output.
  double act_grad_from_output(double a) const {
    if (activation_ == LstmActivation::relu) return a > 0.0 ? 1.0 : 0.0;
    return 1.0 - a * a;
  }

  Parameter input_weight_;
  Parameter recurrent_weight_;
  Parameter bias_;
  LstmActivation activation_;
  Tensor input_;
  std::vector<Tensor> gates_;
  std::vector<Tensor> cells_;
  std::vector<Tensor> hiddens_;
};

}  // namespace kinetrace::nn
