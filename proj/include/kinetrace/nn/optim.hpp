#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "kinetrace/errors.hpp"
#include "kinetrace/nn/layers.hpp"
#include "kinetrace/nn/tensor.hpp"

namespace kinetrace::nn {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d loss / d pred
};

// Mean over every element of (pred - target)^2.
inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse_loss: prediction " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
  if (pred.size() == 0) throw ShapeError("mse_loss: empty batch");
  const double n = static_cast<double>(pred.size());
  LossResult r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.value += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.value /= n;
  return r;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over the trainable parameters it was built for.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {}) : cfg_(cfg) {
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      params_.push_back(p);
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  std::size_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      Tensor& m = m_[k];
      Tensor& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p.value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

}  // namespace kinetrace::nn
