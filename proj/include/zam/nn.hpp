#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "zam/rng.hpp"

namespace zam {

// Fully connected network with tanh hidden layers, stored as one flat
// parameter vector (per layer: weights row-major [out][in], then biases).
// Batched forward/backward over row-major [batch][dim] buffers.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> dims, bool tanh_output)
      : dims_(std::move(dims)), tanh_output_(tanh_output) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp needs >= 2 dims");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(total);
      total += static_cast<std::size_t>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
    }
    params_.assign(total, 0.0);
  }

  void init_xavier(Rng& rng) {
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l], out = dims_[l + 1];
      const double scale = std::sqrt(6.0 / (in + out));
      double* W = params_.data() + offsets_[l];
      for (int i = 0; i < out * in; ++i) W[i] = rng.uniform(-scale, scale);
      double* b = W + out * in;
      for (int i = 0; i < out; ++i) b[i] = 0.0;
    }
  }

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<int>& dims() const { return dims_; }
  bool tanh_output() const { return tanh_output_; }

  struct Cache {
    // acts[0] is the input batch; acts[l] the post-activation of layer l
    std::vector<std::vector<double>> acts;
    int batch = 0;
  };

  void forward(const std::vector<double>& input, int batch,
               Cache& cache) const {
    if (input.size() != static_cast<std::size_t>(batch) * dims_.front())
      throw std::invalid_argument("Mlp::forward input size mismatch");
    const std::size_t L = dims_.size() - 1;
    cache.batch = batch;
    cache.acts.assign(L + 1, {});
    cache.acts[0] = input;
    for (std::size_t l = 0; l < L; ++l) {
      const int in = dims_[l], out = dims_[l + 1];
      const double* W = params_.data() + offsets_[l];
      const double* b = W + static_cast<std::size_t>(out) * in;
      const std::vector<double>& X = cache.acts[l];
      std::vector<double>& Y = cache.acts[l + 1];
      Y.assign(static_cast<std::size_t>(batch) * out, 0.0);
      const bool act = l + 1 < L || tanh_output_;
      for (int s = 0; s < batch; ++s) {
        const double* x = X.data() + static_cast<std::size_t>(s) * in;
        double* y = Y.data() + static_cast<std::size_t>(s) * out;
        for (int o = 0; o < out; ++o) {
          const double* w = W + static_cast<std::size_t>(o) * in;
          double acc = b[o];
          for (int i = 0; i < in; ++i) acc += w[i] * x[i];
          y[o] = act ? std::tanh(acc) : acc;
        }
      }
    }
  }

  std::vector<double> forward_one(const std::vector<double>& input) const {
    Cache cache;
    forward(input, 1, cache);
    return cache.acts.back();
  }

  // Backpropagate dL/dOutput; accumulates parameter gradients into grad
  // (same layout as params) and optionally returns dL/dInput.
  void backward(const Cache& cache, const std::vector<double>& d_output,
                std::vector<double>& grad,
                std::vector<double>* d_input = nullptr) const {
    if (grad.size() != params_.size())
      throw std::invalid_argument("Mlp::backward grad size mismatch");
    const std::size_t L = dims_.size() - 1;
    const int batch = cache.batch;
    std::vector<double> delta = d_output;
    for (std::size_t l = L; l-- > 0;) {
      const int in = dims_[l], out = dims_[l + 1];
      const double* W = params_.data() + offsets_[l];
      double* gW = grad.data() + offsets_[l];
      double* gb = gW + static_cast<std::size_t>(out) * in;
      const std::vector<double>& X = cache.acts[l];
      const std::vector<double>& Y = cache.acts[l + 1];
      const bool act = l + 1 < L || tanh_output_;
      // through the activation
      if (act)
        for (std::size_t i = 0; i < delta.size(); ++i)
          delta[i] *= 1.0 - Y[i] * Y[i];
      // parameter gradients
      for (int s = 0; s < batch; ++s) {
        const double* x = X.data() + static_cast<std::size_t>(s) * in;
        const double* dz = delta.data() + static_cast<std::size_t>(s) * out;
        for (int o = 0; o < out; ++o) {
          const double d = dz[o];
          if (d == 0.0) continue;
          double* gw = gW + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) gw[i] += d * x[i];
          gb[o] += d;
        }
      }
      if (l == 0 && d_input == nullptr) break;
      // input gradient for the next (lower) layer
      std::vector<double> prev(static_cast<std::size_t>(batch) * in, 0.0);
      for (int s = 0; s < batch; ++s) {
        const double* dz = delta.data() + static_cast<std::size_t>(s) * out;
        double* dx = prev.data() + static_cast<std::size_t>(s) * in;
        for (int o = 0; o < out; ++o) {
          const double d = dz[o];
          if (d == 0.0) continue;
          const double* w = W + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) dx[i] += d * w[i];
        }
      }
      delta = std::move(prev);
      if (l == 0 && d_input) *d_input = std::move(delta);
    }
  }

 private:
  std::vector<int> dims_;
  bool tanh_output_ = false;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Adaptive moment estimation over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

/// target <- tau * online + (1 - tau) * target, elementwise.
inline void soft_update_params(const std::vector<double>& online,
                               std::vector<double>& target, double tau) {
  if (online.size() != target.size())
    throw std::invalid_argument("soft update size mismatch");
  for (std::size_t i = 0; i < online.size(); ++i)
    target[i] = tau * online[i] + (1.0 - tau) * target[i];
}

}  // namespace zam
