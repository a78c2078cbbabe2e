#pragma once

// Optimizers with inspectable state. Every step returns the realized parameter
// change (post-step minus pre-step), which is what the path-integral measures
// multiply gradients with.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "clreg/error.hpp"
#include "clreg/linalg.hpp"

namespace clreg {

/// What the online importance accumulators see after one optimizer step.
/// Views are only valid for the duration of the accumulate call.
struct StepTrace {
  std::span<const double> g_noisy;                 // task minibatch gradient fed to the optimizer
  std::optional<std::span<const double>> g_indep;  // independent minibatch, same parameters
  std::optional<std::span<const double>> g_full;   // whole training set gradient
  std::span<const double> delta;                   // theta(t+1) - theta(t)
  std::span<const double> v_snapshot;              // Adam second moment after the step (may be empty)
  double lr_used = 0.0;
};

namespace detail {

inline void check_step_args(std::span<const double> grad, std::span<const double> params,
                            std::size_t state_size) {
  require_same_length(grad.size(), params.size(), "optimizer step");
  require_same_length(grad.size(), state_size, "optimizer state");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw DivergenceError("non-finite gradient at parameter " + std::to_string(i));
    }
  }
}

}  // namespace detail

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool bias_correction = true;  // off: raw moment estimates in the update
};

class Adam {
 public:
  explicit Adam(std::size_t n, AdamConfig config = {}) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  /// Adam update, bias-corrected unless configured otherwise. Returns the
  /// realized change of `params`.
  FlatVector step(std::span<const double> grad, std::span<double> params) {
    detail::check_step_args(grad, params, m_.size());
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const bool corr = config_.bias_correction;
    const double c1 = corr ? 1.0 - std::pow(b1, double(t_)) : 1.0;
    const double c2 = corr ? 1.0 - std::pow(b2, double(t_)) : 1.0;
    FlatVector delta(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      const double before = params[i];
      params[i] = before - config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      delta[i] = params[i] - before;
    }
    return delta;
  }

  void reset() {
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    t_ = 0;
  }

  const AdamConfig& config() const { return config_; }
  const FlatVector& m() const { return m_; }
  const FlatVector& v() const { return v_; }
  std::size_t t() const { return t_; }

  FlatVector bias_corrected_v() const {
    FlatVector out(v_.size(), 0.0);
    if (t_ == 0) return out;
    const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = v_[i] / c2;
    return out;
  }

 private:
  AdamConfig config_;
  FlatVector m_;
  FlatVector v_;
  std::size_t t_ = 0;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
};

/// Heavy-ball SGD: u <- momentum * u + g, theta <- theta - lr * u.
class Sgd {
 public:
  explicit Sgd(std::size_t n, SgdConfig config = {}) : config_(config), velocity_(n, 0.0) {}

  FlatVector step(std::span<const double> grad, std::span<double> params) {
    detail::check_step_args(grad, params, velocity_.size());
    ++t_;
    FlatVector delta(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i] = config_.momentum * velocity_[i] + grad[i];
      const double before = params[i];
      params[i] = before - config_.lr * velocity_[i];
      delta[i] = params[i] - before;
    }
    return delta;
  }

  void reset() {
    std::fill(velocity_.begin(), velocity_.end(), 0.0);
    t_ = 0;
  }

  const SgdConfig& config() const { return config_; }
  const FlatVector& velocity() const { return velocity_; }
  std::size_t t() const { return t_; }

 private:
  SgdConfig config_;
  FlatVector velocity_;
  std::size_t t_ = 0;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  AdamConfig adam{};
  SgdConfig sgd{};
};

class Optimizer {
 public:
  Optimizer(std::size_t n, const OptimizerConfig& config)
      : impl_(config.kind == OptimizerKind::adam ? Impl(Adam(n, config.adam)) : Impl(Sgd(n, config.sgd))) {}

  FlatVector step(std::span<const double> grad, std::span<double> params) {
    return std::visit([&](auto& o) { return o.step(grad, params); }, impl_);
  }
  void reset() {
    std::visit([](auto& o) { o.reset(); }, impl_);
  }
  double lr() const {
    return std::visit([](const auto& o) { return o.config().lr; }, impl_);
  }
  /// Adam's raw second moment, empty for SGD.
  std::span<const double> second_moment() const {
    if (const auto* a = std::get_if<Adam>(&impl_)) return a->v();
    return {};
  }
  const Adam* adam() const { return std::get_if<Adam>(&impl_); }
  const Sgd* sgd() const { return std::get_if<Sgd>(&impl_); }

 private:
  using Impl = std::variant<Adam, Sgd>;
  Impl impl_;
};

}  // namespace clreg
