#pragma once

// Online importance measures, accumulated from optimizer step traces.
//
// Sign convention: accumulators sum -g . delta, so that for a descent step the
// contribution is positive and the sum over parameters approximates the loss
// decrease L(0) - L(T).

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clreg/error.hpp"
#include "clreg/importance.hpp"
#include "clreg/linalg.hpp"
#include "clreg/optim.hpp"

namespace clreg {

enum class OnlineKind { si, siu, sib, onaf, path_integral_full, si_ema, si_last_half };

inline std::string_view to_string(OnlineKind k) {
  switch (k) {
    case OnlineKind::si: return "si";
    case OnlineKind::siu: return "siu";
    case OnlineKind::sib: return "sib";
    case OnlineKind::onaf: return "onaf";
    case OnlineKind::path_integral_full: return "path_integral_full";
    case OnlineKind::si_ema: return "si_ema";
    case OnlineKind::si_last_half: return "si_last_half";
  }
  return "?";
}

struct OnlineOptions {
  double ema_decay = 0.999;     // si_ema
  std::size_t total_steps = 0;  // si_last_half: the task's step budget
};

inline bool needs_independent_gradient(OnlineKind k) { return k == OnlineKind::siu || k == OnlineKind::sib; }
inline bool needs_full_gradient(OnlineKind k) { return k == OnlineKind::path_integral_full; }

class OnlineAccumulator {
 public:
  OnlineAccumulator(OnlineKind kind, std::span<const double> theta_start, OnlineOptions options = {})
      : kind_(kind),
        options_(options),
        theta_start_(theta_start.begin(), theta_start.end()),
        omega_tilde_(theta_start.size(), 0.0) {
    if (kind == OnlineKind::si_last_half && options.total_steps == 0) {
      throw ConfigError("si_last_half needs the task's total step budget");
    }
    if (kind == OnlineKind::si_ema && !(options.ema_decay >= 0.0 && options.ema_decay < 1.0)) {
      throw ConfigError("si_ema decay must lie in [0, 1)");
    }
  }

  void accumulate(const StepTrace& trace) {
    const std::size_t n = omega_tilde_.size();
    detail::require_same_length(trace.g_noisy.size(), n, "trace.g_noisy");
    detail::require_same_length(trace.delta.size(), n, "trace.delta");
    if (needs_independent_gradient(kind_) && !trace.g_indep) {
      throw ConfigError(std::string(to_string(kind_)) + " requires an independent-batch gradient");
    }
    if (needs_full_gradient(kind_) && !trace.g_full) {
      throw ConfigError(std::string(to_string(kind_)) + " requires the full training-set gradient");
    }
    const auto& g = trace.g_noisy;
    const auto& d = trace.delta;
    const std::size_t step = steps_seen_++;

    switch (kind_) {
      case OnlineKind::si:
        for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] += -(g[i] * d[i]);
        break;
      case OnlineKind::siu: {
        const auto gi = *trace.g_indep;
        detail::require_same_length(gi.size(), n, "trace.g_indep");
        for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] += -(gi[i] * d[i]);
        break;
      }
      case OnlineKind::sib: {
        // Difference of the SI and SIU step terms.
        const auto gi = *trace.g_indep;
        detail::require_same_length(gi.size(), n, "trace.g_indep");
        for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] += -(g[i] * d[i]) - -(gi[i] * d[i]);
        break;
      }
      case OnlineKind::onaf:
        for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] += std::abs(g[i]);
        break;
      case OnlineKind::path_integral_full: {
        const auto gf = *trace.g_full;
        detail::require_same_length(gf.size(), n, "trace.g_full");
        for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] += -(gf[i] * d[i]);
        break;
      }
      case OnlineKind::si_ema: {
        const double a = options_.ema_decay;
        for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] = a * omega_tilde_[i] + (1.0 - a) * -(g[i] * d[i]);
        break;
      }
      case OnlineKind::si_last_half:
        if (step >= options_.total_steps / 2) {
          for (std::size_t i = 0; i < n; ++i) omega_tilde_[i] += -(g[i] * d[i]);
        }
        break;
    }
  }

  OnlineKind kind() const { return kind_; }
  const FlatVector& omega_tilde() const { return omega_tilde_; }
  const FlatVector& theta_start() const { return theta_start_; }
  std::size_t steps_seen() const { return steps_seen_; }
  double summed() const { return sum(omega_tilde_); }

 private:
  OnlineKind kind_;
  OnlineOptions options_;
  FlatVector theta_start_;
  FlatVector omega_tilde_;
  std::size_t steps_seen_ = 0;
};

/// max(0, w) / ((theta_end - theta_start)^2 + xi), applied per task.
inline ImportanceVector rescale(std::span<const double> omega_tilde, std::span<const double> theta_start,
                                std::span<const double> theta_end, double xi, std::string measure_id = "") {
  if (!(xi > 0.0)) throw ConfigError("rescale damping xi must be positive");
  detail::require_same_length(omega_tilde.size(), theta_start.size(), "rescale theta_start");
  detail::require_same_length(omega_tilde.size(), theta_end.size(), "rescale theta_end");
  ImportanceVector out;
  out.measure_id = std::move(measure_id);
  out.values.resize(omega_tilde.size());
  for (std::size_t i = 0; i < omega_tilde.size(); ++i) {
    const double moved = theta_end[i] - theta_start[i];
    out.values[i] = std::max(0.0, omega_tilde[i]) / (moved * moved + xi);
  }
  return out;
}

inline ImportanceVector rescale(const OnlineAccumulator& acc, std::span<const double> theta_end, double xi) {
  auto out = rescale(acc.omega_tilde(), acc.theta_start(), theta_end, xi, std::string(to_string(acc.kind())));
  out.sample_count = acc.steps_seen();
  return out;
}

/// Differencing coefficient that makes the expected squared difference of two
/// independent size-b minibatch gradients proportional to the empirical Fisher.
inline double sos_alpha(std::size_t batch_size) {
  if (batch_size < 2) throw ConfigError("sos alpha needs batch size >= 2");
  const double b = static_cast<double>(batch_size);
  return (b + std::sqrt(2.0 * b - 1.0)) / (b - 1.0);
}

struct SosOptions {
  double beta2 = 0.999;
  double alpha = 0.0;  // 0 = simple variant, otherwise uses g_indep
};

/// Normalized decaying average of squared (alpha-differenced) task gradients.
class SosAccumulator {
 public:
  SosAccumulator(std::size_t n, SosOptions options = {}) : options_(options), v_like_(n, 0.0) {
    if (!(options.beta2 > 0.0 && options.beta2 < 1.0)) throw ConfigError("sos beta2 must lie in (0, 1)");
  }

  bool differenced() const { return options_.alpha != 0.0; }
  double alpha() const { return options_.alpha; }

  void accumulate(const StepTrace& trace) {
    const std::size_t n = v_like_.size();
    detail::require_same_length(trace.g_noisy.size(), n, "trace.g_noisy");
    const double b2 = options_.beta2;
    if (!differenced()) {
      for (std::size_t i = 0; i < n; ++i) {
        const double g = trace.g_noisy[i];
        v_like_[i] = b2 * v_like_[i] + (1.0 - b2) * g * g;
      }
    } else {
      if (!trace.g_indep) throw ConfigError("unbiased sos requires an independent-batch gradient");
      const auto gi = *trace.g_indep;
      detail::require_same_length(gi.size(), n, "trace.g_indep");
      for (std::size_t i = 0; i < n; ++i) {
        const double d = trace.g_noisy[i] - options_.alpha * gi[i];
        v_like_[i] = b2 * v_like_[i] + (1.0 - b2) * d * d;
      }
    }
    ++steps_;
  }

  std::size_t steps() const { return steps_; }
  const FlatVector& raw() const { return v_like_; }

  /// sqrt of the bias-normalized average.
  ImportanceVector importance() const {
    if (steps_ == 0) throw ConfigError("sos importance needs at least one accumulated step");
    const double norm = 1.0 - std::pow(options_.beta2, double(steps_));
    ImportanceVector out;
    out.measure_id = differenced() ? "sos_unbiased" : "sos";
    out.sample_count = steps_;
    out.values.resize(v_like_.size());
    for (std::size_t i = 0; i < v_like_.size(); ++i) out.values[i] = std::sqrt(v_like_[i] / norm);
    return out;
  }

 private:
  SosOptions options_;
  FlatVector v_like_;
  std::size_t steps_ = 0;
};

struct SummedImportanceRow {
  std::string measure;
  double summed = 0.0;
};

/// Summed pre-rescale importances next to the loss decrease they approximate.
struct SummedImportanceReport {
  std::vector<SummedImportanceRow> rows;
  double loss_start = 0.0;
  double loss_end = 0.0;
  double loss_decrease() const { return loss_start - loss_end; }

  std::optional<double> find(std::string_view measure) const {
    for (const auto& r : rows) {
      if (r.measure == measure) return r.summed;
    }
    return std::nullopt;
  }
};

inline SummedImportanceReport summed_importance_report(std::span<const OnlineAccumulator> accs,
                                                       double loss_start, double loss_end) {
  SummedImportanceReport rep;
  rep.loss_start = loss_start;
  rep.loss_end = loss_end;
  for (const auto& a : accs) rep.rows.push_back({std::string(to_string(a.kind())), a.summed()});
  return rep;
}

}  // namespace clreg
