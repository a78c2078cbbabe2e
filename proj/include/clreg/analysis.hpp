#pragma once

// Statistics over importance vectors and gradient noise.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clreg/data.hpp"
#include "clreg/error.hpp"
#include "clreg/importance.hpp"
#include "clreg/nn.hpp"
#include "clreg/optim.hpp"
#include "clreg/rng.hpp"

namespace clreg {

/// Sample Pearson correlation (two-pass). nullopt when either side has zero
/// variance or fewer than two points.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x.size(), y.size(), "pearson");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = sum(x) / n;
  const double my = sum(y) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> pearson(const ImportanceVector& a, const ImportanceVector& b) {
  return pearson(a.values, b.values);
}

/// Pearson over the positions where neither side is exactly zero.
inline std::optional<double> pearson_excluding_zeros(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x.size(), y.size(), "pearson_excluding_zeros");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0 && y[i] != 0.0) {
      xs.push_back(x[i]);
      ys.push_back(y[i]);
    }
  }
  return pearson(xs, ys);
}

/// Least-squares a for y ~ a x^2: a = sum(y x^2) / sum(x^4). nullopt if all x are 0.
inline std::optional<double> fit_quadratic_origin(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x.size(), y.size(), "fit_quadratic_origin");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x2 = x[i] * x[i];
    num += y[i] * x2;
    den += x2 * x2;
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

struct CorrelationEntry {
  std::size_t task = 0;
  std::string measure_a;
  std::string measure_b;
  std::optional<double> r;  // nullopt = degenerate
  std::size_t n = 0;
};

struct CorrelationReport {
  std::uint64_t seed = 0;
  std::vector<CorrelationEntry> entries;
};

// ---------------------------------------------------------------------------
// Scatter export

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IoError("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Parameter indices exported for a scatter plot: all of them in order if
/// `subsample_n` covers the vector, otherwise a seeded sorted subsample.
inline std::vector<std::size_t> scatter_indices(std::size_t n, std::size_t subsample_n, std::uint64_t seed) {
  if (subsample_n >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  Rng rng(derive_seed(seed, 0x5343'4154));
  auto idx = rng.sample_without_replacement(n, subsample_n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Writes "id_a,id_b" then one "a,b" row per sampled parameter (17 significant
/// digits, LF line endings).
inline void export_scatter(const ImportanceVector& a, const ImportanceVector& b, std::size_t subsample_n,
                           std::uint64_t seed, const std::filesystem::path& path) {
  detail::require_same_length(a.size(), b.size(), "export_scatter");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << a.measure_id << ',' << b.measure_id << '\n';
  for (std::size_t i : scatter_indices(a.size(), subsample_n, seed)) {
    out << detail::format_double(a.values[i]) << ',' << detail::format_double(b.values[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

struct ScatterData {
  std::string id_a, id_b;
  std::vector<double> a, b;
};

inline ScatterData read_scatter(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  ScatterData d;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header");
  const auto comma = line.find(',');
  if (comma == std::string::npos) throw IoError(path.string() + ": malformed header");
  d.id_a = line.substr(0, comma);
  d.id_b = line.substr(comma + 1);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = line.find(',');
    if (c == std::string::npos) throw IoError(path.string() + ": malformed row");
    d.a.push_back(detail::parse_double(std::string_view(line).substr(0, c)));
    d.b.push_back(detail::parse_double(std::string_view(line).substr(c + 1)));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Gradient noise

struct NoiseSample {
  std::size_t step = 0;
  double noise_sq = 0.0;  // ||g_batch - g_full||^2
  double grad_sq = 0.0;   // ||g_full||^2
  double ratio = 0.0;     // noise_sq / grad_sq (0 when both vanish)
};

struct NoiseProfile {
  std::vector<NoiseSample> samples;
  std::vector<double> thresholds;
  std::vector<double> exceedance;  // fraction of samples with ratio >= threshold

  double median_ratio() const {
    if (samples.empty()) return 0.0;
    std::vector<double> r;
    for (const auto& s : samples) r.push_back(s.ratio);
    std::sort(r.begin(), r.end());
    const std::size_t m = r.size() / 2;
    return r.size() % 2 ? r[m] : 0.5 * (r[m - 1] + r[m]);
  }
};

inline NoiseSample make_noise_sample(std::size_t step, std::span<const double> g_batch, std::span<const double> g_full) {
  detail::require_same_length(g_batch.size(), g_full.size(), "noise sample");
  NoiseSample s;
  s.step = step;
  for (std::size_t i = 0; i < g_full.size(); ++i) {
    const double d = g_batch[i] - g_full[i];
    s.noise_sq += d * d;
    s.grad_sq += g_full[i] * g_full[i];
  }
  if (s.noise_sq == 0.0) {
    s.ratio = 0.0;
  } else {
    s.ratio = s.grad_sq > 0.0 ? s.noise_sq / s.grad_sq : std::numeric_limits<double>::infinity();
  }
  return s;
}

inline void fill_exceedance(NoiseProfile& p, std::vector<double> thresholds) {
  p.thresholds = std::move(thresholds);
  p.exceedance.clear();
  for (double t : p.thresholds) {
    std::size_t hit = 0;
    for (const auto& s : p.samples) hit += s.ratio >= t;
    p.exceedance.push_back(p.samples.empty() ? 0.0 : double(hit) / double(p.samples.size()));
  }
}

inline std::vector<double> default_noise_thresholds() { return {0.1, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000}; }

struct NoiseSettings {
  std::size_t batch_size = 256;
  std::size_t steps = 200;
  std::size_t record_every = 1;
  OptimizerConfig optimizer{};
  std::uint64_t seed = 0;
  std::vector<double> thresholds = default_noise_thresholds();
};

/// Trains `net` on `data` and, at recorded steps, compares the minibatch
/// gradient with the whole-training-set gradient at the same parameters. With
/// batch_size >= dataset size the minibatch is the full set itself.
inline NoiseProfile noise_profile(DenseNet& net, const LabeledSet& data, std::size_t head,
                                  const NoiseSettings& settings) {
  if (settings.record_every == 0) throw ConfigError("record_every must be positive");
  const bool full_batch = settings.batch_size >= data.size();
  EpochSampler sampler(data.size(), settings.batch_size, derive_seed(settings.seed, 0x4e4f'4953));
  Optimizer opt(net.param_count(), settings.optimizer);
  NoiseProfile prof;
  for (std::size_t step = 0; step < settings.steps; ++step) {
    const bool record = step % settings.record_every == 0;
    LossGrad batch_grad;
    LossGrad full;
    if (full_batch) {
      batch_grad = loss_and_grad(net, data.view(), data.labels, head);
    } else {
      batch_grad = loss_and_grad(net, gather(data, sampler.next(), head));
      if (record) full = loss_and_grad(net, data.view(), data.labels, head);
    }
    if (record) prof.samples.push_back(make_noise_sample(step, batch_grad.grad, full_batch ? batch_grad.grad : full.grad));
    opt.step(batch_grad.grad, net.params());
  }
  fill_exceedance(prof, settings.thresholds);
  return prof;
}

/// Mean of ||g_batch - g_full||^2 over `resamples` batches of size b drawn
/// with replacement, at fixed parameters.
inline double minibatch_noise(const DenseNet& net, const LabeledSet& data, std::size_t head, std::size_t b,
                              std::size_t resamples, std::uint64_t seed) {
  if (b == 0 || resamples == 0) throw ConfigError("minibatch_noise needs b > 0 and resamples > 0");
  const auto full = loss_and_grad(net, data.view(), data.labels, head);
  Rng rng(derive_seed(seed, 0x4d42'4e53));
  double total = 0.0;
  for (std::size_t r = 0; r < resamples; ++r) {
    const auto idx = rng.sample_with_replacement(data.size(), b);
    const auto g = loss_and_grad(net, gather(data, idx, head));
    total += make_noise_sample(r, g.grad, full.grad).noise_sq;
  }
  return total / static_cast<double>(resamples);
}

}  // namespace clreg
