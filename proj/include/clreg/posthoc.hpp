#pragma once

// End-of-task importance estimators: diagonal Fisher variants, Absolute
// Fisher, Batch-EF, and the MAS family. All estimators take an explicit index
// sample so that measures compared within one run see identical examples.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clreg/data.hpp"
#include "clreg/error.hpp"
#include "clreg/importance.hpp"
#include "clreg/nn.hpp"
#include "clreg/rng.hpp"

namespace clreg {

enum class FisherMode {
  sampled_label,      // y ~ q_x, one or more draws per example
  exact_expectation,  // sum over all labels weighted by q_x(y)
  empirical,          // dataset label
  predicted,          // argmax label, ties to the lowest index
};

inline std::string_view to_string(FisherMode m) {
  switch (m) {
    case FisherMode::sampled_label: return "fisher";
    case FisherMode::exact_expectation: return "fisher_exact";
    case FisherMode::empirical: return "empirical_fisher";
    case FisherMode::predicted: return "predicted_fisher";
  }
  return "?";
}

enum class MasOutput { probabilities, logits };

/// `n` distinct example indices drawn from `n_data`.
inline std::vector<std::size_t> draw_sample(std::size_t n_data, std::size_t n, std::uint64_t seed) {
  if (n_data == 0) throw ConfigError("cannot sample from an empty dataset");
  if (n > n_data) {
    throw ConfigError("sample size " + std::to_string(n) + " exceeds dataset size " + std::to_string(n_data));
  }
  Rng rng(derive_seed(seed, 0x5341'4d50));
  return rng.sample_without_replacement(n_data, n);
}

namespace detail {

inline void check_sample(const LabeledSet& data, std::span<const std::size_t> indices) {
  if (data.size() == 0) throw ConfigError("importance estimation on an empty dataset");
  if (indices.empty()) throw ConfigError("importance estimation needs at least one sample");
  for (std::size_t i : indices) {
    if (i >= data.size()) throw DimensionError("sample index out of range");
  }
}

inline ConstMatrixMap example_row(const LabeledSet& data, std::size_t i) {
  return row_range(data.inputs, Eigen::Index(i), 1);
}

/// Cotangent of -log q(y) with respect to the logits of one example.
inline Matrix nll_cotangent(const Matrix& probs, int y) {
  Matrix d = probs;
  d(0, y) -= 1.0;
  return d;
}

inline int draw_label(Rng& rng, const Matrix& probs) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    acc += probs(0, j);
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(probs.cols() - 1);
}

/// Mean over examples of E_y[f(g(x, y))] with the label distribution chosen
/// by `mode`. `f` maps a gradient component to its contribution.
template <typename Fn>
FlatVector label_gradient_moment(const DenseNet& net, const LabeledSet& data, std::size_t head, FisherMode mode,
                                 std::span<const std::size_t> indices, std::uint64_t seed,
                                 std::size_t label_draws, Fn f) {
  check_sample(data, indices);
  if (mode == FisherMode::sampled_label && label_draws == 0) throw ConfigError("label_draws must be positive");
  Rng rng(derive_seed(seed, 0x4c41'4245));
  const std::size_t n = net.param_count();
  FlatVector acc(n, 0.0), g(n);
  auto add = [&](const ForwardCache& cache, int y, double weight) {
    backward(net, cache, nll_cotangent(cache.probs, y), g);
    for (std::size_t i = 0; i < n; ++i) acc[i] += weight * f(g[i]);
  };
  for (std::size_t idx : indices) {
    const auto cache = forward_pass(net, example_row(data, idx), head);
    switch (mode) {
      case FisherMode::empirical:
        add(cache, data.labels[idx], 1.0);
        break;
      case FisherMode::predicted:
        add(cache, static_cast<int>(argmax_lowest(cache.probs.row(0))), 1.0);
        break;
      case FisherMode::sampled_label:
        for (std::size_t d = 0; d < label_draws; ++d) {
          add(cache, draw_label(rng, cache.probs), 1.0 / static_cast<double>(label_draws));
        }
        break;
      case FisherMode::exact_expectation:
        for (Eigen::Index y = 0; y < cache.probs.cols(); ++y) add(cache, static_cast<int>(y), cache.probs(0, y));
        break;
    }
  }
  for (double& x : acc) x /= static_cast<double>(indices.size());
  return acc;
}

}  // namespace detail

/// Diagonal Fisher: mean over examples of E_y[g(x, y)^2].
inline ImportanceVector fisher_diag(const DenseNet& net, const LabeledSet& data, std::size_t head, FisherMode mode,
                                    std::span<const std::size_t> indices, std::uint64_t seed = 0,
                                    std::size_t label_draws = 1) {
  ImportanceVector iv;
  iv.values = detail::label_gradient_moment(net, data, head, mode, indices, seed, label_draws,
                                            [](double x) { return x * x; });
  iv.measure_id = std::string(to_string(mode));
  iv.sample_count = indices.size();
  return iv;
}

/// Absolute Fisher: mean over examples of E_y[|g(x, y)|].
inline ImportanceVector absolute_fisher(const DenseNet& net, const LabeledSet& data, std::size_t head,
                                        FisherMode mode, std::span<const std::size_t> indices,
                                        std::uint64_t seed = 0, std::size_t label_draws = 1) {
  ImportanceVector iv;
  iv.values = detail::label_gradient_moment(net, data, head, mode, indices, seed, label_draws,
                                            [](double x) { return std::abs(x); });
  iv.measure_id = mode == FisherMode::sampled_label ? "af" : "af_" + std::string(to_string(mode));
  iv.sample_count = indices.size();
  return iv;
}

/// Index sequence used by the seeded Batch-EF: `n_batches` consecutive
/// groups of `b` i.i.d. uniform indices.
inline std::vector<std::size_t> batch_ef_indices(std::size_t n_data, std::size_t b, std::size_t n_batches,
                                                 std::uint64_t seed) {
  if (n_data == 0) throw ConfigError("cannot sample from an empty dataset");
  Rng rng(derive_seed(seed, 0x4245'4546));
  return rng.sample_with_replacement(n_data, b * n_batches);
}

/// b * mean over minibatches of the squared minibatch-mean gradient.
/// `indices` holds consecutive batches of size b.
inline ImportanceVector batch_ef(const DenseNet& net, const LabeledSet& data, std::size_t head, std::size_t b,
                                 std::span<const std::size_t> indices) {
  if (b == 0) throw ConfigError("batch_ef batch size must be positive");
  if (indices.empty() || indices.size() % b != 0) {
    throw ConfigError("batch_ef index count must be a positive multiple of the batch size");
  }
  detail::check_sample(data, indices);
  const std::size_t n = net.param_count();
  const std::size_t n_batches = indices.size() / b;
  FlatVector acc(n, 0.0);
  for (std::size_t k = 0; k < n_batches; ++k) {
    const auto batch = gather(data, indices.subspan(k * b, b), head);
    const auto lg = loss_and_grad(net, batch);
    for (std::size_t i = 0; i < n; ++i) acc[i] += lg.grad[i] * lg.grad[i];
  }
  ImportanceVector iv;
  iv.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) iv.values[i] = (acc[i] * static_cast<double>(b)) / static_cast<double>(n_batches);
  iv.measure_id = "batch_ef";
  iv.sample_count = indices.size();
  return iv;
}

inline ImportanceVector batch_ef(const DenseNet& net, const LabeledSet& data, std::size_t head, std::size_t b,
                                 std::size_t n_batches, std::uint64_t seed) {
  const auto idx = batch_ef_indices(data.size(), b, n_batches, seed);
  return batch_ef(net, data, head, b, idx);
}

namespace detail {

template <typename CotangentFn>
FlatVector mean_abs_output_gradient(const DenseNet& net, const LabeledSet& data, std::size_t head,
                                    std::span<const std::size_t> indices, CotangentFn cotangent) {
  check_sample(data, indices);
  const std::size_t n = net.param_count();
  FlatVector acc(n, 0.0), g(n);
  for (std::size_t idx : indices) {
    const auto cache = forward_pass(net, example_row(data, idx), head);
    backward(net, cache, cotangent(cache), g);
    for (std::size_t i = 0; i < n; ++i) acc[i] += std::abs(g[i]);
  }
  for (double& x : acc) x /= static_cast<double>(indices.size());
  return acc;
}

}  // namespace detail

/// MAS: mean over examples of |d ||output||^2 / d theta|, where the output is
/// either the probability vector or the logits.
inline ImportanceVector mas(const DenseNet& net, const LabeledSet& data, std::size_t head,
                            std::span<const std::size_t> indices, MasOutput output = MasOutput::probabilities) {
  ImportanceVector iv;
  if (output == MasOutput::probabilities) {
    // d||q||^2/dz_j = 2 q_j (q_j - sum_y q_y^2)
    iv.values = detail::mean_abs_output_gradient(net, data, head, indices, [](const ForwardCache& c) {
      const double sq = c.probs.row(0).squaredNorm();
      Matrix d = 2.0 * c.probs.array() * (c.probs.array() - sq);
      return d;
    });
    iv.measure_id = "mas";
  } else {
    iv.values = detail::mean_abs_output_gradient(net, data, head, indices,
                                                 [](const ForwardCache& c) { return Matrix(2.0 * c.logits); });
    iv.measure_id = "mas_logits";
  }
  iv.sample_count = indices.size();
  return iv;
}

/// MASX: like MAS but differentiating only q(y0)^2 for y0 = argmax q.
inline ImportanceVector masx(const DenseNet& net, const LabeledSet& data, std::size_t head,
                             std::span<const std::size_t> indices) {
  ImportanceVector iv;
  // d q0^2 / dz_j = 2 q0^2 (delta_{j,y0} - q_j)
  iv.values = detail::mean_abs_output_gradient(net, data, head, indices, [](const ForwardCache& c) {
    const auto y0 = argmax_lowest(c.probs.row(0));
    const double q0 = c.probs(0, y0);
    Matrix d = -c.probs;
    d(0, y0) += 1.0;
    d *= 2.0 * q0 * q0;
    return d;
  });
  iv.measure_id = "masx";
  iv.sample_count = indices.size();
  return iv;
}

}  // namespace clreg
