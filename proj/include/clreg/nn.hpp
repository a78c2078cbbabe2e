#pragma once

// Dense feed-forward classifier with exact reverse-mode gradients.
//
// Flat parameter layout (stable, relied on by every importance vector and by
// the on-disk formats):
//
//   for each trunk layer l = 0..L-1:   W_l (out x in, row-major), then b_l
//   for each head h = 0..H-1:          W_h (classes x in, row-major), then b_h
//
// Trunk layers use ReLU, heads are linear and feed a softmax. With H >= 2 the
// network is task-incremental: a forward pass selects exactly one head, and
// gradients for the other heads are zero.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clreg/error.hpp"
#include "clreg/linalg.hpp"
#include "clreg/rng.hpp"

namespace clreg {

/// Probabilities are clamped to this floor before taking the log.
inline constexpr double kProbFloor = 1e-300;

enum class Activation { relu, identity };

struct LayerShape {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::identity;
  std::size_t offset = 0;

  std::size_t weight_count() const { return in_dim * out_dim; }
  std::size_t param_count() const { return weight_count() + out_dim; }
  std::size_t bias_offset() const { return offset + weight_count(); }
};

class DenseNet {
 public:
  /// `widths` = {input, hidden..., classes}; at least {input, classes}.
  explicit DenseNet(std::vector<std::size_t> widths, std::size_t n_heads = 1)
      : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("DenseNet needs at least input and output widths");
    if (n_heads == 0) throw ConfigError("DenseNet needs at least one head");
    for (std::size_t w : widths_) {
      if (w == 0) throw ConfigError("DenseNet layer widths must be positive");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 2 < widths_.size(); ++l) {
      trunk_.push_back({widths_[l], widths_[l + 1], Activation::relu, offset});
      offset += trunk_.back().param_count();
    }
    const std::size_t feat = widths_[widths_.size() - 2];
    for (std::size_t h = 0; h < n_heads; ++h) {
      heads_.push_back({feat, widths_.back(), Activation::identity, offset});
      offset += heads_.back().param_count();
    }
    params_.assign(offset, 0.0);
  }

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t n_classes() const { return widths_.back(); }
  std::size_t n_heads() const { return heads_.size(); }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  const std::vector<LayerShape>& trunk() const { return trunk_; }
  const std::vector<LayerShape>& heads() const { return heads_; }

  const LayerShape& head(std::size_t h) const {
    if (h >= heads_.size()) {
      throw DimensionError("head " + std::to_string(h) + " out of range (" +
                           std::to_string(heads_.size()) + " heads)");
    }
    return heads_[h];
  }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void set_params(std::span<const double> values) {
    detail::require_same_length(values.size(), params_.size(), "DenseNet::set_params");
    std::copy(values.begin(), values.end(), params_.begin());
  }

  ConstMatrixMap weights(const LayerShape& s) const {
    return ConstMatrixMap(params_.data() + s.offset, Eigen::Index(s.out_dim), Eigen::Index(s.in_dim));
  }
  ConstVectorMap bias(const LayerShape& s) const {
    return ConstVectorMap(params_.data() + s.bias_offset(), Eigen::Index(s.out_dim));
  }
  MatrixMap weights(const LayerShape& s) {
    return MatrixMap(params_.data() + s.offset, Eigen::Index(s.out_dim), Eigen::Index(s.in_dim));
  }
  VectorMap bias(const LayerShape& s) {
    return VectorMap(params_.data() + s.bias_offset(), Eigen::Index(s.out_dim));
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<LayerShape> trunk_;
  std::vector<LayerShape> heads_;
  // Vectorized small products peel by operand address, so the storage is
  // aligned to keep rounding identical from one allocation to the next.
  std::vector<double, Eigen::aligned_allocator<double>> params_;
};

/// Inputs in [0,1], one row per example, plus labels for the selected head.
struct Batch {
  Matrix inputs;
  std::vector<int> labels;
  std::size_t head = 0;
};

/// Non-owning view of contiguous example rows.
inline ConstMatrixMap view(const Matrix& m) { return ConstMatrixMap(m.data(), m.rows(), m.cols()); }

inline ConstMatrixMap row_range(const Matrix& m, Eigen::Index first, Eigen::Index count) {
  return ConstMatrixMap(m.data() + first * m.cols(), count, m.cols());
}

/// Intermediate values kept for backpropagation.
struct ForwardCache {
  std::size_t head = 0;
  const double* input = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<Matrix> hidden;  // post-activation output of each trunk layer
  Matrix logits;
  Matrix probs;

  ConstMatrixMap input_view() const { return ConstMatrixMap(input, rows, cols); }
};

/// Row-wise softmax with the max subtracted first.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

namespace detail {

inline void check_inputs(const DenseNet& net, Eigen::Index cols, std::size_t head) {
  if (static_cast<std::size_t>(cols) != net.input_dim()) {
    throw DimensionError("input width " + std::to_string(cols) + " does not match network input " +
                         std::to_string(net.input_dim()));
  }
  (void)net.head(head);
}

inline void check_labels(const DenseNet& net, std::span<const int> labels, Eigen::Index rows) {
  if (labels.size() != static_cast<std::size_t>(rows)) {
    throw DimensionError("label count does not match batch rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= net.n_classes()) {
      throw DimensionError("label " + std::to_string(y) + " out of range for " +
                           std::to_string(net.n_classes()) + " classes");
    }
  }
}

}  // namespace detail

inline ForwardCache forward_pass(const DenseNet& net, ConstMatrixMap inputs, std::size_t head) {
  detail::check_inputs(net, inputs.cols(), head);
  ForwardCache c;
  c.head = head;
  c.input = inputs.data();
  c.rows = inputs.rows();
  c.cols = inputs.cols();
  c.hidden.reserve(net.trunk().size());
  for (const auto& layer : net.trunk()) {
    const auto prev = c.hidden.empty() ? c.input_view() : ConstMatrixMap(view(c.hidden.back()));
    Matrix z = prev * net.weights(layer).transpose();
    z.rowwise() += net.bias(layer).transpose();
    c.hidden.push_back(z.cwiseMax(0.0));
  }
  const auto& out = net.head(head);
  const auto feat = c.hidden.empty() ? c.input_view() : ConstMatrixMap(view(c.hidden.back()));
  c.logits = feat * net.weights(out).transpose();
  c.logits.rowwise() += net.bias(out).transpose();
  c.probs = softmax_rows(c.logits);
  return c;
}

/// Backpropagates a cotangent on the logits (rows x classes) into `grad`.
/// The trunk and active head slots are overwritten; other heads are zeroed.
inline void backward(const DenseNet& net, const ForwardCache& cache, const Matrix& dlogits,
                     std::span<double> grad) {
  detail::require_same_length(grad.size(), net.param_count(), "backward");
  for (std::size_t h = 0; h < net.n_heads(); ++h) {
    if (h == cache.head) continue;
    const auto& s = net.heads()[h];
    std::fill_n(grad.begin() + std::ptrdiff_t(s.offset), s.param_count(), 0.0);
  }

  // Products land in aligned temporaries first: evaluated straight into
  // `grad`, their rounding would depend on the caller's buffer address.
  auto write = [&](const LayerShape& s, const Matrix& delta, ConstMatrixMap prev) {
    const Matrix gw = delta.transpose() * prev;
    const Vector gb = delta.colwise().sum().transpose();
    std::copy_n(gw.data(), gw.size(), grad.begin() + std::ptrdiff_t(s.offset));
    std::copy_n(gb.data(), gb.size(), grad.begin() + std::ptrdiff_t(s.bias_offset()));
  };
  auto input_of = [&](std::size_t l) {
    return l == 0 ? cache.input_view() : ConstMatrixMap(view(cache.hidden[l - 1]));
  };

  const auto& out = net.head(cache.head);
  const std::size_t depth = net.trunk().size();
  write(out, dlogits, input_of(depth));
  if (depth == 0) return;
  Matrix upstream = dlogits * net.weights(out);
  for (std::size_t l = depth; l-- > 0;) {
    const auto& s = net.trunk()[l];
    Matrix delta = upstream.cwiseProduct((cache.hidden[l].array() > 0.0).cast<double>().matrix());
    write(s, delta, input_of(l));
    if (l > 0) upstream = delta * net.weights(s);
  }
}

struct Output {
  Matrix logits;
  Matrix probs;
};

inline Output forward(const DenseNet& net, const Batch& batch) {
  auto c = forward_pass(net, view(batch.inputs), batch.head);
  return {std::move(c.logits), std::move(c.probs)};
}

struct LossGrad {
  double loss = 0.0;
  FlatVector grad;
  std::size_t clamped = 0;  // examples whose true-label probability hit kProbFloor
};

/// Negative log-likelihood averaged over rows, and its exact gradient.
inline LossGrad loss_and_grad(const DenseNet& net, ConstMatrixMap inputs, std::span<const int> labels,
                              std::size_t head) {
  detail::check_inputs(net, inputs.cols(), head);
  detail::check_labels(net, labels, inputs.rows());
  const auto cache = forward_pass(net, inputs, head);
  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  LossGrad out;
  Matrix dlogits = cache.probs;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const int y = labels[std::size_t(i)];
    double p = cache.probs(i, y);
    if (p < kProbFloor) {
      p = kProbFloor;
      ++out.clamped;
    }
    out.loss -= std::log(p);
    dlogits(i, y) -= 1.0;
  }
  out.loss *= inv_n;
  dlogits *= inv_n;
  out.grad.assign(net.param_count(), 0.0);
  backward(net, cache, dlogits, out.grad);
  return out;
}

inline LossGrad loss_and_grad(const DenseNet& net, const Batch& batch) {
  return loss_and_grad(net, view(batch.inputs), batch.labels, batch.head);
}

/// Gradient of -log q_x(y) for a single example.
inline FlatVector per_example_label_grad(const DenseNet& net, std::span<const double> x, int y,
                                         std::size_t head = 0) {
  const int label[1] = {y};
  return loss_and_grad(net, ConstMatrixMap(x.data(), 1, Eigen::Index(x.size())), label, head).grad;
}

/// Mean loss without the gradient.
inline double mean_loss(const DenseNet& net, ConstMatrixMap inputs, std::span<const int> labels,
                        std::size_t head) {
  detail::check_labels(net, labels, inputs.rows());
  const auto cache = forward_pass(net, inputs, head);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    loss -= std::log(std::max(cache.probs(i, labels[std::size_t(i)]), kProbFloor));
  }
  return loss / static_cast<double>(inputs.rows());
}

/// Argmax predictions (ties to the lowest class index).
inline std::vector<int> predict(const DenseNet& net, ConstMatrixMap inputs, std::size_t head) {
  const auto cache = forward_pass(net, inputs, head);
  std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    out[std::size_t(i)] = static_cast<int>(argmax_lowest(cache.logits.row(i)));
  }
  return out;
}

inline double accuracy(const DenseNet& net, ConstMatrixMap inputs, std::span<const int> labels,
                       std::size_t head) {
  if (inputs.rows() == 0) return 0.0;
  const auto pred = predict(net, inputs, head);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// W ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero. Layers are
/// filled in flat-layout order from a single stream.
inline void glorot_uniform_init(DenseNet& net, std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](const LayerShape& s) {
    const double a = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    auto p = net.params();
    for (std::size_t i = 0; i < s.weight_count(); ++i) p[s.offset + i] = rng.uniform(-a, a);
    std::fill_n(p.begin() + std::ptrdiff_t(s.bias_offset()), s.out_dim, 0.0);
  };
  for (const auto& s : net.trunk()) fill(s);
  for (const auto& s : net.heads()) fill(s);
}

}  // namespace clreg
