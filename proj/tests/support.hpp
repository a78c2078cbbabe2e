#pragma once

// Shared fixtures and independent oracles for the unit tests. The oracles
// here deliberately avoid the library's own code paths (plain loops, no
// Eigen products) so that agreement means something.

#include <cmath>
#include <cstdint>
#include <vector>

#include "clreg/clreg.hpp"

namespace clreg::testing {

inline Matrix random_inputs(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(classes));
  return y;
}

/// Glorot init followed by small random biases so bias gradients are exercised.
inline DenseNet random_net(std::vector<std::size_t> widths, std::uint64_t seed, std::size_t heads = 1) {
  DenseNet net(std::move(widths), heads);
  glorot_uniform_init(net, seed);
  Rng rng(seed ^ 0xabcdef);
  auto p = net.params();
  for (const auto& s : net.trunk()) {
    for (std::size_t i = 0; i < s.out_dim; ++i) p[s.bias_offset() + i] = rng.uniform(-0.1, 0.1);
  }
  for (const auto& s : net.heads()) {
    for (std::size_t i = 0; i < s.out_dim; ++i) p[s.bias_offset() + i] = rng.uniform(-0.1, 0.1);
  }
  return net;
}

/// Straightforward loop-based forward pass reading parameters straight from
/// the documented flat layout.
inline std::vector<std::vector<double>> oracle_logits(const DenseNet& net, const Matrix& x, std::size_t head) {
  const auto p = net.params();
  std::vector<std::vector<double>> out;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> a(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) a[j] = x(r, j);
    auto apply = [&](const LayerShape& s, bool relu) {
      std::vector<double> z(s.out_dim);
      for (std::size_t o = 0; o < s.out_dim; ++o) {
        double acc = p[s.bias_offset() + o];
        for (std::size_t i = 0; i < s.in_dim; ++i) acc += p[s.offset + o * s.in_dim + i] * a[i];
        z[o] = relu ? std::max(0.0, acc) : acc;
      }
      a = z;
    };
    for (const auto& s : net.trunk()) apply(s, true);
    apply(net.heads()[head], false);
    out.push_back(a);
  }
  return out;
}

inline std::vector<double> oracle_softmax(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> q(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (q[i] = std::exp(z[i] - mx));
  for (double& v : q) v /= s;
  return q;
}

inline double oracle_loss(const DenseNet& net, const Matrix& x, const std::vector<int>& y, std::size_t head) {
  const auto logits = oracle_logits(net, x, head);
  double l = 0.0;
  for (std::size_t r = 0; r < logits.size(); ++r) l -= std::log(oracle_softmax(logits[r])[y[r]]);
  return l / double(logits.size());
}

/// Central finite differences of `f` around the net's current parameters.
template <typename F>
FlatVector finite_difference(DenseNet& net, F f, double h = 1e-5) {
  FlatVector g(net.param_count());
  auto p = net.params();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f();
    p[i] = keep - h;
    const double down = f();
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double relative_l2(std::span<const double> est, std::span<const double> ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    num += (est[i] - ref[i]) * (est[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

inline LabeledSet make_set(Matrix x, std::vector<int> y) { return LabeledSet{std::move(x), std::move(y)}; }

}  // namespace clreg::testing
