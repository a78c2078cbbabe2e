#pragma once

// Datasets and continual-learning task construction.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clreg/error.hpp"
#include "clreg/linalg.hpp"
#include "clreg/nn.hpp"
#include "clreg/rng.hpp"

namespace clreg {

struct LabeledSet {
  Matrix inputs;  // rows = examples, values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(inputs.cols()); }
  ConstMatrixMap view() const { return clreg::view(inputs); }
};

struct Dataset {
  std::string name;
  LabeledSet train;
  LabeledSet test;
  std::size_t n_classes = 0;

  std::size_t feature_dim() const { return train.feature_dim(); }
};

inline Batch gather(const LabeledSet& set, std::span<const std::size_t> indices, std::size_t head = 0) {
  Batch b;
  b.head = head;
  b.inputs.resize(Eigen::Index(indices.size()), set.inputs.cols());
  b.labels.resize(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    b.inputs.row(Eigen::Index(r)) = set.inputs.row(Eigen::Index(indices[r]));
    b.labels[r] = set.labels[indices[r]];
  }
  return b;
}

inline LabeledSet subset(const LabeledSet& set, std::span<const std::size_t> indices) {
  auto b = gather(set, indices);
  return {std::move(b.inputs), std::move(b.labels)};
}

/// Epoch-based minibatch indices: a fresh seeded shuffle per epoch, batches
/// taken in order, the last one possibly short.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(std::min(batch_size, n)), rng_(seed), order_(n) {
    if (n == 0) throw ConfigError("cannot draw batches from an empty dataset");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    cursor_ = n_;
  }

  std::size_t steps_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

  std::span<const std::size_t> next() {
    if (cursor_ >= n_) {
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      rng_.shuffle(std::span<std::size_t>(order_));
      cursor_ = 0;
    }
    const std::size_t len = std::min(batch_size_, n_ - cursor_);
    std::span<const std::size_t> out(order_.data() + cursor_, len);
    cursor_ += len;
    return out;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic Gaussian clusters

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t n_classes = 10;
  std::size_t n_per_class = 300;
  std::size_t n_test_per_class = 100;
  double cluster_spread = 0.15;
  double active_fraction = 1.0;  // below 1: sparse class templates
};

/// One Gaussian cluster per class, points clamped to [0, 1]. Dense centers
/// are drawn in [0.25, 0.75]^dim. With active_fraction < 1 each center
/// coordinate is instead active with that probability, drawn in [0.5, 1],
/// and 0 otherwise, which gives mostly-dark images whose permutations
/// interfere less. Train rows are shuffled, test rows are not.
inline Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.dim == 0 || spec.n_classes < 2 || spec.n_per_class == 0) {
    throw ConfigError("synthetic dataset needs dim > 0, >= 2 classes and >= 1 example per class");
  }
  if (spec.cluster_spread < 0.0) throw ConfigError("cluster spread must be nonnegative");
  if (!(spec.active_fraction > 0.0 && spec.active_fraction <= 1.0)) {
    throw ConfigError("active fraction must lie in (0, 1]");
  }
  const bool sparse = spec.active_fraction < 1.0;
  Rng rng(derive_seed(spec.seed, 0x5359'4e54));
  Matrix centers(Eigen::Index(spec.n_classes), Eigen::Index(spec.dim));
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) {
      if (!sparse) centers(k, j) = rng.uniform(0.25, 0.75);
      else centers(k, j) = rng.uniform() < spec.active_fraction ? rng.uniform(0.5, 1.0) : 0.0;
    }
  }
  auto draw = [&](std::size_t per_class) {
    LabeledSet s;
    s.inputs.resize(Eigen::Index(per_class * spec.n_classes), Eigen::Index(spec.dim));
    s.labels.resize(per_class * spec.n_classes);
    std::size_t r = 0;
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
      for (std::size_t i = 0; i < per_class; ++i, ++r) {
        for (std::size_t j = 0; j < spec.dim; ++j) {
          const double x = centers(Eigen::Index(k), Eigen::Index(j)) + spec.cluster_spread * rng.normal();
          s.inputs(Eigen::Index(r), Eigen::Index(j)) = std::clamp(x, 0.0, 1.0);
        }
        s.labels[r] = static_cast<int>(k);
      }
    }
    return s;
  };
  Dataset d;
  d.name = "synthetic-" + std::to_string(spec.seed);
  d.n_classes = spec.n_classes;
  d.train = draw(spec.n_per_class);
  d.test = draw(spec.n_test_per_class);
  auto order = rng.permutation(d.train.size());
  d.train = subset(d.train, order);
  return d;
}

// ---------------------------------------------------------------------------
// Permuted tasks

/// Seed 0 is the identity permutation; other seeds give a uniform random one.
inline std::vector<std::size_t> make_permutation(std::size_t dim, std::uint64_t seed) {
  if (seed == 0) {
    std::vector<std::size_t> p(dim);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return p;
  }
  Rng rng(derive_seed(seed, 0x5045'524d));
  return rng.permutation(dim);
}

inline bool is_permutation_of_range(std::span<const std::size_t> perm) {
  std::vector<std::size_t> sorted(perm.begin(), perm.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) return false;
  }
  return true;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = j;
  return inv;
}

/// out(:, j) = in(:, perm[j]).
inline Matrix apply_permutation(const Matrix& in, std::span<const std::size_t> perm) {
  if (perm.size() != static_cast<std::size_t>(in.cols())) throw DimensionError("permutation size mismatch");
  if (!is_permutation_of_range(perm)) throw ConfigError("feature index array is not a permutation");
  Matrix out(in.rows(), in.cols());
  for (std::size_t j = 0; j < perm.size(); ++j) out.col(Eigen::Index(j)) = in.col(Eigen::Index(perm[j]));
  return out;
}

inline Dataset make_permuted_task(const Dataset& base, std::uint64_t seed) {
  const auto perm = make_permutation(base.feature_dim(), seed);
  Dataset d = base;
  d.name = base.name + "/perm-" + std::to_string(seed);
  d.train.inputs = apply_permutation(base.train.inputs, perm);
  d.test.inputs = apply_permutation(base.test.inputs, perm);
  return d;
}

// ---------------------------------------------------------------------------
// Class-split tasks

namespace detail {

inline LabeledSet select_classes(const LabeledSet& s, int first, int count) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.labels[i] >= first && s.labels[i] < first + count) keep.push_back(i);
  }
  auto out = subset(s, keep);
  for (int& y : out.labels) y -= first;
  return out;
}

}  // namespace detail

/// Consecutive blocks of `classes_per_task` classes, labels remapped to
/// 0..classes_per_task-1.
inline std::vector<Dataset> make_split_tasks(const Dataset& base, std::size_t classes_per_task) {
  if (classes_per_task == 0 || base.n_classes % classes_per_task != 0) {
    throw ConfigError("classes_per_task must divide the class count (" + std::to_string(base.n_classes) + ")");
  }
  std::vector<Dataset> tasks;
  const int cpt = static_cast<int>(classes_per_task);
  for (int first = 0; first < static_cast<int>(base.n_classes); first += cpt) {
    Dataset d;
    d.name = base.name + "/classes-" + std::to_string(first) + "-" + std::to_string(first + cpt - 1);
    d.n_classes = classes_per_task;
    d.train = detail::select_classes(base.train, first, cpt);
    d.test = detail::select_classes(base.test, first, cpt);
    tasks.push_back(std::move(d));
  }
  return tasks;
}

/// Holds out the last `fraction` of the training rows as the evaluation set.
inline Dataset validation_split(const Dataset& d, double fraction = 0.1) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
  const std::size_t n = d.train.size();
  const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(double(n) * fraction));
  if (n_val >= n) throw ConfigError("training set too small for a validation split");
  std::vector<std::size_t> head(n - n_val), tail(n_val);
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::iota(tail.begin(), tail.end(), n - n_val);
  Dataset out;
  out.name = d.name + "/val";
  out.n_classes = d.n_classes;
  out.train = subset(d.train, head);
  out.test = subset(d.train, tail);
  return out;
}

}  // namespace clreg
