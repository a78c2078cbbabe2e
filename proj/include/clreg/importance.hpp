#pragma once

#include <cmath>
#include <string>

#include "clreg/error.hpp"
#include "clreg/linalg.hpp"

namespace clreg {

/// Per-parameter importance, aligned with the flat parameter layout.
struct ImportanceVector {
  FlatVector values;
  std::string measure_id;
  std::size_t sample_count = 0;

  std::size_t size() const { return values.size(); }
  double summed() const { return sum(values); }
};

enum class Transform { identity, sqrt, square };

/// Elementwise transform; the id gets a suffix unless identity.
inline ImportanceVector transform(const ImportanceVector& iv, Transform f) {
  ImportanceVector out = iv;
  switch (f) {
    case Transform::identity:
      return out;
    case Transform::sqrt:
      for (double& x : out.values) {
        if (x < 0.0) throw DimensionError("sqrt transform of negative importance in " + iv.measure_id);
        x = std::sqrt(x);
      }
      out.measure_id += "_sqrt";
      return out;
    case Transform::square:
      for (double& x : out.values) x = x * x;
      out.measure_id += "_square";
      return out;
  }
  return out;
}

}  // namespace clreg
