#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "tora/rng.hpp"
#include "tora/types.hpp"

namespace tora::testing {

inline Matrix gaussian(SplitMix64& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline Vector gaussian(SplitMix64& rng, Index size) { return gaussian(rng, size, 1).col(0); }

inline Vector unit(SplitMix64& rng, Index size) {
  const Vector v = gaussian(rng, size);
  return v / v.norm();
}

// Gaussian matrix with a decaying column spectrum, so it has a visible elbow.
inline Matrix spectral(SplitMix64& rng, Index rows, Index cols, double decay = 0.7) {
  Matrix m = gaussian(rng, rows, cols);
  for (Index j = 0; j < cols; ++j) m.col(j) *= std::pow(decay, static_cast<double>(j));
  return m;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace tora::testing
