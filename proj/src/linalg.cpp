#include "tora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/SVD>

#include "tora/error.hpp"

namespace tora::linalg {
namespace {

constexpr double kUnitTolerance = 1e-8;
constexpr double kZeroNorm = 1e-12;
// Below this the rejection of `to` from `from` is treated as exactly zero.
constexpr double kParallelTolerance = 1e-14;

Vector orthogonalize_against(Vector w, const Vector& a) {
  // Two Gram-Schmidt passes keep a^T w at rounding level even when w is tiny.
  w -= a.dot(w) * a;
  w -= a.dot(w) * a;
  return w;
}

Vector canonical_orthogonal_axis(const Vector& a) {
  for (Index j = 0; j < a.size(); ++j) {
    Vector w = orthogonalize_against(Vector::Unit(a.size(), j), a);
    const double norm = w.norm();
    if (norm > kUnitTolerance) return w / norm;
  }
  fail(ErrorCode::kDegenerate, "no standard basis vector has a component orthogonal to the axis");
}

Vector checked_unit(const Vector& v, const char* name) {
  const double norm = v.norm();
  require(std::isfinite(norm), ErrorCode::kValidation, std::string(name) + " has non-finite entries");
  require(norm > kZeroNorm, ErrorCode::kValidation, std::string(name) + " has zero norm");
  require(std::abs(norm - 1.0) <= kUnitTolerance, ErrorCode::kValidation,
          std::string(name) + " is not unit-norm (norm " + std::to_string(norm) + ")");
  return v / norm;
}

}  // namespace

Matrix SvdFactors::reconstruct() const {
  return left * singular_values.asDiagonal() * right.transpose();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Vector column_mean(const EmbeddingMatrix& e) {
  require(e.rows() > 0, ErrorCode::kValidation, "matrix has no rows");
  return e.colwise().mean().transpose();
}

SvdFactors svd(const EmbeddingMatrix& e) {
  require(e.rows() >= 1 && e.cols() >= 1, ErrorCode::kValidation, "svd needs a non-empty matrix");
  require(e.allFinite(), ErrorCode::kValidation, "svd input has non-finite entries");

  Eigen::JacobiSVD<Matrix> solver(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdFactors factors{solver.matrixU(), solver.singularValues(), solver.matrixV()};

  for (Index col = 0; col < factors.right.cols(); ++col) {
    Index pivot = 0;
    double best = -1.0;
    for (Index row = 0; row < factors.right.rows(); ++row) {
      const double magnitude = std::abs(factors.right(row, col));
      if (magnitude > best) {
        best = magnitude;
        pivot = row;
      }
    }
    if (factors.right(pivot, col) < 0.0) {
      factors.right.col(col) *= -1.0;
      factors.left.col(col) *= -1.0;
    }
  }
  return factors;
}

Index mdc_elbow(std::span<const double> values) {
  const auto n = static_cast<Index>(values.size());
  require(n >= 2, ErrorCode::kValidation, "elbow detection needs at least two values");
  for (Index i = 0; i < n; ++i) {
    require(std::isfinite(values[static_cast<std::size_t>(i)]), ErrorCode::kValidation,
            "elbow input has non-finite entries");
    if (i > 0) {
      require(values[static_cast<std::size_t>(i)] <= values[static_cast<std::size_t>(i - 1)],
              ErrorCode::kValidation, "elbow input must be non-increasing");
    }
  }

  const double first = values.front();
  const double dx = static_cast<double>(n - 1);
  const double dy = values.back() - first;
  const double chord = std::hypot(dx, dy);

  Index best_index = 1;
  double best_distance = -1.0;
  for (Index i = 1; i <= n; ++i) {
    const double x = static_cast<double>(i - 1);
    const double y = values[static_cast<std::size_t>(i - 1)] - first;
    const double distance = std::abs(dy * x - dx * y) / chord;
    if (distance > best_distance) {
      best_distance = distance;
      best_index = i;
    }
  }
  return std::clamp<Index>(best_index, 1, n - 1);
}

Index mdc_elbow(const Vector& values) {
  return mdc_elbow(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

PrincipalSplit split_principal(const SvdFactors& factors, std::optional<Index> k) {
  const Index r = factors.rank_bound();
  require(r >= 2, ErrorCode::kConfig, "a principal/residual split needs min(V, d) >= 2");
  Index elbow = 0;
  if (k) {
    require(*k >= 1 && *k <= r - 1, ErrorCode::kConfig,
            "elbow override " + std::to_string(*k) + " outside [1, " + std::to_string(r - 1) + "]");
    elbow = *k;
  } else {
    elbow = mdc_elbow(factors.singular_values);
  }
  return {elbow, factors.right.leftCols(elbow), factors.right.rightCols(r - elbow)};
}

Vector project_onto_complement(const Vector& s, const Matrix& basis) {
  require(s.size() == basis.rows(), ErrorCode::kValidation,
          "vector of length " + std::to_string(s.size()) + " does not match basis dimension " +
              std::to_string(basis.rows()));
  return s - basis * (basis.transpose() * s);
}

PlaneRotation build_plane_rotation(const Vector& from, const Vector& to) {
  require(from.size() == to.size(), ErrorCode::kValidation, "rotation endpoints differ in dimension");
  require(from.size() >= 2, ErrorCode::kValidation, "plane rotations need dimension >= 2");
  const Vector a = checked_unit(from, "rotation source");
  const Vector target = checked_unit(to, "rotation target");

  const double along = a.dot(target);
  const Vector rejection = orthogonalize_against(target, a);
  const double across = rejection.norm();

  if (across <= kParallelTolerance) {
    const double angle = along >= 0.0 ? 0.0 : std::numbers::pi;
    return {a, canonical_orthogonal_axis(a), angle};
  }
  return {a, rejection / across, std::atan2(across, along)};
}

Matrix apply_rotation(const PlaneRotation& rotation, const Matrix& vectors) {
  require(vectors.rows() == rotation.dim(), ErrorCode::kValidation,
          "rotation of dimension " + std::to_string(rotation.dim()) +
              " applied to vectors of dimension " + std::to_string(vectors.rows()));
  const double c = std::cos(rotation.angle) - 1.0;
  const double s = std::sin(rotation.angle);
  const Eigen::RowVectorXd along_a = rotation.axis_a.transpose() * vectors;
  const Eigen::RowVectorXd along_b = rotation.axis_b.transpose() * vectors;
  Matrix result = vectors;
  result.noalias() += rotation.axis_a * (c * along_a - s * along_b);
  result.noalias() += rotation.axis_b * (c * along_b + s * along_a);
  return result;
}

Vector apply_rotation(const PlaneRotation& rotation, const Vector& vector) {
  Matrix column = vector;
  return apply_rotation(rotation, column).col(0);
}

double cosine(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorCode::kValidation, "cosine of vectors with different lengths");
  const double na_sq = a.squaredNorm();
  const double nb_sq = b.squaredNorm();
  require(na_sq > kZeroNorm * kZeroNorm && nb_sq > kZeroNorm * kZeroNorm, ErrorCode::kDegenerate,
          "cosine undefined for near-zero vectors");
  return std::clamp(a.dot(b) / std::sqrt(na_sq * nb_sq), -1.0, 1.0);
}

}  // namespace tora::linalg
