#pragma once

#include <optional>
#include <span>

#include "tora/types.hpp"

namespace tora::linalg {

/// Thin SVD e = U diag(lambda) V^T with r = min(V, d).
/// `right` stores the right singular vectors as columns (d x r).
struct SvdFactors {
  Matrix left;             // V x r, orthonormal columns
  Vector singular_values;  // length r, non-increasing, non-negative
  Matrix right;            // d x r, orthonormal columns

  Index rank_bound() const { return singular_values.size(); }
  Matrix reconstruct() const;
};

/// Principal/residual split of the right singular vectors at elbow index k.
struct PrincipalSplit {
  Index k = 1;
  Matrix principal;  // d x k   (v_1 .. v_k)
  Matrix residual;   // d x (r - k)   (v_{k+1} .. v_r)
};

/// Rotation in the plane span{axis_a, axis_b} by `angle`, taking axis_a
/// towards axis_b. Stored implicitly:
///   G = I + (cos t - 1)(a a^T + b b^T) + sin t (b a^T - a b^T).
struct PlaneRotation {
  Vector axis_a;
  Vector axis_b;
  double angle = 0.0;

  Index dim() const { return axis_a.size(); }
  PlaneRotation inverse() const { return {axis_b, axis_a, angle}; }
};

/// Thin SVD with a deterministic sign convention: the largest-magnitude entry
/// of every right singular vector is positive (ties go to the lowest index).
SvdFactors svd(const EmbeddingMatrix& e);

/// Maximum-distance-to-chord elbow over points (i, values[i-1]), i = 1..n.
/// Returns a 1-based index clamped to [1, n - 1]; ties go to the smallest i.
Index mdc_elbow(std::span<const double> values);
Index mdc_elbow(const Vector& values);

/// Splits the factors at k (or at the MDC elbow of the singular values).
PrincipalSplit split_principal(const SvdFactors& factors, std::optional<Index> k = std::nullopt);

/// s - B B^T s for a basis B with orthonormal columns.
Vector project_onto_complement(const Vector& s, const Matrix& basis);

/// Rotation mapping unit vector `from` onto unit vector `to`, acting as the
/// identity on the orthogonal complement of span{from, to}. For antipodal
/// inputs axis_b is the lowest-index standard basis vector with a nonzero
/// component orthogonal to `from`.
PlaneRotation build_plane_rotation(const Vector& from, const Vector& to);

/// Applies the rotation to every column of `vectors` (d x m).
Matrix apply_rotation(const PlaneRotation& rotation, const Matrix& vectors);
Vector apply_rotation(const PlaneRotation& rotation, const Vector& vector);

/// Cosine similarity clamped to [-1, 1]; both norms must exceed 1e-12.
double cosine(const Vector& a, const Vector& b);

/// Per-dimension mean over tokens (rows).
Vector column_mean(const EmbeddingMatrix& e);

bool all_finite(const Matrix& m);

}  // namespace tora::linalg
