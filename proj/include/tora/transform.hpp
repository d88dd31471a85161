#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tora/linalg.hpp"
#include "tora/types.hpp"

namespace tora {

enum class VarianceMode { kPerMatrixScalar };
enum class DegenerateSemanticPolicy { kSkipAlignment };

struct ToraConfig {
  double sigma = 1.3;
  std::optional<Index> elbow_override;
  bool enable_alignment = true;
  VarianceMode variance_mode = VarianceMode::kPerMatrixScalar;
  DegenerateSemanticPolicy degenerate_semantic_policy = DegenerateSemanticPolicy::kSkipAlignment;

  /// Checks sigma and, given the matrix shape, the elbow override range.
  void validate(Index tokens, Index dim) const;
};

struct SemanticSource {
  Index tokens = 0;
  Index dim = 0;
  std::string pooling = "mean_over_tokens";
};

/// Direction s = mean over tokens of (e_cond - e_null).
struct SemanticVector {
  Vector direction;
  SemanticSource source;

  static SemanticVector zero(Index dim);
};

/// sigma * (e - mean) / sqrt(Var) + mean, Var being the mean squared
/// deviation over all V*d entries and `mean` the per-dimension token mean.
EmbeddingMatrix variance_scale_up(const EmbeddingMatrix& e, double sigma);

SemanticVector pool_semantic_vector(const EmbeddingMatrix& e_cond, const EmbeddingMatrix& e_null);

/// Multiplies the top-k singular values by sigma.
Vector token_spacing(const linalg::SvdFactors& factors, const linalg::PrincipalSplit& split,
                     double sigma);

struct AlignmentResult {
  Matrix residual;  // rotated residual basis, d x (r - k)
  std::optional<linalg::PlaneRotation> rotation;
  double theta = 0.0;
  bool skipped = false;  // s had no component outside the principal subspace
};

/// Rotates the residual basis so its leading vector points along the
/// component of s orthogonal to the principal basis.
AlignmentResult residual_alignment(const linalg::PrincipalSplit& split, const SemanticVector& s);

enum class AlignmentStatus { kApplied, kSkipped, kDisabled };
std::string alignment_status_name(AlignmentStatus status);

struct ToraResult {
  EmbeddingMatrix embedding;
  Index k = 0;
  double theta = 0.0;
  AlignmentStatus alignment = AlignmentStatus::kDisabled;
  Vector singular_values;         // before scaling
  Vector scaled_singular_values;  // after token spacing
};

/// SVD -> elbow -> token spacing -> residual alignment -> reconstruction.
ToraResult apply_tora(const EmbeddingMatrix& e, const SemanticVector& s, const ToraConfig& config);

/// Independent per-block application; no state is shared between entries.
std::vector<ToraResult> apply_tora_blocks(const std::vector<EmbeddingMatrix>& blocks,
                                          const std::vector<SemanticVector>& semantics,
                                          const ToraConfig& config);

}  // namespace tora
