#include "tora/transform.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tora/error.hpp"

namespace tora {
namespace {

constexpr double kMinVariance = 1e-12;
constexpr double kMinProjectedNorm = 1e-10;

void require_sigma(double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::kConfig,
          "sigma must be a positive finite number, got " + std::to_string(sigma));
}

}  // namespace

void ToraConfig::validate(Index tokens, Index dim) const {
  require_sigma(sigma);
  const Index r = std::min(tokens, dim);
  require(r >= 2, ErrorCode::kValidation,
          "the transform needs min(V, d) >= 2, got V=" + std::to_string(tokens) +
              " d=" + std::to_string(dim));
  if (elbow_override) {
    require(*elbow_override >= 1 && *elbow_override <= r - 1, ErrorCode::kConfig,
            "elbow override " + std::to_string(*elbow_override) + " outside [1, " +
                std::to_string(r - 1) + "]");
  }
}

SemanticVector SemanticVector::zero(Index dim) {
  return {Vector::Zero(dim), SemanticSource{0, dim, "zero"}};
}

std::string alignment_status_name(AlignmentStatus status) {
  switch (status) {
    case AlignmentStatus::kApplied: return "applied";
    case AlignmentStatus::kSkipped: return "skipped";
    case AlignmentStatus::kDisabled: return "disabled";
  }
  return "unknown";
}

EmbeddingMatrix variance_scale_up(const EmbeddingMatrix& e, double sigma) {
  require_sigma(sigma);
  require(e.rows() >= 2, ErrorCode::kValidation, "variance scale-up needs at least two tokens");
  require(e.allFinite(), ErrorCode::kValidation, "embedding has non-finite entries");
  const Eigen::RowVectorXd mean = e.colwise().mean();
  const Matrix centered = e.rowwise() - mean;
  const double variance = centered.squaredNorm() / static_cast<double>(e.size());
  require(variance > kMinVariance, ErrorCode::kDegenerate,
          "embedding has zero variance (all tokens identical)");
  return ((sigma / std::sqrt(variance)) * centered).rowwise() + mean;
}

SemanticVector pool_semantic_vector(const EmbeddingMatrix& e_cond, const EmbeddingMatrix& e_null) {
  require(e_cond.rows() == e_null.rows() && e_cond.cols() == e_null.cols(), ErrorCode::kValidation,
          "conditional and null embeddings differ in shape");
  require(e_cond.rows() >= 1, ErrorCode::kValidation, "semantic pooling needs at least one token");
  Vector direction = (e_cond - e_null).colwise().mean().transpose();
  require(direction.allFinite(), ErrorCode::kValidation, "semantic vector has non-finite entries");
  return {std::move(direction), SemanticSource{e_cond.rows(), e_cond.cols(), "mean_over_tokens"}};
}

Vector token_spacing(const linalg::SvdFactors& factors, const linalg::PrincipalSplit& split,
                     double sigma) {
  require_sigma(sigma);
  require(split.k >= 1 && split.k <= factors.rank_bound(), ErrorCode::kValidation,
          "split index inconsistent with the factorization");
  Vector scaled = factors.singular_values;
  scaled.head(split.k) *= sigma;
  return scaled;
}

AlignmentResult residual_alignment(const linalg::PrincipalSplit& split, const SemanticVector& s) {
  require(split.residual.cols() >= 1, ErrorCode::kConfig,
          "residual alignment needs a non-empty residual basis");
  require(s.direction.size() == split.principal.rows(), ErrorCode::kValidation,
          "semantic vector dimension " + std::to_string(s.direction.size()) +
              " does not match embedding dimension " + std::to_string(split.principal.rows()));

  const Vector projected = linalg::project_onto_complement(s.direction, split.principal);
  const double norm = projected.norm();
  if (!(norm > kMinProjectedNorm)) {
    return {split.residual, std::nullopt, 0.0, true};
  }
  auto rotation = linalg::build_plane_rotation(split.residual.col(0), projected / norm);
  Matrix rotated = linalg::apply_rotation(rotation, split.residual);
  const double theta = rotation.angle;
  return {std::move(rotated), std::move(rotation), theta, false};
}

ToraResult apply_tora(const EmbeddingMatrix& e, const SemanticVector& s, const ToraConfig& config) {
  config.validate(e.rows(), e.cols());
  const auto factors = linalg::svd(e);
  const auto split = linalg::split_principal(factors, config.elbow_override);

  ToraResult result;
  result.k = split.k;
  result.singular_values = factors.singular_values;
  result.scaled_singular_values = token_spacing(factors, split, config.sigma);

  Matrix right(factors.right.rows(), factors.right.cols());
  right.leftCols(split.k) = split.principal;
  if (config.enable_alignment) {
    auto aligned = residual_alignment(split, s);
    right.rightCols(split.residual.cols()) = aligned.residual;
    result.theta = aligned.theta;
    result.alignment = aligned.skipped ? AlignmentStatus::kSkipped : AlignmentStatus::kApplied;
  } else {
    right.rightCols(split.residual.cols()) = split.residual;
    result.alignment = AlignmentStatus::kDisabled;
  }

  result.embedding =
      factors.left * result.scaled_singular_values.asDiagonal() * right.transpose();
  return result;
}

std::vector<ToraResult> apply_tora_blocks(const std::vector<EmbeddingMatrix>& blocks,
                                          const std::vector<SemanticVector>& semantics,
                                          const ToraConfig& config) {
  require(semantics.size() == 1 || semantics.size() == blocks.size(), ErrorCode::kValidation,
          "need one semantic vector or one per block");
  std::vector<ToraResult> results;
  results.reserve(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    results.push_back(apply_tora(blocks[b], semantics[semantics.size() == 1 ? 0 : b], config));
  }
  return results;
}

}  // namespace tora
