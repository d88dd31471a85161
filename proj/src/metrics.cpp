#include "tora/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tora/error.hpp"
#include "tora/linalg.hpp"

namespace tora::metrics {
namespace {

constexpr double kZeroNorm = 1e-12;
constexpr double kDeltaTolerance = 1e-12;

// Cosine from squared norms; exact for antipodal pairs of representable vectors.
double pair_cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                   const Eigen::Ref<const Eigen::RowVectorXd>& b, double a_sq, double b_sq) {
  return std::clamp(a.dot(b) / std::sqrt(a_sq * b_sq), -1.0, 1.0);
}

// Mean of cos(row_i, row_j) over ordered pairs i != j.
double mean_pairwise_cosine(const Matrix& rows) {
  const Index n = rows.rows();
  const Vector squared = rows.rowwise().squaredNorm();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      total += 2.0 * pair_cosine(rows.row(i), rows.row(j), squared(i), squared(j));
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

Matrix centered(const EmbeddingMatrix& e) { return e.rowwise() - e.colwise().mean(); }

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

double eigen_sum(const EmbeddingMatrix& e) {
  require(e.rows() >= 2, ErrorCode::kValidation, "eigen_sum needs at least two tokens");
  return centered(e).squaredNorm() / static_cast<double>(e.rows());
}

double local_isotropy(const EmbeddingMatrix& e, std::span<const int> labels) {
  require(static_cast<Index>(labels.size()) == e.rows(), ErrorCode::kValidation,
          "cluster labels do not match the token count");
  std::map<int, std::vector<Index>> clusters;
  for (Index i = 0; i < e.rows(); ++i) clusters[labels[static_cast<std::size_t>(i)]].push_back(i);

  double outer = 0.0;
  int eligible = 0;
  for (const auto& [label, members] : clusters) {
    if (members.size() < 2) continue;
    Matrix rows(static_cast<Index>(members.size()), e.cols());
    for (std::size_t m = 0; m < members.size(); ++m) rows.row(static_cast<Index>(m)) = e.row(members[m]);
    const Matrix offsets = centered(rows);

    // A member sitting exactly on its cluster mean has no direction.
    std::vector<Index> usable;
    for (Index m = 0; m < offsets.rows(); ++m) {
      if (offsets.row(m).norm() > kZeroNorm) usable.push_back(m);
    }
    if (usable.size() < 2) continue;
    Matrix directions(static_cast<Index>(usable.size()), e.cols());
    for (std::size_t m = 0; m < usable.size(); ++m) directions.row(static_cast<Index>(m)) = offsets.row(usable[m]);

    outer += mean_pairwise_cosine(directions);
    ++eligible;
  }
  require(eligible > 0, ErrorCode::kDegenerate,
          "no cluster has two distinct members; local isotropy undefined");
  return std::clamp(1.0 - std::abs(outer / eligible), 0.0, 1.0);
}

double iso_score(const EmbeddingMatrix& e, Index k) {
  require(e.rows() >= 2, ErrorCode::kValidation, "iso_score needs at least two tokens");
  require(k >= 2, ErrorCode::kValidation, "iso_score needs k >= 2 (k - sqrt(k) vanishes at k = 1)");
  require(k <= std::min(e.rows(), e.cols()), ErrorCode::kValidation,
          "iso_score k=" + std::to_string(k) + " exceeds min(V, d)");

  const Matrix offsets = centered(e);
  const auto factors = linalg::svd(offsets);
  const Matrix projected = offsets * factors.right.leftCols(k);
  const Matrix projected_offsets = centered(projected);
  const Vector variances =
      projected_offsets.colwise().squaredNorm().transpose() / static_cast<double>(e.rows());
  const double variance_norm = variances.norm();
  require(variance_norm > kZeroNorm, ErrorCode::kDegenerate, "iso_score of zero-variance data");

  const double kd = static_cast<double>(k);
  const double root_k = std::sqrt(kd);
  const Vector normalized = root_k * variances / variance_norm;
  const double defect = (normalized - Vector::Ones(k)).norm() / std::sqrt(2.0 * (kd - root_k));
  const double occupancy = std::pow(kd - defect * defect * (kd - root_k), 2) / (kd * kd);
  return std::clamp((kd * occupancy - 1.0) / (kd - 1.0), 0.0, 1.0);
}

Index iso_score_components(const EmbeddingMatrix& e) {
  const Index r = std::min(e.rows(), e.cols());
  require(r >= 2, ErrorCode::kValidation, "iso_score needs min(V, d) >= 2");
  const auto factors = linalg::svd(centered(e));
  return std::min(std::max<Index>(2, linalg::mdc_elbow(factors.singular_values)), r);
}

double global_anisotropy(const EmbeddingMatrix& e) {
  require(e.rows() >= 2, ErrorCode::kValidation, "global anisotropy needs at least two tokens");
  for (Index i = 0; i < e.rows(); ++i) {
    require(e.row(i).norm() > kZeroNorm, ErrorCode::kDegenerate,
            "token " + std::to_string(i) + " has zero norm");
  }
  return std::clamp(std::abs(mean_pairwise_cosine(e)), 0.0, 1.0);
}

DeltaGammaRecord delta_gamma(const SemanticVector& s, const EmbeddingMatrix& before,
                             const EmbeddingMatrix& after) {
  require(before.rows() == after.rows() && before.cols() == after.cols(), ErrorCode::kValidation,
          "before/after embeddings differ in shape");
  require(s.direction.size() == before.cols(), ErrorCode::kValidation,
          "semantic vector does not match embedding dimension");
  const Vector pooled_before = linalg::column_mean(before);
  const Vector pooled_after = linalg::column_mean(after);

  DeltaGammaRecord record;
  record.gamma_before = linalg::cosine(s.direction, pooled_before);
  record.gamma_after = linalg::cosine(s.direction, pooled_after);
  record.delta = record.gamma_after - record.gamma_before;
  record.sign_rule_value = s.direction.dot(pooled_after) * pooled_before.norm() -
                           s.direction.dot(pooled_before) * pooled_after.norm();
  record.agreement = std::abs(record.delta) < kDeltaTolerance ||
                     sign_of(record.delta) == sign_of(record.sign_rule_value);
  return record;
}

DeltaGammaRecord sign_rule_check(const Vector& mean, const Vector& residual, const Vector& s,
                                 double sigma) {
  require(mean.size() == residual.size() && mean.size() == s.size(), ErrorCode::kValidation,
          "sign rule inputs differ in dimension");
  require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::kConfig, "sigma must be positive");
  const Vector original = mean + residual;
  const Vector scaled = mean + sigma * residual;
  const double original_norm = original.norm();
  const double scaled_norm = scaled.norm();
  require(original_norm > kZeroNorm && scaled_norm > kZeroNorm && s.norm() > kZeroNorm,
          ErrorCode::kDegenerate, "sign rule needs non-zero vectors");

  DeltaGammaRecord record;
  record.gamma_before = linalg::cosine(s, original);
  record.gamma_after = linalg::cosine(s, scaled);
  record.delta = record.gamma_after - record.gamma_before;
  record.sign_rule_value = s.dot(mean) * (original_norm - scaled_norm) +
                           s.dot(residual) * (sigma * original_norm - scaled_norm);
  record.agreement = std::abs(record.delta) < kDeltaTolerance ||
                     sign_of(record.delta) == sign_of(record.sign_rule_value);
  return record;
}

Index default_abtt_components(Index dim) { return std::max<Index>(1, dim / 100); }

AllButTheTop all_but_the_top(const EmbeddingMatrix& e, std::optional<Index> components) {
  const Index count = components.value_or(default_abtt_components(e.cols()));
  require(count >= 1, ErrorCode::kValidation, "all-but-the-top needs D >= 1");
  require(count < std::min(e.rows(), e.cols()), ErrorCode::kValidation,
          "all-but-the-top D=" + std::to_string(count) + " must be below min(V, d)");

  const Matrix offsets = centered(e);
  // Right singular vectors of the centred data are the covariance eigenvectors.
  const auto factors = linalg::svd(offsets);
  Matrix removed = factors.right.leftCols(count);
  EmbeddingMatrix embedding = offsets - (offsets * removed) * removed.transpose();
  return {std::move(embedding), std::move(removed)};
}

}  // namespace tora::metrics
