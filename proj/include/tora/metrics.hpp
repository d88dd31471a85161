#pragma once

#include <optional>
#include <span>

#include "tora/transform.hpp"
#include "tora/types.hpp"

namespace tora::metrics {

struct IsotropyScores {
  double xi_local = 0.0;
  double iso_score = 0.0;
  double global_anisotropy = 0.0;
  double eigen_sum = 0.0;
};

struct DeltaGammaRecord {
  double gamma_before = 0.0;
  double gamma_after = 0.0;
  double delta = 0.0;            // gamma_after - gamma_before
  double sign_rule_value = 0.0;  // numerator whose sign decides delta
  bool agreement = true;
};

/// Trace of the token covariance (population normalisation).
double eigen_sum(const EmbeddingMatrix& e);

/// 1 - |mean over clusters of the mean pairwise cosine between
/// cluster-centred embeddings|. Clusters with fewer than two usable members
/// are left out of the outer mean.
double local_isotropy(const EmbeddingMatrix& e, std::span<const int> labels);

/// IsoScore on the first k principal components of the centred data.
double iso_score(const EmbeddingMatrix& e, Index k);

/// Principal-component count for iso_score: the MDC elbow of the centred
/// singular values, raised to 2 when the elbow is 1 (iso_score needs k >= 2).
Index iso_score_components(const EmbeddingMatrix& e);

/// |mean pairwise cosine| over uncentred rows.
double global_anisotropy(const EmbeddingMatrix& e);

/// gamma = cos(s, token mean); delta = gamma_after - gamma_before.
DeltaGammaRecord delta_gamma(const SemanticVector& s, const EmbeddingMatrix& before,
                             const EmbeddingMatrix& after);

/// Compares the direct cosine change for e = mean + u, e_hat = mean + sigma*u
/// with the closed-form sign rule
///   (s.mean)(|e| - |e_hat|) + (s.u)(sigma |e| - |e_hat|).
DeltaGammaRecord sign_rule_check(const Vector& mean, const Vector& residual, const Vector& s,
                                 double sigma);

/// floor(d / 100), at least 1.
Index default_abtt_components(Index dim);

struct AllButTheTop {
  EmbeddingMatrix embedding;  // centred, top-D directions removed
  Matrix removed;             // d x D, the removed principal directions
};

/// Mean removal followed by projection off the top-D covariance eigenvectors.
AllButTheTop all_but_the_top(const EmbeddingMatrix& e, std::optional<Index> components = std::nullopt);

}  // namespace tora::metrics
