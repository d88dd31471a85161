#pragma once

#include <cstdint>
#include <vector>

#include "tora/types.hpp"

namespace tora::gmm {

struct GmmOptions {
  int restarts = 3;
  int max_iterations = 200;
  double tolerance = 1e-6;  // stop when the log-likelihood gains less than this
  double variance_floor = 1e-6;
};

/// Diagonal-covariance Gaussian mixture.
struct GmmModel {
  Vector weights;     // C, sums to 1
  Matrix means;       // C x d
  Matrix variances;   // C x d, every entry >= variance floor
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // one value per E-step of the winning restart
  int iterations = 0;

  Index components() const { return weights.size(); }
  Index dim() const { return means.cols(); }
};

struct ClusterAssignment {
  std::vector<int> labels;  // argmax responsibility, ties to the lowest component
  Matrix responsibilities;  // V x C, rows sum to 1
};

/// max(2, floor(V / 8)).
Index default_cluster_count(Index tokens);

/// EM with k-means++ seeding; best of `restarts` runs by final log-likelihood.
/// Deterministic in (e, components, seed, options).
GmmModel fit_gmm(const EmbeddingMatrix& e, Index components, std::uint64_t seed,
                 const GmmOptions& options = {});

/// Posterior responsibilities computed in log space.
ClusterAssignment assign(const GmmModel& model, const EmbeddingMatrix& e);

}  // namespace tora::gmm
