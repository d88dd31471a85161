#include "tora/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tora/error.hpp"
#include "tora/rng.hpp"

namespace tora::gmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kRestartStride = 0x9E3779B97F4A7C15ULL;
// A component whose responsibility mass falls below this is frozen.
constexpr double kEmptyMass = 1e-300;

// Fills log(w_c) + log N(x_i | mean_c, var_c) into `joint` (V x C) and
// returns the data log-likelihood.
double joint_log_density(const GmmModel& model, const EmbeddingMatrix& e, Matrix& joint) {
  const Index tokens = e.rows();
  const Index comps = model.components();
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  joint.resize(tokens, comps);
  for (Index c = 0; c < comps; ++c) {
    const double log_weight = model.weights(c) > 0.0 ? std::log(model.weights(c)) : kNegInf;
    const Eigen::RowVectorXd inverse = model.variances.row(c).cwiseInverse();
    const double log_norm =
        -0.5 * (static_cast<double>(e.cols()) * log_two_pi +
                model.variances.row(c).array().log().sum());
    for (Index i = 0; i < tokens; ++i) {
      const double mahalanobis =
          ((e.row(i) - model.means.row(c)).array().square() * inverse.array()).sum();
      joint(i, c) = log_weight + log_norm - 0.5 * mahalanobis;
    }
  }
  double total = 0.0;
  for (Index i = 0; i < tokens; ++i) {
    const double peak = joint.row(i).maxCoeff();
    total += peak + std::log((joint.row(i).array() - peak).exp().sum());
  }
  return total;
}

Matrix normalize_rows(const Matrix& joint) {
  Matrix resp(joint.rows(), joint.cols());
  for (Index i = 0; i < joint.rows(); ++i) {
    const double peak = joint.row(i).maxCoeff();
    Eigen::RowVectorXd row = (joint.row(i).array() - peak).exp();
    resp.row(i) = row / row.sum();
  }
  return resp;
}

GmmModel seed_model(const EmbeddingMatrix& e, Index comps, std::uint64_t seed,
                    const Eigen::RowVectorXd& global_variance) {
  SplitMix64 rng(seed);
  const Index tokens = e.rows();
  std::vector<Index> centers;
  centers.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(tokens))));
  Vector nearest = (e.rowwise() - e.row(centers.front())).rowwise().squaredNorm();
  while (static_cast<Index>(centers.size()) < comps) {
    const double total = nearest.sum();
    Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double running = 0.0;
      pick = tokens - 1;
      for (Index i = 0; i < tokens; ++i) {
        running += nearest(i);
        if (running > target && nearest(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(tokens)));
    }
    centers.push_back(pick);
    nearest = nearest.cwiseMin((e.rowwise() - e.row(pick)).rowwise().squaredNorm());
  }

  GmmModel model;
  model.weights = Vector::Constant(comps, 1.0 / static_cast<double>(comps));
  model.means.resize(comps, e.cols());
  for (Index c = 0; c < comps; ++c) model.means.row(c) = e.row(centers[static_cast<std::size_t>(c)]);
  model.variances = global_variance.replicate(comps, 1);
  return model;
}

void maximize(const EmbeddingMatrix& e, const Matrix& resp, double floor, GmmModel& model) {
  const Index comps = model.components();
  const double tokens = static_cast<double>(e.rows());
  for (Index c = 0; c < comps; ++c) {
    const double mass = resp.col(c).sum();
    if (mass < kEmptyMass) {
      model.weights(c) = 0.0;
      continue;
    }
    model.weights(c) = mass / tokens;
    const Eigen::RowVectorXd mean = (resp.col(c).transpose() * e) / mass;
    const Matrix offsets = e.rowwise() - mean;
    const Eigen::RowVectorXd spread =
        (resp.col(c).transpose() * offsets.array().square().matrix()) / mass;
    model.means.row(c) = mean;
    model.variances.row(c) = spread.cwiseMax(floor);
  }
  model.weights /= model.weights.sum();
}

GmmModel run_em(const EmbeddingMatrix& e, GmmModel model, const GmmOptions& options) {
  Matrix joint;
  double previous = kNegInf;
  for (int iteration = 0;; ++iteration) {
    const double log_likelihood = joint_log_density(model, e, joint);
    if (!std::isfinite(log_likelihood)) {
      fail(ErrorCode::kNumerical, "GMM log-likelihood became non-finite");
    }
    model.log_likelihood_trace.push_back(log_likelihood);
    model.log_likelihood = log_likelihood;
    model.iterations = iteration;
    if (iteration > 0 && log_likelihood - previous < options.tolerance) break;
    if (iteration == options.max_iterations) break;
    maximize(e, normalize_rows(joint), options.variance_floor, model);
    previous = log_likelihood;
  }
  return model;
}

}  // namespace

Index default_cluster_count(Index tokens) { return std::max<Index>(2, tokens / 8); }

GmmModel fit_gmm(const EmbeddingMatrix& e, Index components, std::uint64_t seed,
                 const GmmOptions& options) {
  require(components >= 1, ErrorCode::kValidation, "GMM needs at least one component");
  require(e.rows() >= components, ErrorCode::kValidation,
          "GMM with " + std::to_string(components) + " components needs at least that many tokens, got " +
              std::to_string(e.rows()));
  require(e.allFinite(), ErrorCode::kValidation, "GMM input has non-finite entries");
  require(options.restarts >= 1 && options.max_iterations >= 0 && options.variance_floor > 0.0,
          ErrorCode::kConfig, "invalid GMM options");

  const Eigen::RowVectorXd mean = e.colwise().mean();
  const Eigen::RowVectorXd global_variance =
      (e.rowwise() - mean).array().square().colwise().mean().matrix();
  require(global_variance.maxCoeff() > 0.0, ErrorCode::kDegenerate,
          "all tokens are identical; nothing to cluster");

  GmmModel best;
  bool have_best = false;
  for (int restart = 0; restart < options.restarts; ++restart) {
    const std::uint64_t restart_seed = seed + static_cast<std::uint64_t>(restart) * kRestartStride;
    GmmModel initial =
        seed_model(e, components, restart_seed, global_variance.cwiseMax(options.variance_floor));
    GmmModel fitted = run_em(e, std::move(initial), options);
    if (!have_best || fitted.log_likelihood > best.log_likelihood) {
      best = std::move(fitted);
      have_best = true;
    }
  }
  return best;
}

ClusterAssignment assign(const GmmModel& model, const EmbeddingMatrix& e) {
  require(e.cols() == model.dim(), ErrorCode::kValidation,
          "GMM of dimension " + std::to_string(model.dim()) + " applied to data of dimension " +
              std::to_string(e.cols()));
  Matrix joint;
  joint_log_density(model, e, joint);
  ClusterAssignment assignment;
  assignment.responsibilities = normalize_rows(joint);
  assignment.labels.resize(static_cast<std::size_t>(e.rows()));
  for (Index i = 0; i < e.rows(); ++i) {
    Index label = 0;
    for (Index c = 1; c < model.components(); ++c) {
      if (assignment.responsibilities(i, c) > assignment.responsibilities(i, label)) label = c;
    }
    assignment.labels[static_cast<std::size_t>(i)] = static_cast<int>(label);
  }
  return assignment;
}

}  // namespace tora::gmm
