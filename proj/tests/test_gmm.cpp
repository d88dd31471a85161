#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "support.hpp"
#include "tora/error.hpp"
#include "tora/gmm.hpp"

using namespace tora;
using namespace tora::gmm;

namespace {

struct Blobs {
  Matrix points;
  std::vector<int> truth;
};

Blobs separated_blobs(SplitMix64& rng, int clusters, int per_cluster, Index dim, double separation) {
  Blobs blobs;
  blobs.points.resize(clusters * per_cluster, dim);
  for (int c = 0; c < clusters; ++c) {
    const Vector center = testing::unit(rng, dim) * separation * (c + 1);
    for (int i = 0; i < per_cluster; ++i) {
      blobs.points.row(c * per_cluster + i) = (center + testing::gaussian(rng, dim)).transpose();
      blobs.truth.push_back(c);
    }
  }
  return blobs;
}

// True when the labelings induce the same partition.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, int> forward, backward;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (forward.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (backward.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("log-likelihood never decreases") {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix e = testing::gaussian(rng, 30, 6) + testing::gaussian(rng, 30, 6).cwiseAbs() * 3.0;
    GmmOptions options;
    options.restarts = 1;
    const auto model = fit_gmm(e, 3, rng.next(), options);
    REQUIRE(model.log_likelihood_trace.size() >= 2);
    for (std::size_t i = 1; i < model.log_likelihood_trace.size(); ++i) {
      CHECK(model.log_likelihood_trace[i] >= model.log_likelihood_trace[i - 1] - 1e-8);
    }
    CHECK(model.weights.sum() == doctest::Approx(1.0));
    CHECK(model.variances.minCoeff() >= options.variance_floor);
  }
}

TEST_CASE("well separated blobs are recovered exactly") {
  SplitMix64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const auto blobs = separated_blobs(rng, 4, 10, 5, 20.0);
    const auto labels = assign(fit_gmm(blobs.points, 4, rng.next()), blobs.points).labels;
    CHECK(same_partition(labels, blobs.truth));
    CHECK(std::set<int>(labels.begin(), labels.end()).size() == 4);
  }
}

TEST_CASE("fits are deterministic per seed") {
  SplitMix64 rng(43);
  const Matrix e = testing::gaussian(rng, 24, 4);
  const auto a = fit_gmm(e, 3, 7);
  const auto b = fit_gmm(e, 3, 7);
  CHECK(a.log_likelihood == b.log_likelihood);
  CHECK(a.means == b.means);
  CHECK(a.variances == b.variances);
  CHECK(assign(a, e).labels == assign(b, e).labels);
}

TEST_CASE("responsibilities are a distribution over components") {
  SplitMix64 rng(44);
  const Matrix e = testing::gaussian(rng, 20, 3);
  const auto assignment = assign(fit_gmm(e, 2, 1), e);
  for (Index i = 0; i < e.rows(); ++i) {
    CHECK(assignment.responsibilities.row(i).sum() == doctest::Approx(1.0));
    Index arg = 0;
    assignment.responsibilities.row(i).maxCoeff(&arg);
    CHECK(assignment.labels[static_cast<std::size_t>(i)] == static_cast<int>(arg));
  }
}

TEST_CASE("duplicate tokens and tiny inputs") {
  Matrix e(6, 2);
  e << 0, 0, 0, 0, 0, 0, 10, 10, 10, 10, 10, 10;
  const auto labels = assign(fit_gmm(e, 2, 3), e).labels;
  CHECK(labels[0] == labels[2]);
  CHECK(labels[3] == labels[5]);
  CHECK(labels[0] != labels[3]);

  CHECK_THROWS_AS(fit_gmm(Matrix::Ones(5, 3), 2, 0), Error);
  CHECK_THROWS_AS(fit_gmm(Matrix::Random(2, 3), 3, 0), Error);
  CHECK_THROWS_AS(assign(fit_gmm(e, 2, 0), Matrix::Random(3, 5)), Error);
}

TEST_CASE("default cluster count") {
  CHECK(default_cluster_count(8) == 2);
  CHECK(default_cluster_count(16) == 2);
  CHECK(default_cluster_count(77) == 9);
}
