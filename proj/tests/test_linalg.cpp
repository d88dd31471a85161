#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <vector>

#include "support.hpp"
#include "tora/error.hpp"
#include "tora/linalg.hpp"

using namespace tora;
using namespace tora::linalg;

namespace {

// Straight transcription: distance from (i, v_i) to the line through the endpoints.
Index brute_force_elbow(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double x1 = 1.0, y1 = v.front(), x2 = n, y2 = v.back();
  Index best = 1;
  double best_distance = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = static_cast<double>(i + 1);
    const double d = std::abs((y2 - y1) * x - (x2 - x1) * v[i] + x2 * y1 - y2 * x1) /
                     std::hypot(y2 - y1, x2 - x1);
    if (d > best_distance) {
      best_distance = d;
      best = static_cast<Index>(i + 1);
    }
  }
  return std::clamp<Index>(best, 1, static_cast<Index>(v.size()) - 1);
}

std::vector<double> random_non_increasing(SplitMix64& rng, std::size_t n) {
  std::vector<double> v(n);
  double current = 1.0 + 10.0 * rng.uniform();
  for (auto& x : v) {
    x = current;
    current -= rng.uniform() * rng.uniform() * current;
  }
  return v;
}

}  // namespace

TEST_CASE("svd reconstructs and has orthonormal factors") {
  SplitMix64 rng(1);
  for (auto [rows, cols] : std::vector<std::pair<Index, Index>>{{8, 5}, {5, 8}, {16, 64}, {3, 3}}) {
    const Matrix e = testing::gaussian(rng, rows, cols);
    const auto f = svd(e);
    const Index r = std::min(rows, cols);
    CHECK(f.rank_bound() == r);
    CHECK(testing::max_abs(f.reconstruct() - e) < 1e-12);
    CHECK(testing::max_abs(f.left.transpose() * f.left - Matrix::Identity(r, r)) < 1e-12);
    CHECK(testing::max_abs(f.right.transpose() * f.right - Matrix::Identity(r, r)) < 1e-12);
    for (Index i = 1; i < r; ++i) CHECK(f.singular_values(i) <= f.singular_values(i - 1));
  }
}

TEST_CASE("svd sign convention makes the largest entry of each right vector positive") {
  SplitMix64 rng(2);
  const Matrix e = testing::gaussian(rng, 6, 9);
  const auto a = svd(e);
  const auto b = svd(-e);
  for (Index j = 0; j < a.right.cols(); ++j) {
    Index arg = 0;
    a.right.col(j).cwiseAbs().maxCoeff(&arg);
    CHECK(a.right(arg, j) > 0.0);
  }
  // Negating the input flips U only.
  CHECK(testing::max_abs(a.right - b.right) < 1e-12);
  CHECK(testing::max_abs(a.left + b.left) < 1e-12);
}

TEST_CASE("svd rejects non-finite input") {
  Matrix e = Matrix::Ones(3, 3);
  e(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(e), Error);
}

TEST_CASE("mdc elbow agrees with exhaustive search") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto v = random_non_increasing(rng, 2 + rng.below(63));
    REQUIRE(mdc_elbow(v) == brute_force_elbow(v));
  }
}

TEST_CASE("mdc elbow edge cases") {
  CHECK(mdc_elbow(std::vector<double>{3.0, 1.0}) == 1);
  CHECK(mdc_elbow(std::vector<double>{2.0, 2.0, 2.0, 2.0}) == 1);  // flat: ties go to the first index
  CHECK(mdc_elbow(std::vector<double>{10.0, 1.0, 0.9, 0.8, 0.0}) == 2);
  CHECK_THROWS_AS(mdc_elbow(std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS(mdc_elbow(std::vector<double>{1.0, 2.0}), Error);
  CHECK_THROWS_AS(mdc_elbow(std::vector<double>{1.0, std::nan("")}), Error);
}

TEST_CASE("split_principal partitions the right vectors") {
  SplitMix64 rng(6);
  const auto f = svd(testing::spectral(rng, 12, 20));
  const auto split = split_principal(f);
  CHECK(split.k == mdc_elbow(f.singular_values));
  CHECK(split.principal.cols() + split.residual.cols() == f.rank_bound());
  CHECK(testing::max_abs(split.residual.col(0) - f.right.col(split.k)) == 0.0);

  const auto fixed = split_principal(f, 4);
  CHECK(fixed.k == 4);
  CHECK_THROWS_AS(split_principal(f, 0), Error);
  CHECK_THROWS_AS(split_principal(f, f.rank_bound()), Error);
}

TEST_CASE("plane rotation maps from onto to and is orthogonal") {
  SplitMix64 rng(7);
  for (Index d : {2, 3, 8, 64, 512}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Vector a = testing::unit(rng, d);
      const Vector b = testing::unit(rng, d);
      const auto g = build_plane_rotation(a, b);
      CHECK((apply_rotation(g, a) - b).norm() < 1e-12);
      CHECK(std::abs(g.angle - std::acos(std::clamp(a.dot(b), -1.0, 1.0))) < 1e-7);

      // Dense oracle: explicit G = I + (cos - 1)(aa^T + bb^T) + sin(ba^T - ab^T).
      if (d <= 64) {
        const Matrix dense = Matrix::Identity(d, d) +
                             (std::cos(g.angle) - 1.0) * (g.axis_a * g.axis_a.transpose() +
                                                          g.axis_b * g.axis_b.transpose()) +
                             std::sin(g.angle) * (g.axis_b * g.axis_a.transpose() -
                                                  g.axis_a * g.axis_b.transpose());
        const Matrix probes = testing::gaussian(rng, d, 3);
        CHECK(testing::max_abs(dense * probes - apply_rotation(g, probes)) < 1e-12);
        CHECK(testing::max_abs(dense.transpose() * dense - Matrix::Identity(d, d)) < 1e-12);
      }

      const Vector probe = testing::gaussian(rng, d);
      const Vector back = apply_rotation(g.inverse(), apply_rotation(g, probe));
      CHECK((back - probe).norm() < 1e-12 * probe.norm() + 1e-12);
    }
  }
}

TEST_CASE("plane rotation degenerate pairs") {
  Vector e0 = Vector::Unit(4, 0);
  const auto same = build_plane_rotation(e0, e0);
  CHECK(same.angle == 0.0);
  CHECK((apply_rotation(same, Vector(Vector::Unit(4, 2))) - Vector::Unit(4, 2)).norm() == 0.0);

  const auto flip = build_plane_rotation(e0, -e0);
  CHECK(flip.angle == doctest::Approx(std::numbers::pi));
  CHECK((apply_rotation(flip, e0) + e0).norm() < 1e-15);
  // Canonical second axis: lowest-index basis vector orthogonal to e0.
  CHECK((flip.axis_b - Vector::Unit(4, 1)).norm() < 1e-15);
  CHECK((apply_rotation(flip, Vector(Vector::Unit(4, 3))) - Vector::Unit(4, 3)).norm() < 1e-15);

  Vector skew = Vector::Ones(3) / std::sqrt(3.0);
  const auto skew_flip = build_plane_rotation(skew, -skew);
  CHECK((apply_rotation(skew_flip, skew) + skew).norm() < 1e-12);
  CHECK(std::abs(skew_flip.axis_b.dot(skew)) < 1e-15);

  CHECK_THROWS_AS(build_plane_rotation(Vector::Ones(3), Vector::Unit(3, 0)), Error);
  CHECK_THROWS_AS(build_plane_rotation(Vector::Unit(1, 0), Vector::Unit(1, 0)), Error);
  CHECK_THROWS_AS(build_plane_rotation(Vector::Unit(3, 0), Vector::Unit(4, 0)), Error);
}

TEST_CASE("projection onto the complement is orthogonal to the basis") {
  SplitMix64 rng(8);
  const auto f = svd(testing::gaussian(rng, 10, 30));
  const Matrix basis = f.right.leftCols(4);
  const Vector s = testing::gaussian(rng, 30);
  const Vector p = project_onto_complement(s, basis);
  CHECK(testing::max_abs(basis.transpose() * p) < 1e-12);
  CHECK((project_onto_complement(p, basis) - p).norm() < 1e-12);
}

TEST_CASE("cosine") {
  Vector a(2), b(2);
  a << 1, 0;
  b << 1, 1;
  CHECK(cosine(a, b) == doctest::Approx(std::sqrt(0.5)));
  CHECK(cosine(a, -a) == -1.0);
  CHECK_THROWS_AS(cosine(a, Vector::Zero(2)), Error);
}
