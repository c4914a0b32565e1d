#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "child/eval.hpp"
#include "child/hungarian.hpp"
#include "support.hpp"

using namespace child;
using child::testing::random_matrix;

namespace {

double brute_force_best(const Mat& w) {
  std::vector<int> perm(static_cast<std::size_t>(w.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  do {
    double v = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r) v += w(r, perm[static_cast<std::size_t>(r)]);
    best = std::max(best, v);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("identical estimates give MCC 1 and the identity permutation") {
    std::mt19937_64 rng(1);
    const Mat z = random_matrix(500, 4, rng);
    const MccResult r = compute_mcc(z, z);
    CHECK(r.mcc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.permutation == std::vector<int>{0, 1, 2, 3});
  }

  TEST_CASE("permuted positive affine maps are recovered exactly") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
      const int d = 2 + trial % 5;
      const Mat z = random_matrix(400, d, rng);
      std::vector<int> perm(static_cast<std::size_t>(d));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Mat est(400, d);
      for (int j = 0; j < d; ++j) est.col(j) = u(rng) * z.col(perm[static_cast<std::size_t>(j)]).array() + u(rng);
      for (Correlation kind : {Correlation::Pearson, Correlation::Spearman}) {
        const MccResult r = compute_mcc(z, est, kind);
        CHECK(r.mcc == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.permutation == perm);
      }
    }
  }

  TEST_CASE("Spearman is invariant to monotone maps, Pearson is not") {
    std::mt19937_64 rng(3);
    const Mat z = random_matrix(1000, 3, rng);
    Mat est = z;
    est.col(0) = z.col(0).array().exp().pow(3.0);
    est.col(2) = z.col(2).array().cube();
    CHECK(compute_mcc(z, est, Correlation::Spearman).mcc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(compute_mcc(z, est, Correlation::Pearson).mcc < 0.95);
  }

  TEST_CASE("MCC lies in [0, 1] and equals the mean of the assigned correlations") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const Mat a = random_matrix(50, 5, rng);
      const Mat b = random_matrix(50, 5, rng);
      const MccResult r = compute_mcc(a, b);
      CHECK(r.mcc >= 0.0);
      CHECK(r.mcc <= 1.0);
      double s = 0;
      for (std::size_t j = 0; j < r.permutation.size(); ++j) s += r.corr(r.permutation[j], static_cast<Eigen::Index>(j));
      CHECK(r.mcc == doctest::Approx(s / 5));
      std::vector<int> sorted = r.permutation;
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
    }
  }

  TEST_CASE("zero-variance component is zeroed with a warning") {
    std::mt19937_64 rng(5);
    const Mat z = random_matrix(100, 3, rng);
    Mat est = z;
    est.col(1).setConstant(2.5);
    const MccResult r = compute_mcc(z, est);
    CHECK(r.corr.col(1).isZero(0.0));
    CHECK(r.mcc == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("zero variance") != std::string::npos);
  }

  TEST_CASE("shape errors") {
    CHECK_THROWS(compute_mcc(Mat::Zero(5, 2), Mat::Zero(5, 3)));
    CHECK_THROWS(compute_mcc(Mat::Zero(2, 2), Mat::Zero(2, 2)));
    Mat bad = Mat::Ones(5, 1);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(compute_mcc(bad, Mat::Ones(5, 1)), NumericalError);
  }

  TEST_CASE("Hungarian assignment equals the exhaustive optimum for d <= 6") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      const int d = 1 + trial % 6;
      Mat w(d, d);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
      const auto a = max_weight_assignment(w);
      CHECK(assignment_value(w, a) == doctest::Approx(brute_force_best(w)).epsilon(1e-12));
    }
    Mat rect(2, 4);
    rect << 1, 9, 3, 0, 8, 9, 1, 2;
    const auto a = max_weight_assignment(rect);
    CHECK(assignment_value(rect, a) == 17.0);
    CHECK_THROWS(max_weight_assignment(Mat::Zero(3, 2)));
  }

  TEST_CASE("swapped layers: pooled MCC unchanged, per-layer MCC drops, leakage flagged") {
    std::mt19937_64 rng(7);
    const Mat l1 = random_matrix(300, 2, rng);
    const Mat l2 = random_matrix(300, 2, rng);
    const EvalReport ok = compute_mcc_per_layer({l1, l2}, {l1, l2});
    CHECK_FALSE(ok.cross_layer_leakage);
    const EvalReport swapped = compute_mcc_per_layer({l1, l2}, {l2, l1});
    CHECK(swapped.mcc_overall == doctest::Approx(ok.mcc_overall).epsilon(1e-12));
    CHECK(swapped.mcc_per_layer[0] < 0.3);
    CHECK(swapped.mcc_per_layer[1] < 0.3);
    CHECK(swapped.cross_layer_leakage);
    const nlohmann::json j = swapped.to_json();
    CHECK(j.at("cross_layer_leakage") == true);
    CHECK(j.at("mcc_per_layer").size() == 2);
  }

  TEST_CASE("correlational score: zero on identical data, symmetric, sign-flip closed form") {
    std::mt19937_64 rng(8);
    Mat x = random_matrix(2000, 3, rng);
    x.col(1) += 0.7 * x.col(0);
    CHECK(correlational_score(x, x) == 0.0);
    const Mat y = random_matrix(2000, 3, rng);
    CHECK(correlational_score(x, y) == doctest::Approx(correlational_score(y, x)).epsilon(1e-14));
    Mat two = x.leftCols(2);
    Mat flipped = two;
    flipped.col(1) = -flipped.col(1);
    const double c12 = feature_correlation(two)(0, 1);
    CHECK(correlational_score(two, flipped) == doctest::Approx(4.0 * std::abs(c12)).epsilon(1e-12));
  }

  TEST_CASE("correlational score: white noise vs rho = 0.9 pair is about 2 * 0.9") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    const int S = 100000;
    Mat white(S, 2), corr(S, 2);
    for (int i = 0; i < S; ++i) {
      white(i, 0) = n(rng);
      white(i, 1) = n(rng);
      const double a = n(rng), b = n(rng);
      corr(i, 0) = a;
      corr(i, 1) = 0.9 * a + std::sqrt(1 - 0.81) * b;
    }
    // Standard error of a correlation estimate is about (1 - rho^2) / sqrt(S).
    CHECK(correlational_score(white, corr) == doctest::Approx(1.8).epsilon(0.01));
  }

  TEST_CASE("column ranks average ties") {
    Mat a(5, 1);
    a << 3, 1, 3, 2, 3;
    const Mat r = column_ranks(a);
    CHECK(r(1, 0) == 0.0);
    CHECK(r(3, 0) == 1.0);
    CHECK(r(0, 0) == 3.0);
    CHECK(r(2, 0) == 3.0);
    CHECK(correlation_from_string("spearman") == Correlation::Spearman);
    CHECK_THROWS_AS(correlation_from_string("kendall"), ConfigError);
  }
}
