#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "klacmes/gaussian.hpp"
#include "test_util.hpp"

using namespace klacmes;

namespace {

GaussianParams standard(int n) {
  GaussianParams p;
  p.mean = Eigen::VectorXd::Zero(n);
  p.sigma = 1.0;
  p.cov = Eigen::MatrixXd::Identity(n, n);
  p.version = 1;
  return p;
}

GaussianParams gaussian_1d(double mean, double var, double sigma = 1.0) {
  GaussianParams p;
  p.mean = Eigen::VectorXd::Constant(1, mean);
  p.sigma = sigma;
  p.cov = Eigen::MatrixXd::Constant(1, 1, var);
  p.version = 1;
  return p;
}

}  // namespace

TEST_CASE("eigen cache reconstructs the covariance") {
  Rng rng(42);
  for (int n : {1, 2, 5, 10}) {
    GaussianParams d = testutil::random_gaussian(n, rng);
    EigenCache c = make_eigen_cache(d);
    Eigen::MatrixXd rebuilt =
        c.basis * c.scales.array().square().matrix().asDiagonal() * c.basis.transpose();
    REQUIRE((rebuilt - d.cov).norm() <= 1e-10 * d.cov.norm());
    Eigen::MatrixXd gram = c.basis.transpose() * c.basis;
    REQUIRE((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("eigen cache rejects non positive definite input") {
  GaussianParams d = standard(2);
  d.cov(0, 0) = -1.0;
  REQUIRE_THROWS_AS(make_eigen_cache(d), std::runtime_error);
}

TEST_CASE("stale cache is a contract violation") {
  GaussianParams d = standard(3);
  EigenCache c = make_eigen_cache(d);
  d.cov(1, 1) = 2.0;
  d.version++;
  Rng rng(1);
  REQUIRE_THROWS_AS(sample(d, c, 1, rng), ContractViolation);
  REQUIRE_THROWS_AS(whiten(d, c, d.mean), ContractViolation);
}

TEST_CASE("sample with sigma zero collapses to the mean") {
  GaussianParams d = standard(4);
  d.mean << 1.0, -2.0, 0.5, 3.0;
  d.sigma = 0.0;
  EigenCache c = make_eigen_cache(d);
  Rng rng(7);
  for (const auto& x : sample(d, c, 5, rng)) REQUIRE(x == d.mean);
}

TEST_CASE("sample matches its distribution (law of large numbers)") {
  const int n = 4;
  const int count = 100000;
  GaussianParams d = standard(n);
  EigenCache c = make_eigen_cache(d);
  Rng rng(123);
  auto xs = sample(d, c, count, rng);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (const auto& x : xs) mean += x;
  mean /= count;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
  for (const auto& x : xs) var += (x - mean).cwiseAbs2();
  var /= count - 1;

  const double mean_tol = 4.0 / std::sqrt(static_cast<double>(count));
  for (int i = 0; i < n; ++i) {
    REQUIRE(std::abs(mean[i]) <= mean_tol);
    REQUIRE(var[i] == Catch::Approx(1.0).margin(0.05));
  }
}

TEST_CASE("sampling is deterministic from copied rng state") {
  Rng rng(99);
  GaussianParams d = testutil::random_gaussian(3, rng);
  EigenCache c = make_eigen_cache(d);
  Rng a(555);
  Rng b = a;
  auto xs = sample(d, c, 6, a);
  auto ys = sample(d, c, 6, b);
  for (size_t i = 0; i < xs.size(); ++i) REQUIRE(xs[i] == ys[i]);
}

TEST_CASE("whiten maps the center to the origin and is identity for C = I") {
  Rng rng(5);
  GaussianParams d = testutil::random_gaussian(5, rng);
  EigenCache c = make_eigen_cache(d);
  REQUIRE(whiten(d, c, d.mean).norm() <= 1e-14);

  GaussianParams id = standard(3);
  id.mean << 1.0, 2.0, 3.0;
  EigenCache idc = make_eigen_cache(id);
  Eigen::VectorXd x(3);
  x << 4.0, 4.0, 4.0;
  REQUIRE((whiten(id, idc, x) - (x - id.mean)).norm() <= 1e-14);
}

TEST_CASE("whiten against a hand-computed anisotropic case") {
  GaussianParams d;
  d.mean = Eigen::VectorXd::Zero(2);
  d.sigma = 1.0;
  d.cov.resize(2, 2);
  d.cov << 4.0, 0.0, 0.0, 1.0;
  d.version = 1;
  EigenCache c = make_eigen_cache(d);
  Eigen::VectorXd x(2);
  x << 2.0, 3.0;
  Eigen::VectorXd w = whiten(d, c, x);
  REQUIRE(w[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(w[1] == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("whitened samples are standard normal for any distribution") {
  Rng rng(2024);
  GaussianParams d = testutil::random_gaussian(3, rng);
  d.sigma = 0.05;  // exercise the sigma folding
  EigenCache c = make_eigen_cache(d);
  const int count = 100000;
  auto xs = sample(d, c, count, rng);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(3);
  std::vector<Eigen::VectorXd> ws;
  ws.reserve(xs.size());
  for (const auto& x : xs) ws.push_back(whiten(d, c, x));
  for (const auto& w : ws) mean += w;
  mean /= count;
  for (const auto& w : ws) var += (w - mean).cwiseAbs2();
  var /= count - 1;
  const double mean_tol = 4.0 / std::sqrt(static_cast<double>(count));
  for (int i = 0; i < 3; ++i) {
    REQUIRE(std::abs(mean[i]) <= mean_tol);
    REQUIRE(var[i] == Catch::Approx(1.0).margin(0.05));
  }
}

TEST_CASE("kl divergence of a distribution with itself is zero") {
  Rng rng(17);
  for (int n : {1, 3, 7}) {
    GaussianParams d = testutil::random_gaussian(n, rng);
    REQUIRE(kl_divergence(d, d) == 0.0);
  }
}

TEST_CASE("kl divergence 1-D spot values") {
  // unit variances, means one apart: KL = 1/2
  REQUIRE(kl_divergence(gaussian_1d(0.0, 1.0), gaussian_1d(1.0, 1.0)) ==
          Catch::Approx(0.5).margin(1e-12));
  // equal means, variances 4 vs 1: KL = (4 - 1 - ln 4)/2
  const double expected = 0.5 * (4.0 - 1.0 - std::log(4.0));
  REQUIRE(kl_divergence(gaussian_1d(0.0, 4.0), gaussian_1d(0.0, 1.0)) ==
          Catch::Approx(expected).margin(1e-12));
  // sigma is folded into the full covariance: sigma=2, C=1 equals C=4
  REQUIRE(kl_divergence(gaussian_1d(0.0, 1.0, 2.0), gaussian_1d(0.0, 1.0)) ==
          Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("kl divergence is asymmetric") {
  GaussianParams wide = gaussian_1d(0.0, 4.0);
  GaussianParams unit = gaussian_1d(0.0, 1.0);
  REQUIRE(kl_divergence(wide, unit) != kl_divergence(unit, wide));
}

TEST_CASE("kl divergence is non-negative and zero only for equal parameters") {
  Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 10.0);
    GaussianParams q = testutil::random_gaussian(n, rng);
    GaussianParams p = testutil::random_gaussian(n, rng);
    const double kl = kl_divergence(q, p);
    REQUIRE(kl >= 0.0);
    REQUIRE(kl > 1e-12);  // distinct random pairs
  }
}

TEST_CASE("closed-form kl matches monte-carlo integration of the definition") {
  Rng rng(808);
  int tested = 0;
  while (tested < 5) {
    const int n = 1 + static_cast<int>(rng.uniform() * 5.0);
    GaussianParams q = testutil::random_gaussian(n, rng, 0.5);
    GaussianParams p = testutil::random_gaussian(n, rng, 0.5);
    const double kl = kl_divergence(q, p);
    if (kl >= 5.0) continue;
    auto [estimate, se] = testutil::mc_kl(q, p, 100000, rng);
    REQUIRE(std::abs(kl - estimate) <= 3.0 * se);
    ++tested;
  }

  // the documented 1-D case agrees with its MC value to 1%
  GaussianParams q = gaussian_1d(0.0, 4.0);
  GaussianParams p = gaussian_1d(0.0, 1.0);
  auto [estimate, se] = testutil::mc_kl(q, p, 1000000, rng);
  REQUIRE(kl_divergence(q, p) == Catch::Approx(estimate).epsilon(0.01));
}

TEST_CASE("kl error bound spot values") {
  REQUIRE(kl_error_bound(0.0) == 0.0);
  REQUIRE(kl_error_bound(1.0) == Catch::Approx(2.3548200450309493).margin(1e-12));
  REQUIRE(kl_error_bound(0.25) == Catch::Approx(1.1774100225154747).margin(1e-12));
  REQUIRE_THROWS_AS(kl_error_bound(-1e-3), std::invalid_argument);
}

TEST_CASE("empirical ranking-error drift respects the kl bound") {
  Rng rng(4242);
  const int n = 3;
  // fixed continuous objective and fixed ranker, deliberately different
  Eigen::VectorXd a = rng.normal_vector(n);
  Eigen::VectorXd w = rng.normal_vector(n);
  auto objective = [&](const Eigen::VectorXd& x) { return (x - a).squaredNorm(); };
  auto ranker = [&](const Eigen::VectorXd& x) { return w.dot(x); };  // larger = better

  auto pair_error = [&](const GaussianParams& d, Rng& r, int pairs, double& se) {
    EigenCache c = make_eigen_cache(d);
    double sum = 0.0;
    for (int k = 0; k < pairs; ++k) {
      Eigen::VectorXd x = d.mean + d.sigma * (c.sqrt_cov * r.normal_vector(n));
      Eigen::VectorXd y = d.mean + d.sigma * (c.sqrt_cov * r.normal_vector(n));
      const bool want_x = objective(x) < objective(y);
      const bool said_x = ranker(x) > ranker(y);
      sum += (want_x == said_x) ? 0.0 : 1.0;
    }
    const double mean = sum / pairs;
    se = std::sqrt(mean * (1.0 - mean) / pairs);
    return mean;
  };

  for (int trial = 0; trial < 30; ++trial) {
    GaussianParams p = testutil::random_gaussian(n, rng, 0.5);
    GaussianParams pp = p;
    pp.mean += 0.3 * rng.normal_vector(n);
    pp.sigma *= std::exp(rng.uniform(-0.2, 0.2));
    const int pairs = 4000;
    double se_p = 0.0, se_pp = 0.0;
    const double err_p = pair_error(p, rng, pairs, se_p);
    const double err_pp = pair_error(pp, rng, pairs, se_pp);
    const double margin = 3.0 * std::sqrt(se_p * se_p + se_pp * se_pp);
    REQUIRE(std::abs(err_p - err_pp) <= kl_error_bound(kl_divergence(pp, p)) + margin);
  }
}
