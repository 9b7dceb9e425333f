#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "klacmes/bfgs.hpp"
#include "test_util.hpp"

using namespace klacmes;

TEST_CASE("bfgs terminates a convex quadratic quickly") {
  const int n = 5;
  Rng setup(12);
  Eigen::MatrixXd a = testutil::make_spd(n, setup, 1.0);
  auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(a * x); };
  Rng rng(1);
  RunRecord rec = bfgs_minimize(f, Eigen::VectorXd::Constant(n, 2.0), BfgsConfig{}, 5000,
                                1e-10, rng);
  REQUIRE(rec.termination == Termination::target);
  // 10n quasi-Newton iterations at roughly n+4 evaluations each
  REQUIRE(rec.true_evaluations() <= 10 * n * (n + 4));
}

TEST_CASE("a start that already satisfies the target returns after one evaluation") {
  auto f = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  Rng rng(2);
  RunRecord rec =
      bfgs_minimize(f, Eigen::VectorXd::Zero(3), BfgsConfig{}, 100, 1e-10, rng);
  REQUIRE(rec.termination == Termination::target);
  REQUIRE(rec.true_evaluations() == 1);
}

TEST_CASE("budget exhaustion mid-gradient truncates and returns") {
  const int n = 6;
  auto f = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  Rng rng(3);
  const long budget = n + 4;  // dies inside the second gradient
  RunRecord rec =
      bfgs_minimize(f, Eigen::VectorXd::Constant(n, 1.0), BfgsConfig{}, budget, 0.0, rng);
  REQUIRE(rec.termination == Termination::budget);
  REQUIRE(rec.true_evaluations() == budget);
  for (size_t i = 1; i < rec.trace.size(); ++i)
    REQUIRE(rec.trace[i].best_f <= rec.trace[i - 1].best_f);
}

TEST_CASE("bfgs degrades under monotone power transforms") {
  const int n = 5;
  std::vector<double> evals_p1, evals_p4;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    BenchmarkSpec spec;
    spec.function_id = FunctionId::rosenbrock;
    spec.dim = n;
    BenchmarkInstance inst_p1 = make_instance(spec, seed);
    spec.power = 4.0;
    BenchmarkInstance inst_p4 = make_instance(spec, seed);

    Rng r1(seed), r2(seed);
    const Eigen::VectorXd x0 = Rng(seed ^ 0xabcd).uniform_vector(n, -5.0, 5.0);
    auto run = [&](const BenchmarkInstance& inst, Rng& rng) {
      auto f = [&](const Eigen::VectorXd& x) { return evaluate(inst, x); };
      RunRecord rec = bfgs_minimize(f, x0, BfgsConfig{}, 100000, 1e-8, rng);
      auto h = rec.hit(1e-8);
      return h ? static_cast<double>(*h) : std::numeric_limits<double>::infinity();
    };
    evals_p1.push_back(run(inst_p1, r1));
    evals_p4.push_back(run(inst_p4, r2));
  }
  std::sort(evals_p1.begin(), evals_p1.end());
  std::sort(evals_p4.begin(), evals_p4.end());
  REQUIRE(evals_p1[2] < std::numeric_limits<double>::infinity());
  REQUIRE(evals_p4[2] > evals_p1[2]);  // strictly slower on the 4th power
}

TEST_CASE("translation equivariance of the whole trace") {
  const int n = 4;
  Rng setup(9);
  Eigen::MatrixXd a = testutil::make_spd(n, setup, 1.0);
  auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(a * x); };
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(n, 2.0);
  auto f_shifted = [&](const Eigen::VectorXd& x) { return f(x - shift); };

  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(n, 0.5);
  Rng r1(77), r2(77);
  const long budget = 400;
  RunRecord base = bfgs_minimize(f, x0, BfgsConfig{}, budget, 0.0, r1);
  RunRecord moved = bfgs_minimize(f_shifted, x0 + shift, BfgsConfig{}, budget, 0.0, r2);

  REQUIRE(base.true_evaluations() == moved.true_evaluations());
  for (size_t i = 0; i < base.trace.size(); ++i) {
    const double fa = base.trace[i].best_f;
    const double fb = moved.trace[i].best_f;
    REQUIRE(fb == Catch::Approx(fa).margin(1e-9).epsilon(1e-6));
  }
}

TEST_CASE("line-search failure restarts from a fresh uniform point") {
  // a function whose every direction looks flat at the scale of the first step
  auto f = [](const Eigen::VectorXd& x) { return std::floor(x.squaredNorm() * 1e-4); };
  Rng rng(5);
  BfgsConfig cfg;
  cfg.max_line_steps = 5;
  RunRecord rec = bfgs_minimize(f, Eigen::VectorXd::Constant(3, 1.0), cfg, 300, -1.0, rng);
  REQUIRE(rec.termination == Termination::budget);  // kept going via restarts
  REQUIRE(rec.true_evaluations() == 300);

  cfg.restart_on_failure = false;
  Rng rng2(5);
  RunRecord rec2 = bfgs_minimize(f, Eigen::VectorXd::Constant(3, 1.0), cfg, 300, -1.0, rng2);
  REQUIRE(rec2.termination == Termination::failure);
  REQUIRE(rec2.true_evaluations() < 300);
}
