#ifndef KLACMES_BFGS_HPP
#define KLACMES_BFGS_HPP

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

#include "klacmes/run_record.hpp"
#include "klacmes/rng.hpp"

namespace klacmes {

struct BfgsConfig {
  double fd_step = 1e-8;  // forward-difference step for gradients
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_steps = 40;
  bool restart_on_failure = true;  // fresh uniform point when the line search fails
};

namespace detail {

struct StopRun {
  Termination reason;
};

// Budget- and target-aware evaluation wrapper shared by the BFGS internals.
template <class F>
class BfgsEvaluator {
 public:
  BfgsEvaluator(F& f, long budget, double target, std::vector<TracePoint>& trace)
      : f_(f), budget_(budget), target_(target), trace_(trace) {}

  double operator()(const Eigen::VectorXd& x) {
    if (evals_ >= budget_) throw StopRun{Termination::budget};
    const double v = f_(x);
    ++evals_;
    if (v < best_) best_ = v;
    trace_.push_back({evals_, best_});
    if (best_ <= target_) throw StopRun{Termination::target};
    return v;
  }

  long evals() const { return evals_; }

 private:
  F& f_;
  long budget_;
  double target_;
  std::vector<TracePoint>& trace_;
  long evals_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace detail

/// Quasi-Newton BFGS with forward-difference gradients and a weak Wolfe line
/// search (directional derivatives are also estimated by a single forward
/// difference along the step). Every objective call counts against the
/// budget; exhausting it mid-gradient truncates and returns.
template <class F, class RngT>
RunRecord bfgs_minimize(F&& objective, const Eigen::VectorXd& x0, const BfgsConfig& cfg,
                        long budget, double target, RngT& rng) {
  const int n = static_cast<int>(x0.size());
  if (budget < n + 1)
    throw std::invalid_argument("bfgs_minimize: budget does not cover one gradient");
  if (!(cfg.wolfe_c1 > 0.0 && cfg.wolfe_c1 < cfg.wolfe_c2 && cfg.wolfe_c2 < 1.0))
    throw std::invalid_argument("bfgs_minimize: need 0 < c1 < c2 < 1");

  RunRecord record;
  record.algorithm = "bfgs";
  record.termination = Termination::budget;
  detail::BfgsEvaluator<std::remove_reference_t<F>> eval(objective, budget, target,
                                                         record.trace);

  const double h = cfg.fd_step;
  auto gradient = [&](const Eigen::VectorXd& x, double fx) {
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd xe = x;
      xe[i] += h;
      g[i] = (eval(xe) - fx) / h;
    }
    return g;
  };

  Eigen::VectorXd x = x0;
  try {
    double fx = eval(x);
    Eigen::VectorXd g = gradient(x, fx);
    Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);

    while (true) {
      Eigen::VectorXd d = -(inv_hessian * g);
      double slope = g.dot(d);
      if (!(slope < 0.0)) {  // not a descent direction, reset the model
        inv_hessian.setIdentity();
        d = -g;
        slope = g.dot(d);
      }

      bool accepted = false;
      double f_trial = fx;
      Eigen::VectorXd x_trial = x;
      if (slope < 0.0) {
        // weak Wolfe line search by bisection; phi'(a) via one forward
        // difference along the step direction
        const double dnorm = d.norm();
        auto dir_deriv = [&](const Eigen::VectorXd& y, double fy) {
          return (eval(y + (h / dnorm) * d) - fy) / h * dnorm;
        };

        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double alpha = 1.0;
        for (int ls = 0; ls < cfg.max_line_steps; ++ls) {
          x_trial = x + alpha * d;
          f_trial = eval(x_trial);
          if (f_trial > fx + cfg.wolfe_c1 * alpha * slope) {
            hi = alpha;
          } else if (dir_deriv(x_trial, f_trial) < cfg.wolfe_c2 * slope) {
            lo = alpha;
          } else {
            accepted = true;
            break;
          }
          alpha = std::isinf(hi) ? 2.0 * alpha : 0.5 * (lo + hi);
        }
      }

      if (!accepted) {  // vanished gradient or failed line search
        if (!cfg.restart_on_failure) throw detail::StopRun{Termination::failure};
        x = rng.uniform_vector(n, -5.0, 5.0);
        fx = eval(x);
        g = gradient(x, fx);
        inv_hessian.setIdentity();
        continue;
      }

      const Eigen::VectorXd g_new = gradient(x_trial, f_trial);
      const Eigen::VectorXd s = x_trial - x;
      const Eigen::VectorXd y = g_new - g;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {  // curvature condition, else skip
        const double rho = 1.0 / sy;
        const Eigen::VectorXd hy = inv_hessian * y;
        const double yhy = y.dot(hy);
        // expanded update keeps the estimate symmetric by construction
        inv_hessian -= rho * (s * hy.transpose() + hy * s.transpose());
        inv_hessian += (rho * rho * yhy + rho) * (s * s.transpose());
      }
      x = x_trial;
      fx = f_trial;
      g = g_new;
    }
  } catch (const detail::StopRun& stop) {
    record.termination = stop.reason;
  }
  return record;
}

}  // namespace klacmes

#endif  // KLACMES_BFGS_HPP
