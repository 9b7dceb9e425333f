#ifndef KLACMES_CMAES_HPP
#define KLACMES_CMAES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "klacmes/gaussian.hpp"

namespace klacmes {

/// Strategy constants of the (mu/mu_w, lambda)-CMA-ES.
struct CmaParams {
  int dim = 0;
  int lambda = 0;
  int mu = 0;
  Eigen::VectorXd weights;  // length mu, positive, non-increasing, sums to 1
  double mu_eff = 0.0;
  double c1 = 0.0;
  double cmu = 0.0;
  double cc = 0.0;
  double csigma = 0.0;
  double dsigma = 0.0;
  double chi_n = 0.0;  // E ||N(0, I_n)||
};

/// Standard Hansen-style defaults; lambda = 4 + floor(3 ln n) unless overridden.
inline CmaParams default_params(int n, std::optional<int> lambda_override = {}) {
  if (n < 1) throw std::invalid_argument("default_params: dimension must be >= 1");
  if (lambda_override && *lambda_override < 2)
    throw std::invalid_argument("default_params: lambda must be >= 2");

  CmaParams p;
  p.dim = n;
  p.lambda = lambda_override ? *lambda_override
                             : 4 + static_cast<int>(std::floor(3.0 * std::log(n)));
  p.mu = p.lambda / 2;

  p.weights.resize(p.mu);
  for (int i = 0; i < p.mu; ++i)
    p.weights[i] = std::log(p.mu + 0.5) - std::log(i + 1.0);
  p.weights /= p.weights.sum();
  p.mu_eff = 1.0 / p.weights.squaredNorm();

  const double nn = n;
  p.csigma = (p.mu_eff + 2.0) / (nn + p.mu_eff + 5.0);
  p.dsigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mu_eff - 1.0) / (nn + 1.0)) - 1.0) + p.csigma;
  p.cc = (4.0 + p.mu_eff / nn) / (nn + 4.0 + 2.0 * p.mu_eff / nn);
  p.c1 = 2.0 / ((nn + 1.3) * (nn + 1.3) + p.mu_eff);
  p.cmu = std::min(1.0 - p.c1,
                   2.0 * (p.mu_eff - 2.0 + 1.0 / p.mu_eff) / ((nn + 2.0) * (nn + 2.0) + p.mu_eff));
  p.chi_n = std::sqrt(nn) * (1.0 - 1.0 / (4.0 * nn) + 1.0 / (21.0 * nn * nn));
  return p;
}

/// A sampled population together with its ranking (order[0] is the best
/// point's index into `points`).
struct RankedPopulation {
  std::vector<Eigen::VectorXd> points;
  std::vector<int> order;
};

/// Ranks points by objective value, best (smallest) first. Ties break by
/// evaluation order; non-finite values rank worst and tie with each other.
inline std::vector<int> rank_order(const std::vector<double>& values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int i) {
    const double v = values[i];
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return key(i) < key(j); });
  return order;
}

inline RankedPopulation rank_population(std::vector<Eigen::VectorXd> points,
                                        const std::vector<double>& values) {
  if (points.size() != values.size())
    throw std::invalid_argument("rank_population: size mismatch");
  RankedPopulation pop;
  pop.order = rank_order(values);
  pop.points = std::move(points);
  return pop;
}

struct CmaState {
  GaussianParams dist;
  EigenCache cache;
  Eigen::VectorXd path_c;      // covariance evolution path
  Eigen::VectorXd path_sigma;  // step-size evolution path
  long gen = 0;
  CmaParams params;
  std::vector<Eigen::VectorXd> pending;  // population from the last ask
};

inline CmaState make_cma_state(CmaParams params, Eigen::VectorXd mean, double sigma) {
  if (mean.size() != params.dim) throw std::invalid_argument("make_cma_state: dimension mismatch");
  if (!(sigma > 0.0)) throw std::invalid_argument("make_cma_state: sigma must be positive");
  CmaState s;
  s.dist.mean = std::move(mean);
  s.dist.sigma = sigma;
  s.dist.cov = Eigen::MatrixXd::Identity(params.dim, params.dim);
  s.dist.version = 1;
  s.cache = make_eigen_cache(s.dist);
  s.path_c = Eigen::VectorXd::Zero(params.dim);
  s.path_sigma = Eigen::VectorXd::Zero(params.dim);
  s.params = std::move(params);
  return s;
}

/// Samples lambda candidates and records them for the matching tell.
template <class RngT>
const std::vector<Eigen::VectorXd>& ask(CmaState& state, RngT& rng) {
  state.pending = sample(state.dist, state.cache, state.params.lambda, rng);
  return state.pending;
}

/// One CMA-ES update: weighted recombination of the mu best points, rank-one
/// plus rank-mu covariance update with the usual h_sigma stall guard, and
/// cumulative step-size adaptation against chi_n.
inline CmaState tell(const CmaState& state, const RankedPopulation& pop) {
  const CmaParams& par = state.params;
  const int n = par.dim;

  if (static_cast<int>(pop.points.size()) != par.lambda)
    throw std::invalid_argument("tell: population size does not match lambda");
  if (pop.points.size() != state.pending.size())
    throw std::invalid_argument("tell: population does not match the preceding ask");
  if (pop.order.size() != pop.points.size())
    throw std::invalid_argument("tell: rank permutation size mismatch");
  std::vector<char> seen(pop.order.size(), 0);
  for (int idx : pop.order) {
    if (idx < 0 || idx >= static_cast<int>(pop.order.size()) || seen[idx])
      throw std::invalid_argument("tell: invalid rank permutation");
    seen[idx] = 1;
  }
  for (const auto& x : pop.points)
    if (!x.allFinite()) throw std::invalid_argument("tell: non-finite point");

  check_cache(state.dist, state.cache);
  const Eigen::VectorXd& m_old = state.dist.mean;
  const double sigma = state.dist.sigma;

  Eigen::VectorXd m_new = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < par.mu; ++i) m_new += par.weights[i] * pop.points[pop.order[i]];

  const Eigen::VectorXd y_w = (m_new - m_old) / sigma;

  CmaState next = state;
  next.gen = state.gen + 1;

  next.path_sigma = (1.0 - par.csigma) * state.path_sigma +
                    std::sqrt(par.csigma * (2.0 - par.csigma) * par.mu_eff) *
                        (state.cache.inv_sqrt_cov * y_w);

  const double ps_norm = next.path_sigma.norm();
  const double expected = std::sqrt(1.0 - std::pow(1.0 - par.csigma, 2.0 * next.gen));
  const bool h_sigma = ps_norm / expected < (1.4 + 2.0 / (n + 1.0)) * par.chi_n;

  next.path_c = (1.0 - par.cc) * state.path_c;
  if (h_sigma)
    next.path_c += std::sqrt(par.cc * (2.0 - par.cc) * par.mu_eff) * y_w;

  Eigen::MatrixXd cov = (1.0 - par.c1 - par.cmu) * state.dist.cov;
  cov += par.c1 * (next.path_c * next.path_c.transpose());
  if (!h_sigma) cov += par.c1 * par.cc * (2.0 - par.cc) * state.dist.cov;
  for (int i = 0; i < par.mu; ++i) {
    const Eigen::VectorXd y = (pop.points[pop.order[i]] - m_old) / sigma;
    cov += (par.cmu * par.weights[i]) * (y * y.transpose());
  }
  symmetrize_lower(cov);

  next.dist.mean = m_new;
  next.dist.sigma = sigma * std::exp((par.csigma / par.dsigma) * (ps_norm / par.chi_n - 1.0));
  next.dist.cov = std::move(cov);
  next.dist.version = state.dist.version + 1;
  next.cache = make_eigen_cache(next.dist);
  next.pending.clear();
  return next;
}

/// Stand-in for full restart machinery: signals collapse of the sampling
/// ellipsoid, a blown-up condition number, or a flat best-f history window.
inline bool should_restart(const CmaState& state, std::span<const double> best_history) {
  const double max_scale = state.cache.scales[state.cache.scales.size() - 1];
  const double min_scale = state.cache.scales[0];
  if (state.dist.sigma * max_scale < 1e-12) return true;
  const double cond = (max_scale / min_scale) * (max_scale / min_scale);
  if (cond > 1e14) return true;

  const size_t window = static_cast<size_t>(
      10 + std::ceil(30.0 * state.params.dim / state.params.lambda));
  if (best_history.size() >= window) {
    auto tail = best_history.subspan(best_history.size() - window);
    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    if (*hi - *lo < 1e-12) return true;
  }
  return false;
}

}  // namespace klacmes

#endif  // KLACMES_CMAES_HPP
