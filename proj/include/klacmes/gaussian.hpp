#ifndef KLACMES_GAUSSIAN_HPP
#define KLACMES_GAUSSIAN_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "klacmes/linalg.hpp"
#include "klacmes/rng.hpp"

namespace klacmes {

/// Thrown when a caller breaks an API contract (stale caches, dimension
/// mismatches). Distinct from numerical failures, which use runtime_error.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Multivariate Gaussian search distribution N(mean, sigma^2 * cov).
/// `cov` is the shape matrix; `sigma` is the global step size. `version` is a
/// monotone stamp bumped on every distribution update; eigen caches record the
/// version they were built from so staleness is detected instead of silently
/// tolerated.
struct GaussianParams {
  Eigen::VectorXd mean;
  double sigma = 1.0;
  Eigen::MatrixXd cov;
  std::uint64_t version = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

struct EigenCache {
  Eigen::MatrixXd basis;         // orthonormal eigenvectors of cov, columns
  Eigen::VectorXd scales;        // sqrt of eigenvalues, ascending
  Eigen::MatrixXd sqrt_cov;      // basis * diag(scales) * basis^T
  Eigen::MatrixXd inv_sqrt_cov;  // basis * diag(1/scales) * basis^T
  std::uint64_t generation_stamp = 0;
};

inline void check_cache(const GaussianParams& dist, const EigenCache& cache) {
  if (cache.generation_stamp != dist.version)
    throw ContractViolation("eigen cache is stale for this distribution");
  if (cache.basis.rows() != dist.dim())
    throw ContractViolation("eigen cache dimension mismatch");
}

/// Decomposes dist.cov. Fails loudly if the stored matrix is asymmetric or
/// not positive definite.
inline EigenCache make_eigen_cache(const GaussianParams& dist) {
  const int n = dist.dim();
  if (dist.cov.rows() != n || dist.cov.cols() != n)
    throw std::invalid_argument("covariance dimension mismatch");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (dist.cov(i, j) != dist.cov(j, i))
        throw ContractViolation("covariance stored asymmetrically");

  SymmetricEigen eig = symmetric_eigen(dist.cov);
  for (int i = 0; i < n; ++i)
    if (!(eig.values[i] > 0.0))
      throw std::runtime_error("covariance not positive definite");

  EigenCache cache;
  cache.basis = std::move(eig.vectors);
  cache.scales = eig.values.cwiseSqrt();
  cache.sqrt_cov = cache.basis * cache.scales.asDiagonal() * cache.basis.transpose();
  cache.inv_sqrt_cov =
      cache.basis * cache.scales.cwiseInverse().asDiagonal() * cache.basis.transpose();
  cache.generation_stamp = dist.version;
  return cache;
}

/// Draws `count` samples from N(mean, sigma^2 cov). Uses the symmetric square
/// root of cov (not B*D), so the map from the underlying standard-normal draws
/// to samples is canonical: it does not depend on eigenvector sign choices.
template <class RngT>
std::vector<Eigen::VectorXd> sample(const GaussianParams& dist, const EigenCache& cache,
                                    int count, RngT& rng) {
  check_cache(dist, cache);
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  const int n = dist.dim();
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd z = rng.normal_vector(n);
    out.emplace_back(dist.mean + dist.sigma * (cache.sqrt_cov * z));
  }
  return out;
}

/// Maps x to the frame where the distribution is standard normal:
/// (sigma^2 cov)^{-1/2} (x - mean).
inline Eigen::VectorXd whiten(const GaussianParams& dist, const EigenCache& cache,
                              const Eigen::VectorXd& x) {
  check_cache(dist, cache);
  if (x.size() != dist.dim()) throw std::invalid_argument("whiten: dimension mismatch");
  if (!(dist.sigma > 0.0)) throw std::invalid_argument("whiten: sigma must be positive");
  return (cache.inv_sqrt_cov * (x - dist.mean)) / dist.sigma;
}

/// KL(q || p) between the full Gaussians N(m, sigma^2 C). The determinant
/// ratio is accumulated as paired differences of log-eigenvalues, never via
/// raw determinants. Values below 1e-14 (including round-off negatives) are
/// reported as exactly 0.
inline double kl_divergence(const GaussianParams& q, const EigenCache& qc,
                            const GaussianParams& p, const EigenCache& pc) {
  check_cache(q, qc);
  check_cache(p, pc);
  const int n = q.dim();
  if (p.dim() != n) throw std::invalid_argument("kl_divergence: dimension mismatch");
  if (!(q.sigma > 0.0) || !(p.sigma > 0.0))
    throw std::runtime_error("kl_divergence: full covariance requires sigma > 0");

  const double s2q = q.sigma * q.sigma;
  const double s2p = p.sigma * p.sigma;

  const double trace_term = (s2q / s2p) * (pc.inv_sqrt_cov * qc.sqrt_cov).squaredNorm();
  const double quad_term =
      (pc.inv_sqrt_cov * (p.mean - q.mean)).squaredNorm() / s2p;
  double log_det_ratio = 2.0 * n * std::log(q.sigma / p.sigma);
  for (int i = 0; i < n; ++i)
    log_det_ratio += 2.0 * (std::log(qc.scales[i]) - std::log(pc.scales[i]));

  double kl = 0.5 * (trace_term + quad_term - n - log_det_ratio);
  if (kl < 1e-14) kl = 0.0;
  return kl;
}

inline double kl_divergence(const GaussianParams& q, const GaussianParams& p) {
  return kl_divergence(q, make_eigen_cache(q), p, make_eigen_cache(p));
}

inline constexpr double kKlErrorConstant = 2.3548200450309493;  // 2 sqrt(2 ln 2)

/// Bound on the drift of the expected ranking error between two sampling
/// distributions: c_k * sqrt(KL), c_k = 2 sqrt(2 ln 2).
inline double kl_error_bound(double kl) {
  if (kl < 0.0) throw std::invalid_argument("kl_error_bound: negative KL");
  return kKlErrorConstant * std::sqrt(kl);
}

}  // namespace klacmes

#endif  // KLACMES_GAUSSIAN_HPP
