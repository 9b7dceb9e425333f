#ifndef KLACMES_SURROGATE_HPP
#define KLACMES_SURROGATE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "klacmes/cmaes.hpp"
#include "klacmes/gaussian.hpp"

namespace klacmes {

/// One true-objective evaluation kept in the archive.
struct EvaluatedSample {
  Eigen::VectorXd point;
  double value = 0.0;
  long eval_index = 0;  // global true-evaluation counter, unique
};

/// Samples selected for one surrogate training, sorted by increasing value
/// (ties break by eval_index), together with the distribution they serve.
struct TrainingSet {
  std::vector<EvaluatedSample> samples;
  GaussianParams source_dist;
};

struct SurrogateHyperParams {
  int q = 0;                            // training-set size
  double kernel_width = 1.0;            // s, in whitened coordinates
  double constraint_cost_base = 1e3;    // box cap for the chain duals
  double cost_growth = 1.05;            // escalation toward the best-ranked pairs
  int solver_iters = 0;                 // total coordinate updates (50*q when derived)
};

struct HyperRanges {
  int q_min = 4;
  int q_max = 80;
  double width_min = 0.5;
  double width_max = 10.0;
  double cost_min = 1.0;
  double cost_max = 1e6;
};

inline HyperRanges default_hyper_ranges(int n) {
  HyperRanges r;
  r.q_min = 4 * n;
  r.q_max = 2 * default_params(n).lambda * 10;
  if (r.q_max < r.q_min) r.q_max = r.q_min;
  return r;
}

inline SurrogateHyperParams default_hyperparams(int n) {
  const HyperRanges r = default_hyper_ranges(n);
  SurrogateHyperParams hp;
  hp.q = r.q_min;
  hp.kernel_width = std::clamp(std::sqrt(2.0 * n), r.width_min, r.width_max);
  hp.solver_iters = 50 * hp.q;
  return hp;
}

/// Picks the q archive points closest to dist.mean in the Mahalanobis metric
/// of the full covariance sigma^2 C. Non-finite objective values are not
/// eligible for training.
inline TrainingSet select_training_set(std::span<const EvaluatedSample> archive,
                                       const GaussianParams& dist, int q) {
  if (q < 2) throw std::invalid_argument("select_training_set: q must be >= 2");
  std::vector<int> eligible;
  eligible.reserve(archive.size());
  for (size_t i = 0; i < archive.size(); ++i)
    if (std::isfinite(archive[i].value)) eligible.push_back(static_cast<int>(i));
  if (static_cast<int>(eligible.size()) < q)
    throw std::runtime_error("select_training_set: archive too small");

  const EigenCache cache = make_eigen_cache(dist);
  std::vector<double> dist2(archive.size(), 0.0);
  for (int i : eligible)
    dist2[i] = whiten(dist, cache, archive[i].point).squaredNorm();

  std::nth_element(eligible.begin(), eligible.begin() + (q - 1), eligible.end(),
                   [&](int a, int b) {
                     if (dist2[a] != dist2[b]) return dist2[a] < dist2[b];
                     return archive[a].eval_index < archive[b].eval_index;
                   });
  eligible.resize(q);

  TrainingSet ts;
  ts.samples.reserve(q);
  for (int i : eligible) ts.samples.push_back(archive[i]);
  std::sort(ts.samples.begin(), ts.samples.end(), [](const auto& a, const auto& b) {
    if (a.value != b.value) return a.value < b.value;
    return a.eval_index < b.eval_index;
  });
  ts.source_dist = dist;
  return ts;
}

/// RBF kernel in the coordinates whitened by the distribution's covariance;
/// invariant under orthogonal transformations applied to points and C alike.
inline double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const GaussianParams& dist, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("kernel: width must be positive");
  const EigenCache cache = make_eigen_cache(dist);
  const double d2 = (whiten(dist, cache, a) - whiten(dist, cache, b)).squaredNorm();
  return std::exp(-d2 / (2.0 * s * s));
}

/// Rank predictor trained from chain constraints. `support` holds the
/// training points already whitened by `frozen_dist`, best rank first; the
/// frozen transform never tracks later optimizer updates.
struct SurrogateModel {
  std::vector<Eigen::VectorXd> support;
  Eigen::VectorXd duals;  // length q-1, one per chain constraint
  GaussianParams frozen_dist;
  EigenCache frozen_cache;
  double width = 1.0;
  double train_misrank = 0.0;
};

// Pairwise ranking loss: 1 when the scores order the pair against the true
// values, 1/2 on a true-value tie or a score tie, 0 otherwise. NaN objective
// values rank worst (as everywhere else).
inline double pair_loss(double value_a, double value_b, double score_a, double score_b) {
  const double fa = std::isnan(value_a) ? std::numeric_limits<double>::infinity() : value_a;
  const double fb = std::isnan(value_b) ? std::numeric_limits<double>::infinity() : value_b;
  if (fa == fb) return 0.5;
  if (score_a == score_b) return 0.5;
  const bool a_better_true = fa < fb;
  const bool a_better_said = score_a > score_b;
  return a_better_true == a_better_said ? 0.0 : 1.0;
}

namespace detail {

inline double chain_score(const Eigen::MatrixXd& k, const Eigen::VectorXd& duals, int col) {
  double s = 0.0;
  for (int j = 0; j < duals.size(); ++j) s += duals[j] * (k(j, col) - k(j + 1, col));
  return s;
}

}  // namespace detail

/// Trains the Ranking-SVM dual restricted to the q-1 chain constraints
/// (x_i better than x_{i+1}) by cyclic coordinate ascent. Each dual is boxed
/// in [0, cost_i] with cost escalating toward the best-ranked pairs.
inline SurrogateModel train(const TrainingSet& ts, const SurrogateHyperParams& hp) {
  const int q = static_cast<int>(ts.samples.size());
  if (q < 2) throw std::invalid_argument("train: need at least two samples");
  if (!(hp.kernel_width > 0.0)) throw std::invalid_argument("train: width must be positive");
  if (hp.constraint_cost_base < 0.0 || !(hp.cost_growth > 0.0))
    throw std::invalid_argument("train: invalid constraint costs");

  SurrogateModel model;
  model.frozen_dist = ts.source_dist;
  model.frozen_cache = make_eigen_cache(model.frozen_dist);
  model.width = hp.kernel_width;
  model.support.reserve(q);
  for (const auto& s : ts.samples)
    model.support.push_back(whiten(model.frozen_dist, model.frozen_cache, s.point));

  Eigen::MatrixXd k(q, q);
  const double inv_two_s2 = 1.0 / (2.0 * hp.kernel_width * hp.kernel_width);
  for (int i = 0; i < q; ++i) {
    k(i, i) = 1.0;
    for (int j = i + 1; j < q; ++j) {
      const double d2 = (model.support[i] - model.support[j]).squaredNorm();
      k(i, j) = k(j, i) = std::exp(-d2 * inv_two_s2);
    }
  }

  const int m = q - 1;  // chain constraints
  Eigen::MatrixXd gram(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      gram(i, j) = k(i, j) - k(i, j + 1) - k(i + 1, j) + k(i + 1, j + 1);

  if (gram.diagonal().maxCoeff() <= 0.0)
    throw std::runtime_error("train: degenerate kernel matrix (all points identical)");

  Eigen::VectorXd cost(m);
  for (int i = 0; i < m; ++i)
    cost[i] = hp.constraint_cost_base * std::pow(hp.cost_growth, m - 1 - i);

  Eigen::VectorXd duals = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd residual = Eigen::VectorXd::Zero(m);  // gram * duals
  for (int it = 0; it < hp.solver_iters; ++it) {
    const int i = it % m;
    if (gram(i, i) <= 0.0) continue;
    const double step = (1.0 - residual[i]) / gram(i, i);
    const double updated = std::clamp(duals[i] + step, 0.0, cost[i]);
    const double delta = updated - duals[i];
    if (delta != 0.0) {
      duals[i] = updated;
      residual += delta * gram.col(i);
    }
  }
  model.duals = std::move(duals);

  double misrank = 0.0;
  std::vector<double> scores(q);
  for (int i = 0; i < q; ++i) scores[i] = detail::chain_score(k, model.duals, i);
  for (int i = 0; i + 1 < q; ++i)
    misrank += pair_loss(ts.samples[i].value, ts.samples[i + 1].value, scores[i], scores[i + 1]);
  model.train_misrank = misrank / m;
  return model;
}

/// Rank score of x under the frozen transform; larger means better rank
/// (smaller objective).
inline double predict(const SurrogateModel& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd w = whiten(model.frozen_dist, model.frozen_cache, x);
  const int q = static_cast<int>(model.support.size());
  const double inv_two_s2 = 1.0 / (2.0 * model.width * model.width);
  double prev_k = std::exp(-(model.support[0] - w).squaredNorm() * inv_two_s2);
  double score = 0.0;
  for (int j = 0; j + 1 < q; ++j) {
    const double next_k = std::exp(-(model.support[j + 1] - w).squaredNorm() * inv_two_s2);
    score += model.duals[j] * (prev_k - next_k);
    prev_k = next_k;
  }
  return score;
}

/// Empirical drift error rate of the model on fresh evaluations: mean of the
/// pairwise loss over all ordered pairs x != x'.
inline double drift_error(const SurrogateModel& model, std::span<const EvaluatedSample> test) {
  const int n = static_cast<int>(test.size());
  if (n < 2) throw std::invalid_argument("drift_error: need at least two test points");
  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i) scores[i] = predict(model, test[i].point);
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      sum += pair_loss(test[i].value, test[j].value, scores[i], scores[j]);
    }
  return sum / (static_cast<double>(n) * (n - 1));
}

}  // namespace klacmes

#endif  // KLACMES_SURROGATE_HPP
