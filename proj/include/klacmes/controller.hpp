#ifndef KLACMES_CONTROLLER_HPP
#define KLACMES_CONTROLLER_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "klacmes/cmaes.hpp"
#include "klacmes/run_record.hpp"
#include "klacmes/surrogate.hpp"

namespace klacmes {

/// Which rule decides when a surrogate epoch ends.
enum class Schedule {
  kl,       // optimize the surrogate while KL(current || training) <= KL_thresh
  fixed_n,  // ablation: a fixed number of surrogate generations per epoch
};

struct ControllerConfig {
  double tau_err = 0.45;        // error threshold of the threshold update
  double ln_kl_max = 6.0;       // ln of the largest allowed KL radius
  double boost_threshold = 0.35;  // boost lambda when the relaxed error is below this
  int boost_factor = 100;
  double alpha_s = 0.2;         // smoothing of the relaxed error
  int n_start = 10;             // warm-up generations on the true objective
  std::optional<double> err_init;  // defaults to tau_err (maximally cautious)
  Schedule schedule = Schedule::kl;
  int n_hat_max = 20;           // fixed-n ablation: largest epoch length
};

/// Mutable controller state threaded through the epochs.
struct ControllerState {
  double kl_thresh = 1.0;
  double err_relaxed = 0.45;  // the relaxed surrogate error Err, in [0,1]
  SurrogateHyperParams hyper;
  CmaState tuner;             // 1-iteration-per-epoch CMA-ES over normalized hypers
  long epoch_index = 0;
  int n_hat = 0;              // fixed-n ablation state
  bool tuner_failed = false;  // last tuning step could not score any candidate
};

inline double threshold_for(double err_relaxed, const ControllerConfig& cfg) {
  return std::exp((cfg.tau_err - err_relaxed) / cfg.tau_err * cfg.ln_kl_max);
}

// fixed-n ablation: error near 50% means relearn immediately, near 0% allows
// the longest epoch
inline int n_hat_for(double err, const ControllerConfig& cfg) {
  const double fraction = std::clamp(1.0 - err / 0.5, 0.0, 1.0);
  return static_cast<int>(std::lround(cfg.n_hat_max * fraction));
}

/// Smooths the fresh error estimate into Err and re-derives KL_thresh:
/// ln(KL_thresh) <- ((tau_err - Err)/tau_err) ln(KL_max). No lower clamp:
/// Err above tau_err yields a threshold below 1 and the next epoch ends
/// almost immediately, forcing a relearn.
inline ControllerState update_threshold(ControllerState state, double err_hat,
                                        const ControllerConfig& cfg) {
  if (!(err_hat >= 0.0 && err_hat <= 1.0))
    throw std::invalid_argument("update_threshold: error estimate outside [0,1]");
  state.err_relaxed = (1.0 - cfg.alpha_s) * state.err_relaxed + cfg.alpha_s * err_hat;
  state.kl_thresh = threshold_for(state.err_relaxed, cfg);
  return state;
}

/// The epoch exit test: has the working distribution drifted out of the
/// KL trust region around the surrogate's training distribution?
inline bool epoch_should_end(const GaussianParams& train_dist,
                             const GaussianParams& current_dist, double kl_thresh) {
  return kl_divergence(current_dist, train_dist) > kl_thresh;
}

/// Population size used on the surrogate: boosted by cfg.boost_factor when
/// the relaxed error is strictly below the boost threshold. True-objective
/// generations always run at the base lambda.
inline int effective_lambda(double err_relaxed, int base_lambda, const ControllerConfig& cfg) {
  if (base_lambda < 2) throw std::invalid_argument("effective_lambda: base lambda must be >= 2");
  return err_relaxed < cfg.boost_threshold ? base_lambda * cfg.boost_factor : base_lambda;
}

namespace detail {

struct HyperCodec {
  HyperRanges ranges;

  Eigen::VectorXd encode(const SurrogateHyperParams& hp) const {
    Eigen::VectorXd u(3);
    u[0] = ranges.q_max == ranges.q_min
               ? 0.5
               : double(hp.q - ranges.q_min) / double(ranges.q_max - ranges.q_min);
    u[1] = std::log(hp.kernel_width / ranges.width_min) /
           std::log(ranges.width_max / ranges.width_min);
    u[2] = std::log(hp.constraint_cost_base / ranges.cost_min) /
           std::log(ranges.cost_max / ranges.cost_min);
    for (int i = 0; i < 3; ++i) u[i] = std::clamp(u[i], 0.0, 1.0);
    return u;
  }

  SurrogateHyperParams decode(Eigen::VectorXd u) const {
    for (int i = 0; i < 3; ++i) u[i] = std::clamp(u[i], 0.0, 1.0);
    SurrogateHyperParams hp;
    hp.q = ranges.q_min +
           static_cast<int>(std::lround(u[0] * double(ranges.q_max - ranges.q_min)));
    hp.kernel_width =
        ranges.width_min * std::pow(ranges.width_max / ranges.width_min, u[1]);
    hp.constraint_cost_base =
        ranges.cost_min * std::pow(ranges.cost_max / ranges.cost_min, u[2]);
    hp.solver_iters = 50 * hp.q;
    return hp;
  }
};

}  // namespace detail

inline ControllerState make_controller(const ControllerConfig& cfg, int dim) {
  ControllerState state;
  state.err_relaxed = std::clamp(cfg.err_init.value_or(cfg.tau_err), 0.0, 1.0);
  state.kl_thresh = threshold_for(state.err_relaxed, cfg);
  state.hyper = default_hyperparams(dim);
  state.n_hat = n_hat_for(state.err_relaxed, cfg);
  const detail::HyperCodec codec{default_hyper_ranges(dim)};
  state.tuner = make_cma_state(default_params(3), codec.encode(state.hyper), 0.2);
  return state;
}

/// One ask/tell of the hyper-parameter tuner. Each candidate is scored by
/// training a surrogate from prev_set with the candidate hyper-parameters and
/// measuring its drift error on the fresh true evaluations; afterwards the
/// working hyper-parameter vector is the tuner's post-update mean. Consumes
/// no true objective evaluations. If no candidate can be scored, the tuner
/// and the working hypers stay untouched and the failure is flagged.
template <class RngT>
ControllerState tune_hyperparams(ControllerState state, const TrainingSet& prev_set,
                                 std::span<const EvaluatedSample> fresh, const HyperRanges& ranges,
                                 RngT& rng) {
  if (state.tuner.dist.sigma == 0.0) return state;  // degenerate tuner, nothing to learn
  const detail::HyperCodec codec{ranges};
  auto candidates = ask(state.tuner, rng);
  std::vector<double> scores(candidates.size());
  int usable = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    SurrogateHyperParams hp = codec.decode(candidates[i]);
    try {
      const int q = std::min<int>(hp.q, static_cast<int>(prev_set.samples.size()));
      TrainingSet subset =
          select_training_set(prev_set.samples, prev_set.source_dist, q);
      scores[i] = drift_error(train(subset, hp), fresh);
      ++usable;
    } catch (const std::exception&) {
      scores[i] = std::numeric_limits<double>::infinity();
    }
  }
  if (usable == 0) {
    state.tuner.pending.clear();
    state.tuner_failed = true;
    return state;
  }
  state.tuner = tell(state.tuner, rank_population(candidates, scores));
  state.hyper = codec.decode(state.tuner.dist.mean);
  state.tuner_failed = false;
  return state;
}

namespace detail {

struct SurrogatePhaseResult {
  int generations = 0;
  double kl_at_exit = 0.0;
  std::vector<double> kl_trace;  // KL(current || frozen) after each tell
};

// Optimizes the surrogate in place of the true objective until the KL trust
// region is exhausted (or for a fixed generation count in the ablation). The
// KL test runs once per generation, after tell; the cap is a safety valve
// against a stalled distribution.
template <class RngT>
SurrogatePhaseResult run_surrogate_phase(CmaState& state, const SurrogateModel& model,
                                         const ControllerConfig& cfg, double kl_thresh,
                                         int n_hat, RngT& rng) {
  constexpr int kGenCap = 10000;
  SurrogatePhaseResult result;
  const EigenCache& frozen_cache = model.frozen_cache;
  while (true) {
    if (cfg.schedule == Schedule::fixed_n && result.generations >= n_hat) break;
    if (result.generations >= kGenCap) break;

    const auto& points = ask(state, rng);
    std::vector<double> neg_scores(points.size());
    for (size_t i = 0; i < points.size(); ++i) neg_scores[i] = -predict(model, points[i]);
    state = tell(state, rank_population(points, neg_scores));
    ++result.generations;

    const double kl =
        kl_divergence(state.dist, state.cache, model.frozen_dist, frozen_cache);
    result.kl_trace.push_back(kl);
    result.kl_at_exit = kl;
    if (cfg.schedule == Schedule::kl && kl > kl_thresh) break;
  }
  return result;
}

}  // namespace detail

/// Surrogate-assisted CMA-ES run. Warm-up fills the archive from the true
/// objective; afterwards each epoch trains a surrogate at the current
/// distribution, optimizes it inside the KL trust region, spends one true
/// generation to measure the drift error, adapts KL_thresh, and tunes the
/// surrogate hyper-parameters. Restarts double the population and keep both
/// the archive and the controller state. Only true evaluations touch the
/// budget or the trace.
template <class F, class RngT>
RunRecord run_surrogate_cmaes(F&& objective, int dim, const ControllerConfig& cfg, long budget,
                              double target, RngT& rng,
                              std::optional<int> lambda_override = {}) {
  CmaParams base_params = default_params(dim, lambda_override);
  if (cfg.n_start < 1) throw std::invalid_argument("run: n_start must be >= 1");
  if (budget < static_cast<long>(base_params.lambda) * cfg.n_start)
    throw std::invalid_argument("run: budget smaller than the warm-up phase");

  RunRecord record;
  record.termination = Termination::budget;

  std::vector<EvaluatedSample> archive;
  long evals = 0;
  double best = std::numeric_limits<double>::infinity();
  auto eval_true = [&](const Eigen::VectorXd& x) {
    const double v = objective(x);
    ++evals;
    if (v < best) best = v;
    record.trace.push_back({evals, best});
    archive.push_back({x, v, evals});
    return v;
  };

  CmaState state =
      make_cma_state(base_params, rng.uniform_vector(dim, -5.0, 5.0), 2.0);
  std::vector<double> history;  // best-f per true generation, cleared on restart

  // true generation at the base lambda; returns the fresh samples, or an
  // empty vector when the budget ran dry mid-generation
  auto true_generation = [&]() -> std::vector<EvaluatedSample> {
    const auto& points = ask(state, rng);
    std::vector<double> values(points.size());
    std::vector<EvaluatedSample> fresh;
    fresh.reserve(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
      if (evals >= budget || best <= target) return {};
      values[i] = eval_true(points[i]);
      fresh.push_back(archive.back());
    }
    state = tell(state, rank_population(points, values));
    history.push_back(best);
    return fresh;
  };

  for (int gen = 0; gen < cfg.n_start; ++gen) {
    if (true_generation().empty()) {
      record.termination = best <= target ? Termination::target : Termination::budget;
      return record;
    }
    if (best <= target) {
      record.termination = Termination::target;
      return record;
    }
  }

  ControllerState controller = make_controller(cfg, dim);
  const HyperRanges ranges = default_hyper_ranges(dim);

  while (best > target && evals < budget) {
    const int archive_usable =
        static_cast<int>(std::count_if(archive.begin(), archive.end(), [](const auto& s) {
          return std::isfinite(s.value);
        }));
    const int q_eff = std::min(controller.hyper.q, archive_usable);

    std::optional<TrainingSet> ts;
    std::optional<SurrogateModel> model;
    if (q_eff >= 2) {
      try {
        SurrogateHyperParams hp = controller.hyper;
        hp.q = q_eff;
        ts = select_training_set(archive, state.dist, q_eff);
        model = train(*ts, hp);
      } catch (const std::exception&) {
        ts.reset();
        model.reset();  // fall back to a plain true generation this epoch
      }
    }

    EpochReport report;
    report.true_evals_used = -evals;
    if (model) {
      const int boosted = effective_lambda(controller.err_relaxed, base_params.lambda, cfg);
      if (boosted != base_params.lambda) state.params = default_params(dim, boosted);
      auto phase = detail::run_surrogate_phase(state, *model, cfg, controller.kl_thresh,
                                               controller.n_hat, rng);
      state.params = base_params;
      report.surrogate_generations = phase.generations;
      report.kl_at_exit = phase.kl_at_exit;
    }

    const std::vector<EvaluatedSample> fresh = true_generation();
    report.true_evals_used += evals;
    report.best_f = best;
    if (fresh.empty()) {
      record.termination = best <= target ? Termination::target : Termination::budget;
      record.epochs.push_back(report);
      break;
    }

    if (model) {
      const double err_hat = drift_error(*model, fresh);
      report.drift_err = err_hat;
      controller = update_threshold(std::move(controller), err_hat, cfg);
      controller.n_hat = n_hat_for(err_hat, cfg);
      controller = tune_hyperparams(std::move(controller), *ts, fresh, ranges, rng);
      report.tuner_failed = controller.tuner_failed;
    }
    controller.epoch_index++;
    record.epochs.push_back(report);

    if (best <= target) {
      record.termination = Termination::target;
      break;
    }
    if (evals >= budget) {
      record.termination = Termination::budget;
      break;
    }

    if (should_restart(state, history)) {
      base_params = default_params(dim, base_params.lambda * 2);
      state = make_cma_state(base_params, rng.uniform_vector(dim, -5.0, 5.0), 2.0);
      history.clear();
    }
  }
  if (best <= target) record.termination = Termination::target;
  return record;
}

/// Plain CMA-ES with increasing-population restarts, same record format.
template <class F, class RngT>
RunRecord run_cmaes(F&& objective, int dim, long budget, double target, RngT& rng,
                    std::optional<int> lambda_override = {}) {
  RunRecord record;
  record.termination = Termination::budget;
  long evals = 0;
  double best = std::numeric_limits<double>::infinity();

  CmaParams params = default_params(dim, lambda_override);
  CmaState state = make_cma_state(params, rng.uniform_vector(dim, -5.0, 5.0), 2.0);
  std::vector<double> history;

  while (evals < budget && best > target) {
    const auto& points = ask(state, rng);
    std::vector<double> values(points.size());
    bool truncated = false;
    for (size_t i = 0; i < points.size(); ++i) {
      if (evals >= budget || best <= target) {
        truncated = true;
        break;
      }
      const double v = objective(points[i]);
      ++evals;
      if (v < best) best = v;
      record.trace.push_back({evals, best});
      values[i] = v;
    }
    if (truncated) break;
    state = tell(state, rank_population(points, values));
    history.push_back(best);
    if (should_restart(state, history)) {
      params = default_params(dim, params.lambda * 2);
      state = make_cma_state(params, rng.uniform_vector(dim, -5.0, 5.0), 2.0);
      history.clear();
    }
  }
  if (best <= target) record.termination = Termination::target;
  return record;
}

}  // namespace klacmes

#endif  // KLACMES_CONTROLLER_HPP
