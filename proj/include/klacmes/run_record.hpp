#ifndef KLACMES_RUN_RECORD_HPP
#define KLACMES_RUN_RECORD_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "klacmes/benchmarks.hpp"

namespace klacmes {

enum class Termination { target, budget, failure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::target: return "target";
    case Termination::budget: return "budget";
    case Termination::failure: return "failure";
  }
  return "unknown";
}

struct TracePoint {
  long eval_index = 0;   // 1-based true-evaluation counter
  double best_f = 0.0;   // running best, non-increasing
};

/// Per-epoch diagnostics of the surrogate controller.
struct EpochReport {
  int surrogate_generations = 0;
  double kl_at_exit = 0.0;
  double drift_err = 0.0;
  long true_evals_used = 0;
  double best_f = 0.0;
  bool tuner_failed = false;
};

/// One optimization run on a true-evaluation budget. The trace logs every
/// true evaluation with the running best; surrogate evaluations never appear.
struct RunRecord {
  std::string algorithm;
  BenchmarkSpec spec;
  std::uint64_t seed = 0;
  std::vector<TracePoint> trace;
  Termination termination = Termination::budget;
  std::vector<EpochReport> epochs;

  long true_evaluations() const { return static_cast<long>(trace.size()); }

  double best() const {
    return trace.empty() ? std::numeric_limits<double>::infinity() : trace.back().best_f;
  }

  /// First true-evaluation index whose running best reaches `target`.
  std::optional<long> hit(double target) const {
    auto it = std::lower_bound(trace.begin(), trace.end(), target,
                               [](const TracePoint& p, double t) { return p.best_f > t; });
    if (it == trace.end()) return std::nullopt;
    return it->eval_index;
  }
};

/// Lower median of evaluations-to-target across runs; runs that never hit
/// count as infinity.
inline double median_evals_to_target(const std::vector<RunRecord>& records, double target) {
  std::vector<double> counts;
  counts.reserve(records.size());
  for (const auto& r : records) {
    auto h = r.hit(target);
    counts.push_back(h ? static_cast<double>(*h) : std::numeric_limits<double>::infinity());
  }
  if (counts.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(counts.begin(), counts.end());
  return counts[(counts.size() - 1) / 2];
}

}  // namespace klacmes

#endif  // KLACMES_RUN_RECORD_HPP
