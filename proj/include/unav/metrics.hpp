#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unav/runner.hpp"
#include "unav/world.hpp"

namespace unav {

struct EpisodeMetrics {
  double ne = 0.0;                 // geodesic navigation error, meters
  bool sr = false;                 // stopped within the success radius
  bool osr = false;                // ever within the success radius
  double spl = 0.0;                // success-weighted path length
  std::optional<double> ndtw;      // path fidelity, VLN only
  std::optional<bool> acc;         // answer accuracy, EQA only
};

enum class FailureCategory {
  NotAFailure,
  WrongAnswerEQA,
  ReachedMissedStop,
  ApproachedUndershot,
  WanderedLost,
  EarlyStopWrongTarget,
};

const char* to_string(FailureCategory c);

EpisodeMetrics compute_metrics(const EpisodeTrace& trace,
                               const WorldModel& world);

/// Deterministic rule cascade over the final state. `shortest_path` is the
/// true-map geodesic reference length; `eqa_correct` is the exact-match
/// verdict (ignored for non-EQA families).
FailureCategory classify_failure(const EpisodeFinal& final_state,
                                 TaskFamily family, double radius,
                                 double shortest_path, bool eqa_correct);

/// classify_failure applied to a full trace against its world.
FailureCategory classify_trace(const EpisodeTrace& trace,
                               const WorldModel& world);

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across seed means
};

struct FailureShare {
  int count = 0;
  double pct_of_trials = 0.0;
  double pct_of_failures = 0.0;
};

struct SummaryTable {
  int episodes = 0;
  int seeds = 0;
  std::map<std::string, SummaryStat> metrics;  // sr, osr, spl, ne, ndtw, acc
  std::map<std::string, FailureShare> failures;
};

/// Mean and sample standard deviation across per-seed means, plus the
/// failure-category histogram over all episodes.
SummaryTable aggregate(const std::vector<std::vector<EpisodeMetrics>>& by_seed,
                       const std::vector<FailureCategory>& failures);

std::string summary_to_text(const SummaryTable& table);
std::string summary_to_json(const SummaryTable& table);

}  // namespace unav
