#include "unav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace unav {

const char* to_string(FailureCategory c) {
  switch (c) {
    case FailureCategory::NotAFailure: return "NotAFailure";
    case FailureCategory::WrongAnswerEQA: return "WrongAnswerEQA";
    case FailureCategory::ReachedMissedStop: return "ReachedMissedStop";
    case FailureCategory::ApproachedUndershot: return "ApproachedUndershot";
    case FailureCategory::WanderedLost: return "WanderedLost";
    case FailureCategory::EarlyStopWrongTarget: return "EarlyStopWrongTarget";
  }
  return "NotAFailure";
}

namespace {

bool iequals(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

double euclid_xy(const Pose& p, const Point3& q) {
  return std::hypot(p.x - q.x, p.y - q.y);
}

// Classic dynamic-time-warping cost between the executed pose sequence and
// the reference point sequence under the planar Euclidean metric.
double dtw_cost(const std::vector<Pose>& path,
                const std::vector<Point3>& reference) {
  const std::size_t n = path.size(), m = reference.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double c = euclid_xy(path[i - 1], reference[j - 1]);
      cur[j] = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

EpisodeMetrics compute_metrics(const EpisodeTrace& trace,
                               const WorldModel& world) {
  const TaskSpec& task = world.task;
  EpisodeMetrics m;
  m.ne = trace.final.distance_to_goal;
  m.sr = trace.final.stopped && m.ne <= task.success_radius;
  m.osr = trace.final.oracle_success || m.sr;
  const double shortest = shortest_path_length(world);
  const double p = trace.final.path_length;
  m.spl = m.sr ? shortest / std::max(p, shortest) : 0.0;
  if (task.family == TaskFamily::VLN) {
    if (task.ordered_subgoal_positions.empty()) {
      throw Error(ErrorCode::MissingReference,
                  "VLN trace without a reference path");
    }
    const double cost = dtw_cost(trace.poses, task.ordered_subgoal_positions);
    m.ndtw = std::exp(-cost / (task.ordered_subgoal_positions.size() *
                               task.success_radius));
  }
  if (task.family == TaskFamily::EQA) {
    m.acc = iequals(trace.final.eqa_answer, task.eqa_answer);
  }
  return m;
}

FailureCategory classify_failure(const EpisodeFinal& final_state,
                                 TaskFamily family, double radius,
                                 double shortest_path, bool eqa_correct) {
  const bool success = final_state.success &&
                       (family != TaskFamily::EQA || eqa_correct);
  if (success) return FailureCategory::NotAFailure;
  const double ne = final_state.distance_to_goal;
  if (family == TaskFamily::EQA && final_state.oracle_success && !eqa_correct) {
    return FailureCategory::WrongAnswerEQA;
  }
  if (final_state.oracle_success && !final_state.success) {
    return FailureCategory::ReachedMissedStop;
  }
  if (ne > radius && ne <= radius + 2.0) {
    return FailureCategory::ApproachedUndershot;
  }
  if (std::isfinite(shortest_path) && shortest_path > 0.0 &&
      final_state.path_length > 2.5 * shortest_path) {
    return FailureCategory::WanderedLost;
  }
  return FailureCategory::EarlyStopWrongTarget;
}

FailureCategory classify_trace(const EpisodeTrace& trace,
                               const WorldModel& world) {
  const TaskSpec& task = world.task;
  const bool eqa_correct =
      task.family != TaskFamily::EQA ||
      iequals(trace.final.eqa_answer, task.eqa_answer);
  return classify_failure(trace.final, task.family, task.success_radius,
                          shortest_path_length(world), eqa_correct);
}

SummaryTable aggregate(const std::vector<std::vector<EpisodeMetrics>>& by_seed,
                       const std::vector<FailureCategory>& failures) {
  if (by_seed.empty()) {
    throw Error(ErrorCode::NoData, "no seed groups to aggregate");
  }
  SummaryTable table;
  table.seeds = static_cast<int>(by_seed.size());

  struct Acc {
    std::vector<double> seed_means;
  };
  std::map<std::string, Acc> accs;
  for (const std::vector<EpisodeMetrics>& group : by_seed) {
    table.episodes += static_cast<int>(group.size());
    if (group.empty()) continue;
    double sr = 0, osr = 0, spl = 0, ne = 0, ndtw = 0, acc = 0;
    int n_ndtw = 0, n_acc = 0;
    for (const EpisodeMetrics& m : group) {
      sr += m.sr ? 1.0 : 0.0;
      osr += m.osr ? 1.0 : 0.0;
      spl += m.spl;
      ne += m.ne;
      if (m.ndtw) {
        ndtw += *m.ndtw;
        ++n_ndtw;
      }
      if (m.acc) {
        acc += *m.acc ? 1.0 : 0.0;
        ++n_acc;
      }
    }
    const double n = static_cast<double>(group.size());
    accs["sr"].seed_means.push_back(sr / n);
    accs["osr"].seed_means.push_back(osr / n);
    accs["spl"].seed_means.push_back(spl / n);
    accs["ne"].seed_means.push_back(ne / n);
    if (n_ndtw > 0) accs["ndtw"].seed_means.push_back(ndtw / n_ndtw);
    if (n_acc > 0) accs["acc"].seed_means.push_back(acc / n_acc);
  }
  for (const auto& [name, acc] : accs) {
    SummaryStat stat;
    const double n = static_cast<double>(acc.seed_means.size());
    for (double v : acc.seed_means) stat.mean += v;
    stat.mean /= n;
    if (acc.seed_means.size() > 1) {
      double ss = 0.0;
      for (double v : acc.seed_means) ss += (v - stat.mean) * (v - stat.mean);
      stat.stddev = std::sqrt(ss / (n - 1.0));
    }
    table.metrics[name] = stat;
  }

  int n_failures = 0;
  for (FailureCategory c : failures) {
    if (c != FailureCategory::NotAFailure) ++n_failures;
  }
  for (FailureCategory c : failures) {
    FailureShare& share = table.failures[to_string(c)];
    ++share.count;
  }
  const int trials = static_cast<int>(failures.size());
  for (auto& [name, share] : table.failures) {
    if (trials > 0) share.pct_of_trials = 100.0 * share.count / trials;
    if (n_failures > 0 && name != "NotAFailure") {
      share.pct_of_failures = 100.0 * share.count / n_failures;
    }
  }
  return table;
}

std::string summary_to_text(const SummaryTable& table) {
  std::ostringstream os;
  os << "episodes: " << table.episodes << "  seeds: " << table.seeds << "\n";
  os << "metric      mean      std\n";
  for (const auto& [name, stat] : table.metrics) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-8s %8.4f %8.4f\n", name.c_str(),
                  stat.mean, stat.stddev);
    os << line;
  }
  if (!table.failures.empty()) {
    os << "failure category        count  %trials  %failures\n";
    for (const auto& [name, share] : table.failures) {
      char line[120];
      std::snprintf(line, sizeof(line), "%-22s %6d %8.1f %10.1f\n",
                    name.c_str(), share.count, share.pct_of_trials,
                    share.pct_of_failures);
      os << line;
    }
  }
  return os.str();
}

std::string summary_to_json(const SummaryTable& table) {
  nlohmann::ordered_json j;
  j["episodes"] = table.episodes;
  j["seeds"] = table.seeds;
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [name, stat] : table.metrics) {
    j["metrics"][name] = {{"mean", stat.mean}, {"std", stat.stddev}};
  }
  j["failures"] = nlohmann::ordered_json::object();
  for (const auto& [name, share] : table.failures) {
    j["failures"][name] = {{"count", share.count},
                           {"pct_of_trials", share.pct_of_trials},
                           {"pct_of_failures", share.pct_of_failures}};
  }
  return j.dump(2);
}

}  // namespace unav
