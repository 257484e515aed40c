#include "rboard/aggregation.hpp"

#include <algorithm>
#include <numeric>

#include "rboard/error.hpp"

namespace rboard {
using nlohmann::json;

std::map<std::string, int> rank_within_dataset(
    std::span<const std::pair<std::string, double>> results, Direction direction) {
  std::vector<std::pair<std::string, double>> sorted(results.begin(), results.end());
  std::stable_sort(sorted.begin(), sorted.end(), [direction](const auto& a, const auto& b) {
    return direction == Direction::HigherBetter ? a.second > b.second : a.second < b.second;
  });
  std::map<std::string, int> ranks;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const bool ties_previous = i > 0 && sorted[i].second == sorted[i - 1].second;
    const int rank = ties_previous ? ranks.at(sorted[i - 1].first) : static_cast<int>(i) + 1;
    ranks[sorted[i].first] = rank;
  }
  return ranks;
}

double aggregate(std::span<const int> ranks, std::size_t task_dataset_count) {
  if (ranks.empty() || ranks.size() != task_dataset_count) {
    throw Error(ErrorCode::IncompleteRanks,
                "expected " + std::to_string(task_dataset_count) + " ranks, got " +
                    std::to_string(ranks.size()));
  }
  const long sum = std::accumulate(ranks.begin(), ranks.end(), 0L);
  return static_cast<double>(sum) / static_cast<double>(ranks.size());
}

std::vector<LeaderboardEntry> build_leaderboard(std::span<const std::string> task_datasets,
                                                std::span<const SubmissionSnapshot> submissions) {
  std::vector<LeaderboardEntry> entries;
  entries.reserve(submissions.size());
  for (const auto& submission : submissions) {
    LeaderboardEntry entry;
    entry.submission_id = submission.submission_id;
    entry.author = submission.author;
    entry.submitted_at = submission.submitted_at;
    for (const auto& [dataset_id, run] : submission.runs) {
      DatasetStanding standing;
      standing.status = run.status;
      standing.wall_clock_seconds = run.wall_clock_seconds;
      if (run.result) {
        standing.metrics = run.result->metrics;
        standing.primary_metric = run.result->primary_metric;
      }
      entry.total_runtime_seconds += run.wall_clock_seconds;
      entry.per_dataset.emplace(dataset_id, std::move(standing));
    }
    entry.eligible = !task_datasets.empty() &&
                     std::all_of(task_datasets.begin(), task_datasets.end(),
                                 [&](const std::string& dataset_id) {
                                   const auto it = submission.runs.find(dataset_id);
                                   return it != submission.runs.end() &&
                                          it->second.status == "Succeeded" &&
                                          it->second.result.has_value();
                                 });
    entries.push_back(std::move(entry));
  }

  std::map<std::string, long> rank_sums;
  for (const auto& dataset_id : task_datasets) {
    std::vector<std::pair<std::string, double>> values;
    std::string primary;
    for (const auto& entry : entries) {
      if (!entry.eligible) continue;
      const auto& standing = entry.per_dataset.at(dataset_id);
      values.emplace_back(entry.submission_id, standing.metrics.at(standing.primary_metric));
      primary = standing.primary_metric;
    }
    if (values.empty()) continue;
    const auto ranks = rank_within_dataset(
        values, higher_is_better(primary) ? Direction::HigherBetter : Direction::LowerBetter);
    for (auto& entry : entries) {
      if (!entry.eligible) continue;
      const int rank = ranks.at(entry.submission_id);
      entry.per_dataset.at(dataset_id).rank = rank;
      rank_sums[entry.submission_id] += rank;
    }
  }
  for (auto& entry : entries) {
    if (!entry.eligible) continue;
    std::vector<int> ranks;
    for (const auto& dataset_id : task_datasets) ranks.push_back(*entry.per_dataset.at(dataset_id).rank);
    entry.mean_rank = aggregate(ranks, task_datasets.size());
  }

  // Every eligible entry has the same number of ranks, so comparing integer
  // rank sums orders mean ranks without floating-point ties going astray.
  std::sort(entries.begin(), entries.end(), [&](const LeaderboardEntry& a, const LeaderboardEntry& b) {
    if (a.eligible != b.eligible) return a.eligible;
    if (a.eligible) {
      const long sa = rank_sums[a.submission_id];
      const long sb = rank_sums[b.submission_id];
      if (sa != sb) return sa < sb;
      if (a.total_runtime_seconds != b.total_runtime_seconds) {
        return a.total_runtime_seconds < b.total_runtime_seconds;
      }
    }
    if (a.submitted_at != b.submitted_at) return a.submitted_at < b.submitted_at;
    return a.submission_id < b.submission_id;
  });
  return entries;
}

json to_json(const LeaderboardEntry& entry) {
  json per_dataset = json::object();
  for (const auto& [dataset_id, standing] : entry.per_dataset) {
    per_dataset[dataset_id] = {
        {"status", standing.status},
        {"metrics", standing.metrics},
        {"primary_metric", standing.primary_metric.empty() ? json(nullptr)
                                                           : json(standing.primary_metric)},
        {"rank", standing.rank ? json(*standing.rank) : json(nullptr)},
        {"wall_clock_seconds", standing.wall_clock_seconds}};
  }
  return {{"submission_id", entry.submission_id},
          {"author", entry.author},
          {"submitted_at", entry.submitted_at},
          {"eligible", entry.eligible},
          {"mean_rank", entry.mean_rank ? json(*entry.mean_rank) : json(nullptr)},
          {"total_runtime_seconds", entry.total_runtime_seconds},
          {"per_dataset", std::move(per_dataset)}};
}

json leaderboard_to_json(std::span<const LeaderboardEntry> entries) {
  json out = json::array();
  for (const auto& entry : entries) out.push_back(to_json(entry));
  return out;
}

}  // namespace rboard
