#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rboard/evaluation.hpp"

namespace rboard {

enum class Direction { HigherBetter, LowerBetter };

// Competition ranking ("1,2,2,4"): a submission's rank is one plus the number
// of submissions with a strictly better value.
std::map<std::string, int> rank_within_dataset(
    std::span<const std::pair<std::string, double>> results, Direction direction);

// Arithmetic mean of per-dataset ranks. Throws IncompleteRanks unless there
// is exactly one rank per task dataset.
double aggregate(std::span<const int> ranks, std::size_t task_dataset_count);

// One run of a submission as seen by the leaderboard.
struct RunOutcome {
  std::string status;  // RunStatus name
  double wall_clock_seconds = 0.0;
  std::optional<MetricResult> result;  // present when the run succeeded
};

struct SubmissionSnapshot {
  std::string submission_id;
  std::string author;
  std::string submitted_at;
  std::map<std::string, RunOutcome> runs;  // by dataset_id
};

struct DatasetStanding {
  std::string status;
  std::map<std::string, double> metrics;
  std::string primary_metric;
  std::optional<int> rank;
  double wall_clock_seconds = 0.0;
};

struct LeaderboardEntry {
  std::string submission_id;
  std::string author;
  std::string submitted_at;
  std::map<std::string, DatasetStanding> per_dataset;
  std::optional<double> mean_rank;  // eligible entries only
  double total_runtime_seconds = 0.0;
  bool eligible = false;
};

// Eligible entries (a succeeded run on every task dataset) first, by mean
// rank, then total runtime, then submission time; ineligible entries follow
// by submission time and carry no ranks. Pure and deterministic.
std::vector<LeaderboardEntry> build_leaderboard(std::span<const std::string> task_datasets,
                                                std::span<const SubmissionSnapshot> submissions);

nlohmann::json to_json(const LeaderboardEntry& entry);
nlohmann::json leaderboard_to_json(std::span<const LeaderboardEntry> entries);

}  // namespace rboard
