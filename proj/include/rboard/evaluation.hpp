#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rboard/util.hpp"

namespace rboard {

inline constexpr std::size_t kMaxRankedItems = 50;
inline constexpr std::array<int, 1> kDefaultCutoffs{10};

struct MetricResult {
  std::string run_id;
  std::map<std::string, double> metrics;
  std::string primary_metric;

  double primary_value() const { return metrics.at(primary_metric); }
  bool operator==(const MetricResult&) const = default;
};

nlohmann::json to_json(const MetricResult& result);
MetricResult metric_result_from_json(const nlohmann::json& json);

// Whether larger values of a metric are better (log_loss is the exception).
bool higher_is_better(std::string_view metric) noexcept;

// Ground truth in the layout preprocessing writes: for CTR the label is the
// last column and row_id is the row position; for TopN the first two columns
// are user and item, and a user may have several relevant items.
struct CtrTruth {
  std::vector<int> labels;
};

struct TopNTruth {
  std::map<std::string, std::vector<std::string>> relevant;
};

CtrTruth parse_ctr_truth(std::string_view csv_text);
TopNTruth parse_topn_truth(std::string_view csv_text);

// Prediction file `row_id,score`, one row per test row. Errors are
// Error(OutputInvalid) and name the offending row_id.
MetricResult evaluate_ctr(std::string_view predictions_csv, const CtrTruth& truth);

// Prediction file `user_id,item_id,rank`. Each user's rows are grouped,
// ranks run 1..len without gaps, len <= kMaxRankedItems, and every
// evaluated user appears exactly once. Metrics are averaged uniformly over
// evaluated users.
MetricResult evaluate_topn(std::string_view predictions_csv, const TopNTruth& truth,
                           std::span<const int> cutoffs = kDefaultCutoffs);

MetricResult evaluate_predictions(TaskType task, std::string_view predictions_csv,
                                  std::string_view truth_csv);

}  // namespace rboard
