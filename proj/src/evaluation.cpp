#include "rboard/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "rboard/csv.hpp"
#include "rboard/error.hpp"
#include "rboard/metrics.hpp"

namespace rboard {
using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::OutputInvalid, "invalid prediction file: " + message);
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  if (text.empty() || text.front() == '+' || text.front() == '-') return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

csv::Table parse_predictions(std::string_view text, const csv::Row& expected_header) {
  csv::Table table = csv::parse(text, ErrorCode::OutputInvalid);
  if (table.header != expected_header) {
    std::string wanted = csv::format_row(expected_header);
    wanted.pop_back();  // trailing newline
    invalid("header must be '" + wanted + "'");
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != expected_header.size()) {
      invalid("line " + std::to_string(table.lines[r]) + " has " +
              std::to_string(table.rows[r].size()) + " fields");
    }
  }
  return table;
}

std::string metric_name(std::string_view base, int k) {
  return std::string(base) + "@" + std::to_string(k);
}

}  // namespace

json to_json(const MetricResult& result) {
  return {{"run_id", result.run_id},
          {"metrics", result.metrics},
          {"primary_metric", result.primary_metric}};
}

MetricResult metric_result_from_json(const json& j) {
  MetricResult out;
  out.run_id = j.at("run_id").get<std::string>();
  out.metrics = j.at("metrics").get<std::map<std::string, double>>();
  out.primary_metric = j.at("primary_metric").get<std::string>();
  return out;
}

bool higher_is_better(std::string_view metric) noexcept { return metric != "log_loss"; }

CtrTruth parse_ctr_truth(std::string_view csv_text) {
  const csv::Table table = csv::parse(csv_text);
  if (table.header.size() < 1) throw Error(ErrorCode::InvalidArgument, "truth file has no header");
  CtrTruth truth;
  truth.labels.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size() || (row.back() != "0" && row.back() != "1")) {
      throw Error(ErrorCode::InvalidArgument,
                  "truth file line " + std::to_string(table.lines[r]) + ": label must be 0 or 1");
    }
    truth.labels.push_back(row.back() == "1" ? 1 : 0);
  }
  if (truth.labels.empty()) throw Error(ErrorCode::EmptyInput, "truth file has no rows");
  return truth;
}

TopNTruth parse_topn_truth(std::string_view csv_text) {
  const csv::Table table = csv::parse(csv_text);
  if (table.header.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "truth file needs user and item columns");
  }
  TopNTruth truth;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size() || row[0].empty() || row[1].empty()) {
      throw Error(ErrorCode::InvalidArgument,
                  "truth file line " + std::to_string(table.lines[r]) + " is malformed");
    }
    auto& items = truth.relevant[row[0]];
    if (std::find(items.begin(), items.end(), row[1]) == items.end()) items.push_back(row[1]);
  }
  if (truth.relevant.empty()) throw Error(ErrorCode::EmptyInput, "truth file has no rows");
  return truth;
}

MetricResult evaluate_ctr(std::string_view predictions_csv, const CtrTruth& truth) {
  const csv::Table table = parse_predictions(predictions_csv, {"row_id", "score"});
  const std::size_t n = truth.labels.size();
  std::vector<double> scores(n, 0.0);
  std::vector<bool> seen(n, false);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::size_t row_id = 0;
    if (!parse_int(row[0], row_id)) {
      invalid("line " + std::to_string(table.lines[r]) + ": row_id '" + row[0] +
              "' is not a non-negative integer");
    }
    if (row_id >= n) {
      invalid("row_id " + row[0] + " is out of range (test has " + std::to_string(n) + " rows)");
    }
    if (seen[row_id]) invalid("duplicate row_id " + row[0]);
    double score = 0.0;
    if (!parse_double(row[1], score)) {
      invalid("row_id " + row[0] + ": score '" + row[1] + "' is not numeric");
    }
    if (!std::isfinite(score)) invalid("row_id " + row[0] + ": score is not finite");
    if (score < 0.0 || score > 1.0) invalid("row_id " + row[0] + ": score outside [0, 1]");
    seen[row_id] = true;
    scores[row_id] = score;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) invalid("missing row_id " + std::to_string(i));
  }

  MetricResult result;
  result.metrics["auc"] = metrics::auc(truth.labels, scores);
  result.metrics["log_loss"] = metrics::log_loss(truth.labels, scores);
  result.primary_metric = "auc";
  return result;
}

MetricResult evaluate_topn(std::string_view predictions_csv, const TopNTruth& truth,
                           std::span<const int> cutoffs) {
  if (cutoffs.empty()) throw Error(ErrorCode::InvalidArgument, "no cutoffs given");
  const csv::Table table = parse_predictions(predictions_csv, {"user_id", "item_id", "rank"});

  struct Ranked {
    std::vector<std::pair<std::size_t, std::string>> entries;  // (rank, item)
  };
  std::map<std::string, Ranked> lists;
  std::string current_user;
  std::set<std::string> seen_items;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string line = "line " + std::to_string(table.lines[r]);
    const std::string& user = row[0];
    const std::string& item = row[1];
    if (user.empty() || item.empty()) invalid(line + ": empty user_id or item_id");
    if (!truth.relevant.contains(user)) invalid(line + ": user '" + user + "' is not evaluated");
    if (user != current_user) {
      if (lists.contains(user)) {
        invalid("user '" + user + "' listed twice (each user's rows must be contiguous)");
      }
      current_user = user;
      seen_items.clear();
    }
    std::size_t rank = 0;
    if (!parse_int(row[2], rank) || rank == 0) {
      invalid(line + ": rank '" + row[2] + "' is not a positive integer");
    }
    if (!seen_items.insert(item).second) {
      invalid("user '" + user + "' ranks item '" + item + "' more than once");
    }
    auto& entries = lists[user].entries;
    entries.emplace_back(rank, item);
    if (entries.size() > kMaxRankedItems) {
      invalid("user '" + user + "' has more than " + std::to_string(kMaxRankedItems) + " items");
    }
  }

  std::map<std::string, double> sums;
  for (const auto& [user, relevant_items] : truth.relevant) {
    const auto it = lists.find(user);
    if (it == lists.end()) invalid("missing user '" + user + "'");
    auto entries = it->second.entries;
    std::sort(entries.begin(), entries.end());
    std::vector<std::string> ranked;
    ranked.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].first != i + 1) {
        invalid("user '" + user + "' has non-contiguous ranks (expected 1.." +
                std::to_string(entries.size()) + ")");
      }
      ranked.push_back(entries[i].second);
    }
    const metrics::ItemSet relevant(relevant_items.begin(), relevant_items.end());
    for (int k : cutoffs) {
      sums[metric_name("ndcg", k)] += metrics::ndcg_at_k(ranked, relevant, k);
      sums[metric_name("recall", k)] += metrics::recall_at_k(ranked, relevant, k);
      sums[metric_name("hit_rate", k)] += metrics::hit_rate_at_k(ranked, relevant, k);
    }
    sums["mrr"] += metrics::mrr(ranked, relevant);
  }

  MetricResult result;
  const auto users = static_cast<double>(truth.relevant.size());
  for (const auto& [name, sum] : sums) result.metrics[name] = sum / users;
  const bool has_ten = std::find(cutoffs.begin(), cutoffs.end(), 10) != cutoffs.end();
  result.primary_metric = metric_name("ndcg", has_ten ? 10 : cutoffs.front());
  return result;
}

MetricResult evaluate_predictions(TaskType task, std::string_view predictions_csv,
                                  std::string_view truth_csv) {
  if (task == TaskType::Ctr) return evaluate_ctr(predictions_csv, parse_ctr_truth(truth_csv));
  return evaluate_topn(predictions_csv, parse_topn_truth(truth_csv));
}

}  // namespace rboard
