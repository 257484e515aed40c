#include "rboard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rboard/error.hpp"

namespace rboard::metrics {
namespace {

void check_k(int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
}

void check_relevant(const ItemSet& relevant) {
  if (relevant.empty()) throw Error(ErrorCode::EmptyRelevant, "relevant set is empty");
}

void check_unique(std::span<const std::string> ranked) {
  std::unordered_set<std::string_view> seen;
  for (const auto& item : ranked) {
    if (!seen.insert(item).second) {
      throw Error(ErrorCode::InvalidArgument, "ranked list repeats item '" + item + "'");
    }
  }
}

std::size_t hits_in_top_k(std::span<const std::string> ranked, const ItemSet& relevant, int k) {
  const auto depth = std::min(ranked.size(), static_cast<std::size_t>(k));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += relevant.contains(ranked[i]);
  return hits;
}

}  // namespace

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorCode::InvalidArgument, "labels and scores differ in length");
  }
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based average ranks of the positives. Doubled ranks keep the
  // tie averages integral until the final division.
  double doubled_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double doubled_average = static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      const int label = labels[order[i]];
      if (label != 0 && label != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0/1");
      if (label == 1) {
        doubled_rank_sum += doubled_average;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::SingleClass, "AUC needs at least one positive and one negative");
  }
  const double p = static_cast<double>(positives);
  const double u_statistic = doubled_rank_sum / 2.0 - p * (p + 1.0) / 2.0;
  return u_statistic / (p * static_cast<double>(negatives));
}

double log_loss(std::span<const int> labels, std::span<const double> probabilities, double eps) {
  if (labels.size() != probabilities.size()) {
    throw Error(ErrorCode::InvalidArgument, "labels and probabilities differ in length");
  }
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "log_loss of an empty set");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(probabilities[i])) {
      throw Error(ErrorCode::InvalidArgument, "probabilities must be finite");
    }
    // 1 - clamp(p) == clamp(1 - p); clamping the complement directly avoids
    // rounding 1 - (1 - eps) away from eps.
    const double likelihood = labels[i] == 1 ? std::clamp(probabilities[i], eps, 1.0 - eps)
                                             : std::clamp(1.0 - probabilities[i], eps, 1.0 - eps);
    total += std::log(likelihood);
  }
  return -total / static_cast<double>(labels.size());
}

double ndcg_at_k(std::span<const std::string> ranked, const ItemSet& relevant, int k) {
  check_k(k);
  check_relevant(relevant);
  check_unique(ranked);
  double dcg = 0.0;
  const auto depth = std::min(ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < depth; ++i) {
    if (relevant.contains(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double ideal = 0.0;
  const auto ideal_depth = std::min(relevant.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ideal_depth; ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

double recall_at_k(std::span<const std::string> ranked, const ItemSet& relevant, int k) {
  check_k(k);
  check_relevant(relevant);
  check_unique(ranked);
  return static_cast<double>(hits_in_top_k(ranked, relevant, k)) /
         static_cast<double>(relevant.size());
}

double hit_rate_at_k(std::span<const std::string> ranked, const ItemSet& relevant, int k) {
  check_k(k);
  return hits_in_top_k(ranked, relevant, k) > 0 ? 1.0 : 0.0;
}

double mrr(std::span<const std::string> ranked, const ItemSet& relevant) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.contains(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

}  // namespace rboard::metrics
