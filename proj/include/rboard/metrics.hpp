#pragma once

#include <span>
#include <string>
#include <unordered_set>

namespace rboard::metrics {

// Rank-sum AUC with average ranks for tied scores, i.e. the probability that a
// random positive outscores a random negative with ties counted one half.
// Throws SingleClass unless both classes are present, InvalidArgument on
// length mismatch or non-binary labels.
double auc(std::span<const int> labels, std::span<const double> scores);

// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
double log_loss(std::span<const int> labels, std::span<const double> probabilities,
                double eps = 1e-15);

using ItemSet = std::unordered_set<std::string>;

// Binary-relevance NDCG with log2 discounts and 1-based positions.
double ndcg_at_k(std::span<const std::string> ranked, const ItemSet& relevant, int k);
double recall_at_k(std::span<const std::string> ranked, const ItemSet& relevant, int k);
double hit_rate_at_k(std::span<const std::string> ranked, const ItemSet& relevant, int k);
// Reciprocal position of the first relevant item; 0 when none is relevant.
double mrr(std::span<const std::string> ranked, const ItemSet& relevant);

}  // namespace rboard::metrics
