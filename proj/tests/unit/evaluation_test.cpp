#include <gtest/gtest.h>

#include <cmath>

#include "rboard/error.hpp"
#include "rboard/evaluation.hpp"

namespace rboard {
namespace {

// Runs fn and returns the message of the OutputInvalid it throws.
template <typename Fn>
std::string output_invalid(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutputInvalid) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "expected OutputInvalid";
  return {};
}

const CtrTruth kFourRows{{1, 0, 1, 0}};

TEST(EvaluateCtr, PerfectPredictions) {
  const auto result =
      evaluate_ctr("row_id,score\n0,0.9\n1,0.1\n2,0.9\n3,0.1\n", kFourRows);
  EXPECT_EQ(result.primary_metric, "auc");
  EXPECT_DOUBLE_EQ(result.metrics.at("auc"), 1.0);
  EXPECT_NEAR(result.metrics.at("log_loss"), -std::log(0.9), 1e-12);
}

TEST(EvaluateCtr, JoinsByRowIdNotFileOrder) {
  const auto ordered = evaluate_ctr("row_id,score\n0,0.7\n1,0.2\n2,0.4\n3,0.5\n", kFourRows);
  const auto shuffled = evaluate_ctr("row_id,score\n3,0.5\n1,0.2\n0,0.7\n2,0.4\n", kFourRows);
  EXPECT_EQ(ordered, shuffled);
  EXPECT_DOUBLE_EQ(ordered.metrics.at("auc"), 0.75);
}

TEST(EvaluateCtr, RejectsBadFiles) {
  EXPECT_NE(output_invalid([] {
              evaluate_ctr("row_id,score\n0,0.9\n1,0.1\n3,0.1\n", kFourRows);
            }).find("missing row_id 2"),
            std::string::npos);
  EXPECT_NE(output_invalid([] {
              evaluate_ctr("row_id,score\n0,0.9\n1,0.1\n1,0.2\n2,0.1\n3,0.1\n", kFourRows);
            }).find("duplicate row_id 1"),
            std::string::npos);
  EXPECT_NE(output_invalid([] {
              evaluate_ctr("row_id,score\n0,NaN\n1,0.1\n2,0.9\n3,0.1\n", kFourRows);
            }).find("row_id 0"),
            std::string::npos);
  output_invalid([] { evaluate_ctr("row_id,score\n0,inf\n1,0.1\n2,0.9\n3,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("row_id,score\n0,abc\n1,0.1\n2,0.9\n3,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("row_id,score\n0,1.5\n1,0.1\n2,0.9\n3,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("row_id,score\n0,-0.1\n1,0.1\n2,0.9\n3,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("row_id,score\n0,0.5\n1,0.1\n2,0.9\n9,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("id,score\n0,0.5\n1,0.1\n2,0.9\n3,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("row_id,score\n0,0.5,7\n1,0.1\n2,0.9\n3,0.1\n", kFourRows); });
  output_invalid([] { evaluate_ctr("", kFourRows); });
  output_invalid([] { evaluate_ctr("row_id,score\n\"0,0.5\n", kFourRows); });
}

TEST(ParseTruth, Ctr) {
  const CtrTruth truth = parse_ctr_truth("user,item,click\na,x,1\nb,y,0\n");
  EXPECT_EQ(truth.labels, (std::vector<int>{1, 0}));
  EXPECT_THROW(parse_ctr_truth("user,click\na,2\n"), Error);
  EXPECT_THROW(parse_ctr_truth("user,click\n"), Error);
}

TEST(ParseTruth, TopN) {
  const TopNTruth truth = parse_topn_truth("user_id,item_id,ts\nu1,a,5\nu2,b,6\nu1,c,7\n");
  EXPECT_EQ(truth.relevant.size(), 2u);
  EXPECT_EQ(truth.relevant.at("u1"), (std::vector<std::string>{"a", "c"}));
  EXPECT_THROW(parse_topn_truth("user_id\nu1\n"), Error);
}

const TopNTruth kTwoUsers{{{"u1", {"a"}}, {"u2", {"b"}}}};

TEST(EvaluateTopN, AllAtRankOne) {
  const auto result =
      evaluate_topn("user_id,item_id,rank\nu1,a,1\nu1,z,2\nu2,b,1\n", kTwoUsers);
  EXPECT_EQ(result.primary_metric, "ndcg@10");
  for (const char* name : {"ndcg@10", "recall@10", "hit_rate@10", "mrr"}) {
    EXPECT_DOUBLE_EQ(result.metrics.at(name), 1.0) << name;
  }
}

TEST(EvaluateTopN, AveragesUniformlyOverUsers) {
  const auto result =
      evaluate_topn("user_id,item_id,rank\nu1,a,1\nu2,x,1\nu2,y,2\n", kTwoUsers);
  EXPECT_DOUBLE_EQ(result.metrics.at("ndcg@10"), 0.5);
  EXPECT_DOUBLE_EQ(result.metrics.at("hit_rate@10"), 0.5);
}

TEST(EvaluateTopN, RankOrderNotFileOrder) {
  const auto result =
      evaluate_topn("user_id,item_id,rank\nu1,x,2\nu1,y,3\nu1,a,1\nu2,b,2\nu2,q,1\n", kTwoUsers);
  EXPECT_DOUBLE_EQ(result.metrics.at("mrr"), (1.0 + 0.5) / 2.0);
  EXPECT_NEAR(result.metrics.at("ndcg@10"), (1.0 + 1.0 / std::log2(3.0)) / 2.0, 1e-15);
}

TEST(EvaluateTopN, CustomCutoffs) {
  const std::vector<int> cutoffs{1, 5};
  const auto result = evaluate_topn("user_id,item_id,rank\nu1,x,1\nu1,a,2\nu2,b,1\n", kTwoUsers,
                                    cutoffs);
  EXPECT_EQ(result.primary_metric, "ndcg@1");
  EXPECT_DOUBLE_EQ(result.metrics.at("hit_rate@1"), 0.5);
  EXPECT_DOUBLE_EQ(result.metrics.at("hit_rate@5"), 1.0);
}

TEST(EvaluateTopN, RejectsBadFiles) {
  EXPECT_NE(output_invalid([] {
              evaluate_topn("user_id,item_id,rank\nu1,a,1\nu2,b,1\nu1,c,2\n", kTwoUsers);
            }).find("listed twice"),
            std::string::npos);
  EXPECT_NE(output_invalid([] {
              evaluate_topn("user_id,item_id,rank\nu1,a,1\n", kTwoUsers);
            }).find("missing user 'u2'"),
            std::string::npos);
  EXPECT_NE(output_invalid([] {
              evaluate_topn("user_id,item_id,rank\nu1,a,1\nu1,a,2\nu2,b,1\n", kTwoUsers);
            }).find("more than once"),
            std::string::npos);
  EXPECT_NE(output_invalid([] {
              evaluate_topn("user_id,item_id,rank\nu1,a,1\nu1,c,3\nu2,b,1\n", kTwoUsers);
            }).find("non-contiguous"),
            std::string::npos);
  output_invalid([] { evaluate_topn("user_id,item_id,rank\nu1,a,1\nu1,c,1\nu2,b,1\n", kTwoUsers); });
  output_invalid([] { evaluate_topn("user_id,item_id,rank\nu1,a,0\nu2,b,1\n", kTwoUsers); });
  output_invalid([] { evaluate_topn("user_id,item_id,rank\nu1,a,x\nu2,b,1\n", kTwoUsers); });
  output_invalid([] { evaluate_topn("user_id,item_id,rank\nu3,a,1\nu1,a,1\nu2,b,1\n", kTwoUsers); });
  output_invalid([] { evaluate_topn("user_id,item_id,rank\nu1,,1\nu2,b,1\n", kTwoUsers); });
  output_invalid([] { evaluate_topn("user,item,rank\nu1,a,1\nu2,b,1\n", kTwoUsers); });

  std::string long_list = "user_id,item_id,rank\nu2,b,1\n";
  for (std::size_t i = 1; i <= kMaxRankedItems + 1; ++i) {
    long_list += "u1,i" + std::to_string(i) + "," + std::to_string(i) + "\n";
  }
  output_invalid([&] { evaluate_topn(long_list, kTwoUsers); });
}

TEST(EvaluatePredictions, Dispatch) {
  const auto ctr = evaluate_predictions(TaskType::Ctr, "row_id,score\n0,0.2\n1,0.8\n",
                                        "f,click\nx,0\ny,1\n");
  EXPECT_DOUBLE_EQ(ctr.metrics.at("auc"), 1.0);
  const auto topn = evaluate_predictions(TaskType::TopN, "user_id,item_id,rank\nu,a,1\n",
                                         "user_id,item_id,ts\nu,a,3\n");
  EXPECT_DOUBLE_EQ(topn.metrics.at("ndcg@10"), 1.0);
}

TEST(MetricResultJson, RoundTrip) {
  MetricResult result{"run-1", {{"auc", 0.1 + 0.2}, {"log_loss", 1.0 / 3.0}}, "auc"};
  const MetricResult back = metric_result_from_json(nlohmann::json::parse(to_json(result).dump()));
  EXPECT_EQ(back, result);
  EXPECT_TRUE(higher_is_better("auc"));
  EXPECT_FALSE(higher_is_better("log_loss"));
}

}  // namespace
}  // namespace rboard
