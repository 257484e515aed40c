#include <gtest/gtest.h>

#include <cstdlib>
#include <functional>
#include <set>

#include "rboard/csv.hpp"
#include "rboard/error.hpp"
#include "rboard/fsutil.hpp"
#include "rboard/platform.hpp"
#include "rboard/sha256.hpp"
#include "rboard/zip.hpp"
#include "support.hpp"

namespace rboard {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using test_support::stub_archive;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an rboard::Error";
  return ErrorCode::Io;
}

std::vector<std::string> leaderboard_ids(const std::vector<LeaderboardEntry>& board) {
  std::vector<std::string> ids;
  for (const auto& e : board) ids.push_back(e.submission_id);
  return ids;
}

class PlatformTest : public ::testing::Test {
 protected:
  void SetUp() override { open(); }

  void open() {
    platform_.reset();
    platform_ = std::make_unique<Platform>(test_support::test_config(root_.path() / "root"));
  }

  void add_datasets() {
    test_support::register_synthetic(*platform_, "ctr-a", test_support::synthetic_ctr(1, 800));
    test_support::register_synthetic(*platform_, "ctr-b", test_support::synthetic_ctr(2, 800));
    test_support::register_synthetic(*platform_, "topn-a",
                                     test_support::synthetic_topn(3, 80, 100));
  }

  TempDir root_{"platform-"};
  std::unique_ptr<Platform> platform_;
};

TEST_F(PlatformTest, SubmitWithoutDatasetsStoresNothing) {
  EXPECT_EQ(code_of([&] { platform_->submit(stub_archive("popularity"), TaskType::Ctr, "a"); }),
            ErrorCode::NoDatasetsForTask);
  EXPECT_TRUE(platform_->list_submissions(std::nullopt).empty());
  EXPECT_TRUE(fs::is_empty(platform_->layout().archives_root()));
}

TEST_F(PlatformTest, EndToEndLeaderboard) {
  add_datasets();
  platform_->start();
  const Submission random =
      platform_->submit(stub_archive("random_scorer"), TaskType::Ctr, "alice");
  const Submission popular = platform_->submit(stub_archive("popularity"), TaskType::Ctr, "bob");
  const Submission broken = platform_->submit(stub_archive("exit3"), TaskType::Ctr, "carol");
  const Submission topn = platform_->submit(stub_archive("popularity"), TaskType::TopN, "bob");
  EXPECT_EQ(random.run_ids.size(), 2u);
  EXPECT_EQ(topn.run_ids.size(), 1u);
  platform_->wait_idle();

  const json detail = platform_->submission_detail(popular.submission_id);
  EXPECT_EQ(detail.at("status"), "Completed");
  EXPECT_EQ(detail.at("author"), "bob");
  ASSERT_EQ(detail.at("runs").size(), 2u);
  for (const auto& run : detail.at("runs")) {
    EXPECT_EQ(run.at("status"), "Succeeded");
    EXPECT_EQ(run.at("primary_metric"), "auc");
    EXPECT_GT(run.at("metrics").at("auc").get<double>(), 0.6);
  }
  EXPECT_EQ(platform_->submission_detail(broken.submission_id).at("status"), "Failed");
  EXPECT_TRUE(platform_->submission_detail(broken.submission_id)["runs"][0]["metrics"].is_null());

  const auto board = platform_->leaderboard(TaskType::Ctr);
  EXPECT_EQ(leaderboard_ids(board),
            (std::vector<std::string>{popular.submission_id, random.submission_id,
                                      broken.submission_id}));
  EXPECT_EQ(*board[0].mean_rank, 1.0);
  EXPECT_EQ(*board[1].mean_rank, 2.0);
  EXPECT_FALSE(board[2].eligible);

  const auto topn_board = platform_->leaderboard(TaskType::TopN);
  ASSERT_EQ(topn_board.size(), 1u);
  EXPECT_GT(topn_board[0].per_dataset.at("topn-a").metrics.at("ndcg@10"), 0.0);

  EXPECT_EQ(platform_->list_submissions(TaskType::TopN).size(), 1u);
  EXPECT_EQ(platform_->list_submissions(std::nullopt).size(), 4u);

  // Everything survives a restart, and the leaderboard is recomputed identically.
  const std::string before = leaderboard_to_json(board).dump();
  platform_->stop();
  open();
  EXPECT_EQ(leaderboard_to_json(platform_->leaderboard(TaskType::Ctr)).dump(), before);
  EXPECT_EQ(platform_->submission_detail(popular.submission_id), detail);
}

TEST_F(PlatformTest, ArchivesAndBundles) {
  add_datasets();
  const std::string archive = stub_archive("popularity");
  const Submission s = platform_->submit(archive, TaskType::Ctr, "dave");
  const CodeArchive code = platform_->code_archive(s.submission_id);
  EXPECT_EQ(code.bytes, archive);
  EXPECT_EQ(code.checksum, sha256_hex(archive));
  EXPECT_EQ(code_of([&] { platform_->code_archive("sub-missing"); }), ErrorCode::NotFound);

  std::set<std::string> names;
  for (const auto& entry : zip::read(platform_->bundle_archive("ctr-a"), 1 << 26)) {
    names.insert(entry.name);
    EXPECT_EQ(entry.data, read_file(platform_->layout().public_dir("ctr-a") / entry.name));
  }
  EXPECT_EQ(names, (std::set<std::string>{"train.csv", "valid.csv", "test_input.csv",
                                          "MANIFEST.json"}));
  EXPECT_EQ(platform_->bundle_archive("ctr-a"), platform_->bundle_archive("ctr-a"));
  EXPECT_EQ(code_of([&] { platform_->bundle_archive("nope"); }), ErrorCode::NotFound);
  EXPECT_EQ(platform_->preprocessing_archive("topn-a"), platform_->preprocessing_archive("topn-a"));
  EXPECT_EQ(code_of([&] { platform_->preprocessing_archive("nope"); }), ErrorCode::NotFound);
}

TEST_F(PlatformTest, VerifyDatasetMatches) {
  add_datasets();
  for (const char* id : {"ctr-a", "ctr-b", "topn-a"}) {
    const PreparationReport report = platform_->verify_dataset(id);
    EXPECT_TRUE(report.matches_stored) << id;
    EXPECT_EQ(report.checksums.at("test.csv"),
              sha256_file_hex(platform_->layout().hidden_dir(id) / "test.csv"));
  }
}

TEST_F(PlatformTest, DatasetMirrorRebuiltOnOpen) {
  add_datasets();
  EXPECT_EQ(platform_->store().list(RecordKind::Dataset).size(), 3u);
  platform_.reset();
  fs::remove_all(root_.path() / "root" / "store");
  open();
  EXPECT_EQ(platform_->store().list(RecordKind::Dataset).size(), 3u);
  const auto record = json::parse(platform_->store().get(RecordKind::Dataset, "ctr-a"));
  EXPECT_FALSE(record.dump().find("seed") != std::string::npos);
}

TEST_F(PlatformTest, LeaderboardSkipsUnfinished) {
  add_datasets();
  platform_->submit(stub_archive("popularity"), TaskType::Ctr, "erin");
  // Not started: runs stay queued.
  EXPECT_TRUE(platform_->leaderboard(TaskType::Ctr).empty());
  EXPECT_EQ(platform_->list_submissions(TaskType::Ctr).at(0).at("status"), "Running");
}

TEST_F(PlatformTest, PublicDetailHasNoInternalFields) {
  add_datasets();
  const Submission s = platform_->submit(stub_archive("exit3"), TaskType::Ctr, "frank");
  platform_->runner().execute_run(s.run_ids.at(0));
  const json run = platform_->submission_detail(s.submission_id).at("runs").at(0);
  EXPECT_FALSE(run.contains("attempts"));
  EXPECT_FALSE(run.contains("log_excerpt"));
  EXPECT_NE(platform_->run_logs(s.run_ids.at(0)).find("hello from exit3"), std::string::npos);
}

struct EnvGuard {
  std::vector<std::string> names;
  ~EnvGuard() {
    for (const auto& n : names) ::unsetenv(n.c_str());
  }
  void set(const std::string& name, const std::string& value) {
    names.push_back(name);
    ::setenv(name.c_str(), value.c_str(), 1);
  }
};

TEST(PlatformConfig, FromEnv) {
  EnvGuard env;
  env.set("RBOARD_ROOT", "/tmp/rb-root");
  env.set("RBOARD_TIMEOUT_SECS", "12.5");
  env.set("RBOARD_MEM_BYTES", "1048576");
  env.set("RBOARD_WORKERS", "3");
  env.set("RBOARD_CMD_TEMPLATE", "python3 -u {entry}");
  const PlatformConfig config = PlatformConfig::from_env();
  EXPECT_EQ(config.root, fs::path("/tmp/rb-root"));
  EXPECT_DOUBLE_EQ(config.runner.limits.wall_timeout_seconds, 12.5);
  EXPECT_EQ(config.runner.limits.memory_bytes, 1048576u);
  EXPECT_EQ(config.runner.workers, 3u);
  EXPECT_EQ(config.runner.command_template, "python3 -u {entry}");

  for (const char* bad : {"0", "-1", "abc", "5x"}) {
    env.set("RBOARD_WORKERS", bad);
    EXPECT_EQ(code_of([] { PlatformConfig::from_env(); }), ErrorCode::InvalidArgument) << bad;
  }
}

}  // namespace
}  // namespace rboard
