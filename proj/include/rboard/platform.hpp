#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rboard/aggregation.hpp"
#include "rboard/dataset.hpp"
#include "rboard/preprocessing.hpp"
#include "rboard/records.hpp"
#include "rboard/runner.hpp"
#include "rboard/store.hpp"

namespace rboard {

struct PlatformConfig {
  std::filesystem::path root = "rboard-data";
  RunnerConfig runner;

  // Overrides defaults from RBOARD_ROOT, RBOARD_TIMEOUT_SECS, RBOARD_MEM_BYTES,
  // RBOARD_WORKERS and RBOARD_CMD_TEMPLATE. Throws InvalidArgument on
  // malformed values.
  static PlatformConfig from_env();
};

// Everything below one root directory: datasets, records, archives, and the
// runner that executes submissions.
class Platform {
 public:
  explicit Platform(PlatformConfig config);
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;
  ~Platform();

  const Layout& layout() const noexcept { return layout_; }
  Store& store() noexcept { return store_; }
  ArchiveStore& archives() noexcept { return archives_; }
  DatasetRegistry& registry() noexcept { return registry_; }
  Runner& runner() noexcept { return runner_; }

  PublicDatasetDescriptor register_dataset(const RegistrationRequest& request,
                                           std::string_view raw_bytes);
  // Re-derives a dataset's bundles from its raw file and compares them with
  // what is stored.
  PreparationReport verify_dataset(const std::string& dataset_id);

  // Validates, stores and schedules a submission. Throws NoDatasetsForTask
  // before anything is stored when the task has no datasets.
  Submission submit(std::string_view archive, TaskType task, std::string author);

  // Public view: submission fields plus one entry per run with its status,
  // runtime and, once it succeeded, its metrics.
  nlohmann::json submission_detail(const std::string& submission_id) const;
  // Public views of every submission, oldest first.
  std::vector<nlohmann::json> list_submissions(std::optional<TaskType> task) const;
  std::vector<LeaderboardEntry> leaderboard(TaskType task) const;

  // Zip of the public bundle files only.
  std::string bundle_archive(const std::string& dataset_id) const;
  std::string preprocessing_archive(const std::string& dataset_id) const;
  CodeArchive code_archive(const std::string& submission_id) const;
  std::string run_logs(const std::string& run_id) const;
  RunRecord run(const std::string& run_id) const;

  // Resumes interrupted work and starts the worker pool.
  void start();
  void stop();
  void wait_idle();

 private:
  void mirror_datasets();

  PlatformConfig config_;
  Layout layout_;
  Store store_;
  ArchiveStore archives_;
  DatasetRegistry registry_;
  Preparer preparer_;
  Runner runner_;
};

}  // namespace rboard
