#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rboard/dataset.hpp"
#include "rboard/evaluation.hpp"
#include "rboard/records.hpp"
#include "rboard/sandbox.hpp"
#include "rboard/store.hpp"

namespace rboard {

inline constexpr std::string_view kEntryFile = "main.py";
inline constexpr std::uint64_t kDefaultMaxArchiveBytes = 256ULL << 20;

struct RunnerConfig {
  SandboxLimits limits;
  // Whitespace separated; "{entry}" is replaced by the entry file. Without
  // the placeholder the entry file is appended.
  std::string command_template = "python3 {entry}";
  std::size_t workers = default_worker_count();
  // When running as root, submissions run as the unprivileged "nobody" user.
  bool drop_privileges = true;
  // Slack allowed on top of the wall timeout for a terminal run.
  double grace_seconds = 1.0;
  std::uint64_t max_archive_bytes = kDefaultMaxArchiveBytes;
  // Parent of per-run working directories. Empty means a per-user directory
  // below the system temp dir, away from the platform root.
  std::filesystem::path sandbox_root;

  static std::size_t default_worker_count();
};

// Expands the template into argv for `entry`.
std::vector<std::string> expand_command_template(std::string_view command_template,
                                                 std::string_view entry);

// Checks a submission archive and returns a Pending submission with its
// manifest (id, author and timestamps are left to the caller). Throws
// MalformedArchive, ArchiveTooLarge or MissingEntryFile.
Submission validate_submission(std::string_view archive, TaskType task,
                               std::uint64_t max_archive_bytes = kDefaultMaxArchiveBytes);

// Executes submissions against the registered datasets of their task.
// Runs are queued FIFO and consumed by a pool of `config.workers` threads
// once start() is called; execute_run() can also be driven directly.
class Runner {
 public:
  Runner(Store& store, ArchiveStore& archives, const DatasetRegistry& registry,
         RunnerConfig config);
  Runner(const Runner&) = delete;
  Runner& operator=(const Runner&) = delete;
  ~Runner();

  const RunnerConfig& config() const noexcept { return config_; }

  // Validates and persists a new Pending submission.
  Submission accept_submission(std::string_view archive, TaskType task, std::string author);

  // One Queued run per dataset of the submission's task; the submission
  // moves to Running. Throws NoDatasetsForTask, or InvalidState unless the
  // submission is Pending. Runs are handed to the pool when it is running.
  std::vector<std::string> schedule_task_runs(const std::string& submission_id);

  // Executes one Queued run to a terminal state and returns the sealed record.
  RunRecord execute_run(const std::string& run_id);
  RunRecord execute_run(const std::string& run_id, const SandboxLimits& limits);

  // Live output while the run executes, the stored excerpt afterwards.
  std::string get_run_logs(const std::string& run_id) const;

  // Marks runs interrupted by a previous process as Failed, re-queues Queued
  // runs and schedules Pending submissions.
  void recover();

  void start();
  // Finishes in-flight runs; queued runs stay Queued in the store.
  void stop();
  // Blocks until the queue is empty and no run is executing.
  void wait_idle();

 private:
  struct Workspace;

  void enqueue(std::vector<std::string> run_ids);
  void worker_loop();
  RunRecord claim(const std::string& run_id);
  RunRecord finish(RunRecord run, std::optional<MetricResult> result);
  void refresh_submission(Store::Transaction& tx, const std::string& submission_id);
  std::filesystem::path sandbox_root() const;

  Store& store_;
  ArchiveStore& archives_;
  const DatasetRegistry& registry_;
  RunnerConfig config_;
  std::optional<std::pair<uid_t, gid_t>> run_as_;

  mutable std::mutex logs_mutex_;
  std::map<std::string, std::shared_ptr<BoundedLog>, std::less<>> live_logs_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::size_t busy_ = 0;
  bool running_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace rboard
