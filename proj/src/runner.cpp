#include "rboard/runner.hpp"

#include <fcntl.h>
#include <pwd.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <iostream>
#include <sstream>

#include "rboard/error.hpp"
#include "rboard/fsutil.hpp"
#include "rboard/sha256.hpp"
#include "rboard/zip.hpp"

namespace rboard {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxAuthorBytes = 128;

std::optional<std::pair<uid_t, gid_t>> unprivileged_identity() {
  if (::geteuid() != 0) return std::nullopt;
  if (const passwd* pw = ::getpwnam("nobody")) return std::pair{pw->pw_uid, pw->pw_gid};
  return std::pair<uid_t, gid_t>{65534, 65534};
}

void chown_tree(const fs::path& root, uid_t uid, gid_t gid) {
  if (::lchown(root.c_str(), uid, gid) != 0) {
    throw Error(ErrorCode::Io, "cannot hand over the working directory");
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (::lchown(entry.path().c_str(), uid, gid) != 0) {
      throw Error(ErrorCode::Io, "cannot hand over the working directory");
    }
  }
}

// Reads a prediction file without following links the submission may have
// planted. nullopt when there is no regular file at `path`.
std::optional<std::string> read_regular_file(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_NOFOLLOW | O_CLOEXEC | O_NONBLOCK);
  if (fd < 0) return std::nullopt;
  struct stat st {};
  if (::fstat(fd, &st) != 0 || !S_ISREG(st.st_mode)) {
    ::close(fd);
    return std::nullopt;
  }
  std::string out;
  out.resize(static_cast<std::size_t>(st.st_size));
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::read(fd, out.data() + done, out.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    done += static_cast<std::size_t>(n);
  }
  ::close(fd);
  out.resize(done);
  return out;
}

std::string format_seconds(double seconds) {
  std::ostringstream out;
  out << seconds;
  return out.str();
}

RunRecord parse_run(const std::string& value) { return run_from_json(json::parse(value)); }

Submission parse_submission(const std::string& value) {
  return submission_from_json(json::parse(value));
}

}  // namespace

std::size_t RunnerConfig::default_worker_count() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency() / 2);
}

std::vector<std::string> expand_command_template(std::string_view command_template,
                                                 std::string_view entry) {
  std::vector<std::string> argv;
  std::istringstream words{std::string(command_template)};
  bool placed = false;
  for (std::string word; words >> word;) {
    for (auto pos = word.find("{entry}"); pos != std::string::npos; pos = word.find("{entry}")) {
      word.replace(pos, 7, entry);
      placed = true;
    }
    argv.push_back(std::move(word));
  }
  if (argv.empty()) throw Error(ErrorCode::InvalidArgument, "command template is empty");
  if (!placed) argv.emplace_back(entry);
  return argv;
}

Submission validate_submission(std::string_view archive, TaskType task,
                               std::uint64_t max_archive_bytes) {
  if (archive.size() > max_archive_bytes) {
    throw Error(ErrorCode::ArchiveTooLarge, "archive exceeds " +
                                                std::to_string(max_archive_bytes) + " bytes");
  }
  const auto entries = zip::read(archive, max_archive_bytes);

  Submission submission;
  submission.task = task;
  submission.entry_file = std::string(kEntryFile);
  submission.archive_checksum = sha256_hex(archive);
  submission.archive_bytes = archive.size();
  bool has_entry = false;
  for (const auto& entry : entries) {
    if (entry.is_directory) continue;
    has_entry = has_entry || entry.name == kEntryFile;
    submission.manifest.push_back({sanitize_utf8(entry.name), entry.data.size()});
  }
  if (!has_entry) {
    throw Error(ErrorCode::MissingEntryFile,
                "archive has no " + std::string(kEntryFile) + " at its root");
  }
  return submission;
}

struct Runner::Workspace {
  TempDir dir;
  fs::path code;
  fs::path input;
  fs::path output;
};

Runner::Runner(Store& store, ArchiveStore& archives, const DatasetRegistry& registry,
               RunnerConfig config)
    : store_(store), archives_(archives), registry_(registry), config_(std::move(config)) {
  config_.limits.validate();
  if (config_.workers == 0) throw Error(ErrorCode::InvalidArgument, "worker count must be > 0");
  if (!(config_.grace_seconds >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "grace must be non-negative");
  }
  expand_command_template(config_.command_template, kEntryFile);
  if (config_.drop_privileges) run_as_ = unprivileged_identity();

  if (config_.sandbox_root.empty()) {
    config_.sandbox_root =
        fs::temp_directory_path() / ("rboard-sandbox-" + std::to_string(::geteuid()));
  }
  fs::create_directories(config_.sandbox_root);
  struct stat st {};
  if (::lstat(config_.sandbox_root.c_str(), &st) != 0 || !S_ISDIR(st.st_mode) ||
      st.st_uid != ::geteuid()) {
    throw Error(ErrorCode::Io, "sandbox root is not a directory owned by this user");
  }
  // Traversable but not listable, so the unprivileged run user can reach its
  // own working directory and nothing else.
  ::chmod(config_.sandbox_root.c_str(), 0711);
}

Runner::~Runner() { stop(); }

fs::path Runner::sandbox_root() const { return config_.sandbox_root; }

Submission Runner::accept_submission(std::string_view archive, TaskType task,
                                     std::string author) {
  if (author.empty() || author.size() > kMaxAuthorBytes) {
    throw Error(ErrorCode::InvalidArgument,
                "author must be 1 to " + std::to_string(kMaxAuthorBytes) + " bytes");
  }
  Submission submission = validate_submission(archive, task, config_.max_archive_bytes);
  submission.submission_id = random_id("sub-");
  submission.author = sanitize_utf8(author);
  submission.submitted_at = utc_now_iso8601();
  submission.status = SubmissionStatus::Pending;
  archives_.put(archive);
  store_.put(RecordKind::Submission, submission.submission_id, to_json(submission).dump());
  return submission;
}

std::vector<std::string> Runner::schedule_task_runs(const std::string& submission_id) {
  auto run_ids = store_.transact([&](Store::Transaction& tx) {
    Submission submission = parse_submission(tx.get(RecordKind::Submission, submission_id));
    if (submission.status != SubmissionStatus::Pending) {
      throw Error(ErrorCode::InvalidState, "submission " + submission_id + " is " +
                                               std::string(to_string(submission.status)) +
                                               ", not Pending");
    }
    const auto datasets = registry_.list_datasets(submission.task);
    if (datasets.empty()) {
      throw Error(ErrorCode::NoDatasetsForTask,
                  "no datasets registered for task " + std::string(to_string(submission.task)));
    }
    const std::string now = utc_now_iso8601();
    std::vector<std::string> ids;
    for (const auto& dataset : datasets) {
      RunRecord run;
      run.run_id = make_run_id(submission_id, dataset.dataset_id);
      run.submission_id = submission_id;
      run.dataset_id = dataset.dataset_id;
      run.status = RunStatus::Queued;
      run.queued_at = now;
      tx.put(RecordKind::Run, run.run_id, to_json(run).dump());
      ids.push_back(run.run_id);
    }
    submission.status = SubmissionStatus::Running;
    submission.run_ids = ids;
    tx.put(RecordKind::Submission, submission_id, to_json(submission).dump());
    return ids;
  });
  enqueue(run_ids);
  return run_ids;
}

RunRecord Runner::claim(const std::string& run_id) {
  return store_.transact([&](Store::Transaction& tx) {
    RunRecord run = parse_run(tx.get(RecordKind::Run, run_id));
    if (!is_valid_transition(run.status, RunStatus::Running)) {
      throw Error(ErrorCode::InvalidState,
                  "run " + run_id + " is " + std::string(to_string(run.status)) + ", not Queued");
    }
    run.status = RunStatus::Running;
    run.started_at = utc_now_iso8601();
    run.attempts = 1;
    tx.put(RecordKind::Run, run_id, to_json(run).dump());
    return run;
  });
}

void Runner::refresh_submission(Store::Transaction& tx, const std::string& submission_id) {
  Submission submission = parse_submission(tx.get(RecordKind::Submission, submission_id));
  if (submission.status != SubmissionStatus::Running) return;
  std::size_t terminal = 0;
  bool any_succeeded = false;
  for (const auto& [key, value] : tx.list(RecordKind::Run, submission_id + ".")) {
    const RunRecord run = parse_run(value);
    if (!is_terminal(run.status)) return;
    ++terminal;
    any_succeeded = any_succeeded || run.status == RunStatus::Succeeded;
  }
  if (terminal != submission.run_ids.size()) return;
  submission.status = any_succeeded ? SubmissionStatus::Completed : SubmissionStatus::Failed;
  tx.put(RecordKind::Submission, submission_id, to_json(submission).dump());
}

RunRecord Runner::finish(RunRecord run, std::optional<MetricResult> result) {
  run.finished_at = utc_now_iso8601();
  store_.transact([&](Store::Transaction& tx) {
    const RunRecord current = parse_run(tx.get(RecordKind::Run, run.run_id));
    if (!is_valid_transition(current.status, run.status)) {
      throw Error(ErrorCode::InvalidState, "run " + run.run_id + " cannot move from " +
                                               std::string(to_string(current.status)) + " to " +
                                               std::string(to_string(run.status)));
    }
    tx.put(RecordKind::Run, run.run_id, to_json(run).dump(), Finality::Sealed);
    if (result) {
      tx.put(RecordKind::Result, run.run_id, to_json(*result).dump(), Finality::Sealed);
    }
    refresh_submission(tx, run.submission_id);
  });
  return run;
}

RunRecord Runner::execute_run(const std::string& run_id) {
  return execute_run(run_id, config_.limits);
}

RunRecord Runner::execute_run(const std::string& run_id, const SandboxLimits& limits) {
  limits.validate();
  RunRecord run = claim(run_id);
  auto log = std::make_shared<BoundedLog>(limits.log_bound_bytes);
  {
    const std::lock_guard lock(logs_mutex_);
    live_logs_[run_id] = log;
  }

  std::optional<MetricResult> result;
  std::optional<std::string> predictions;
  try {
    const Submission submission =
        parse_submission(store_.get(RecordKind::Submission, run.submission_id));
    const CodeArchive code = fetch_code_archive(store_, archives_, run.submission_id);
    const auto entries = zip::read(code.bytes, config_.max_archive_bytes);
    const Layout& layout = registry_.layout();

    Workspace ws{TempDir(sandbox_root(), run_id + "-"), {}, {}, {}};
    ws.code = ws.dir.path() / "code";
    ws.input = ws.dir.path() / "input";
    ws.output = ws.dir.path() / "output";
    for (const auto& dir : {ws.code, ws.input, ws.output, ws.dir.path() / "tmp"}) {
      fs::create_directory(dir);
    }
    zip::extract(entries, ws.code);
    for (const char* name : {"train.csv", "valid.csv", "test_input.csv"}) {
      fs::copy_file(layout.public_dir(run.dataset_id) / name, ws.input / name);
    }
    if (run_as_) chown_tree(ws.dir.path(), run_as_->first, run_as_->second);

    const fs::path output_file = ws.output / "predictions.csv";
    SandboxRequest request;
    request.working_dir = ws.code;
    request.argv = expand_command_template(config_.command_template, submission.entry_file);
    const std::vector<std::string> arguments{"--task",       std::string(to_string(submission.task)),
                                             "--train",      (ws.input / "train.csv").string(),
                                             "--valid",      (ws.input / "valid.csv").string(),
                                             "--test-input", (ws.input / "test_input.csv").string(),
                                             "--output",     output_file.string()};
    request.argv.insert(request.argv.end(), arguments.begin(), arguments.end());
    request.environment = {"PATH=/usr/local/bin:/usr/bin:/bin",
                           "HOME=" + ws.code.string(),
                           "TMPDIR=" + (ws.dir.path() / "tmp").string(),
                           "LANG=C.UTF-8",
                           "PYTHONHASHSEED=0",
                           "PYTHONDONTWRITEBYTECODE=1"};
    request.limits = limits;
    request.run_as = run_as_;

    SandboxOutcome outcome = run_sandboxed(request, *log);
    if (outcome.termination == SandboxOutcome::Termination::SpawnFailed) {
      // Infrastructure failure: one more attempt.
      run.attempts = 2;
      outcome = run_sandboxed(request, *log);
    }
    run.wall_clock_seconds = outcome.wall_clock_seconds;

    switch (outcome.termination) {
      case SandboxOutcome::Termination::SpawnFailed:
        run.status = RunStatus::Failed;
        run.detail = "could not start the submission: " + outcome.spawn_error;
        break;
      case SandboxOutcome::Termination::TimedOut:
        run.status = RunStatus::Timeout;
        run.detail = "killed after the wall timeout of " +
                     format_seconds(limits.wall_timeout_seconds) + " s";
        break;
      case SandboxOutcome::Termination::Signaled:
        run.status = RunStatus::Failed;
        run.detail = "terminated by signal " + std::to_string(outcome.signal);
        break;
      case SandboxOutcome::Termination::Exited:
        run.exit_code = outcome.exit_code;
        if (outcome.exit_code != 0) {
          run.status = RunStatus::Failed;
          run.detail = "exited with code " + std::to_string(outcome.exit_code);
          break;
        }
        predictions = read_regular_file(output_file);
        if (!predictions) {
          run.status = RunStatus::OutputInvalid;
          run.detail = "no prediction file was written to --output";
          break;
        }
        try {
          const std::string truth = read_file(layout.hidden_dir(run.dataset_id) / "test.csv");
          MetricResult metrics = evaluate_predictions(submission.task, *predictions, truth);
          metrics.run_id = run_id;
          result = std::move(metrics);
          run.status = RunStatus::Succeeded;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::OutputInvalid) throw;
          run.status = RunStatus::OutputInvalid;
          run.detail = e.what();
        }
        break;
    }
  } catch (const std::exception& e) {
    run.status = RunStatus::Failed;
    run.detail = std::string("platform error: ") + e.what();
    result.reset();
  }

  run.log_excerpt = sanitize_utf8(log->snapshot());
  try {
    const fs::path artifacts = registry_.layout().run_dir(run_id);
    fs::create_directories(artifacts);
    write_file_atomic(artifacts / "log.txt", run.log_excerpt);
    if (predictions) {
      run.prediction_checksum = sha256_hex(*predictions);
      write_file_atomic(artifacts / "predictions.csv", *predictions);
    }
  } catch (const std::exception& e) {
    std::cerr << "rboard: cannot keep artifacts of " << run_id << ": " << e.what() << '\n';
  }

  auto forget_log = [&] {
    const std::lock_guard lock(logs_mutex_);
    live_logs_.erase(run_id);
  };
  try {
    RunRecord final_record = finish(std::move(run), std::move(result));
    forget_log();
    return final_record;
  } catch (...) {
    forget_log();
    throw;
  }
}

std::string Runner::get_run_logs(const std::string& run_id) const {
  {
    const std::lock_guard lock(logs_mutex_);
    if (const auto it = live_logs_.find(run_id); it != live_logs_.end()) {
      return it->second->snapshot();
    }
  }
  return parse_run(store_.get(RecordKind::Run, run_id)).log_excerpt;
}

void Runner::recover() {
  std::vector<std::pair<std::string, std::string>> queued;  // queued_at, run_id
  for (const auto& [key, value] : store_.list(RecordKind::Run)) {
    RunRecord run = parse_run(value);
    if (run.status == RunStatus::Queued) {
      queued.emplace_back(run.queued_at, run.run_id);
    } else if (run.status == RunStatus::Running) {
      run.status = RunStatus::Failed;
      run.detail = "interrupted: the platform stopped while the run was executing";
      finish(std::move(run), std::nullopt);
    }
  }
  std::sort(queued.begin(), queued.end());
  std::vector<std::string> ids;
  for (auto& [at, id] : queued) ids.push_back(std::move(id));
  enqueue(std::move(ids));

  for (const auto& [key, value] : store_.list(RecordKind::Submission)) {
    if (parse_submission(value).status != SubmissionStatus::Pending) continue;
    try {
      schedule_task_runs(key);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoDatasetsForTask) throw;
    }
  }
}

void Runner::enqueue(std::vector<std::string> run_ids) {
  {
    const std::lock_guard lock(queue_mutex_);
    for (auto& id : run_ids) queue_.push_back(std::move(id));
  }
  queue_cv_.notify_all();
}

void Runner::start() {
  const std::lock_guard lock(queue_mutex_);
  if (running_) return;
  running_ = true;
  for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

void Runner::stop() {
  {
    const std::lock_guard lock(queue_mutex_);
    if (!running_) return;
    running_ = false;
  }
  queue_cv_.notify_all();
  for (auto& worker : workers_) worker.join();
  workers_.clear();
  idle_cv_.notify_all();
}

void Runner::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [this] { return busy_ == 0 && (queue_.empty() || !running_); });
}

void Runner::worker_loop() {
  for (;;) {
    std::string run_id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return !running_ || !queue_.empty(); });
      if (!running_) return;
      run_id = std::move(queue_.front());
      queue_.pop_front();
      ++busy_;
    }
    try {
      execute_run(run_id);
    } catch (const Error& e) {
      // A run claimed elsewhere (direct execute_run) is not an error here.
      if (e.code() != ErrorCode::InvalidState) {
        std::cerr << "rboard: run " << run_id << ": " << e.what() << '\n';
      }
    } catch (const std::exception& e) {
      std::cerr << "rboard: run " << run_id << ": " << e.what() << '\n';
    }
    {
      const std::lock_guard lock(queue_mutex_);
      --busy_;
    }
    idle_cv_.notify_all();
  }
}

}  // namespace rboard
