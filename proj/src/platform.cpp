#include "rboard/platform.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

#include "rboard/error.hpp"
#include "rboard/fsutil.hpp"
#include "rboard/zip.hpp"

namespace rboard {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
std::optional<T> env_number(const char* name) {
  const char* raw = std::getenv(name);
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string_view text(raw);
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || !(value > T{})) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(name) + " must be a positive number, got '" + std::string(text) + "'");
  }
  return value;
}

Layout created_layout(const fs::path& root) {
  Layout layout(fs::absolute(root));
  layout.create();
  return layout;
}

json public_run_json(const RunRecord& run, const std::optional<MetricResult>& result) {
  json out{{"run_id", run.run_id},
           {"dataset_id", run.dataset_id},
           {"status", to_string(run.status)},
           {"wall_clock_seconds", run.wall_clock_seconds},
           {"exit_code", run.exit_code ? json(*run.exit_code) : json(nullptr)},
           {"prediction_checksum",
            run.prediction_checksum ? json(*run.prediction_checksum) : json(nullptr)},
           {"detail", run.detail},
           {"queued_at", run.queued_at},
           {"started_at", run.started_at},
           {"finished_at", run.finished_at}};
  if (result) {
    out["metrics"] = result->metrics;
    out["primary_metric"] = result->primary_metric;
  } else {
    out["metrics"] = nullptr;
    out["primary_metric"] = nullptr;
  }
  return out;
}

}  // namespace

PlatformConfig PlatformConfig::from_env() {
  PlatformConfig config;
  if (const char* root = std::getenv("RBOARD_ROOT"); root != nullptr && *root != '\0') {
    config.root = root;
  }
  if (auto v = env_number<double>("RBOARD_TIMEOUT_SECS")) config.runner.limits.wall_timeout_seconds = *v;
  if (auto v = env_number<std::uint64_t>("RBOARD_MEM_BYTES")) config.runner.limits.memory_bytes = *v;
  if (auto v = env_number<std::size_t>("RBOARD_WORKERS")) config.runner.workers = *v;
  if (const char* cmd = std::getenv("RBOARD_CMD_TEMPLATE"); cmd != nullptr && *cmd != '\0') {
    config.runner.command_template = cmd;
  }
  return config;
}

Platform::Platform(PlatformConfig config)
    : config_(std::move(config)),
      layout_(created_layout(config_.root)),
      store_(layout_.store_root()),
      archives_(layout_.archives_root()),
      registry_(layout_, prepare_dataset),
      preparer_(registry_),
      runner_(store_, archives_, registry_, config_.runner) {
  mirror_datasets();
}

Platform::~Platform() { stop(); }

void Platform::mirror_datasets() {
  for (const auto& dataset : registry_.list_datasets()) {
    if (!store_.find(RecordKind::Dataset, dataset.dataset_id)) {
      store_.put(RecordKind::Dataset, dataset.dataset_id, to_json(dataset).dump(),
                 Finality::Sealed);
    }
  }
}

PublicDatasetDescriptor Platform::register_dataset(const RegistrationRequest& request,
                                                   std::string_view raw_bytes) {
  const std::string id = registry_.register_dataset(request, raw_bytes);
  PublicDatasetDescriptor descriptor = registry_.get_dataset(id);
  store_.put(RecordKind::Dataset, id, to_json(descriptor).dump(), Finality::Sealed);
  return descriptor;
}

PreparationReport Platform::verify_dataset(const std::string& dataset_id) {
  return preparer_.prepare(dataset_id).get();
}

Submission Platform::submit(std::string_view archive, TaskType task, std::string author) {
  if (registry_.list_datasets(task).empty()) {
    throw Error(ErrorCode::NoDatasetsForTask,
                "no datasets registered for task " + std::string(to_string(task)));
  }
  Submission submission = runner_.accept_submission(archive, task, std::move(author));
  submission.run_ids = runner_.schedule_task_runs(submission.submission_id);
  submission.status = SubmissionStatus::Running;
  return submission;
}

json Platform::submission_detail(const std::string& submission_id) const {
  const auto record = store_.find(RecordKind::Submission, submission_id);
  if (!record) throw Error(ErrorCode::NotFound, "unknown submission '" + submission_id + "'");
  json out = json::parse(*record);
  json runs = json::array();
  for (const auto& [key, value] : store_.list(RecordKind::Run, submission_id + ".")) {
    std::optional<MetricResult> result;
    if (const auto stored = store_.find(RecordKind::Result, key)) {
      result = metric_result_from_json(json::parse(*stored));
    }
    runs.push_back(public_run_json(run_from_json(json::parse(value)), result));
  }
  out["runs"] = std::move(runs);
  return out;
}

std::vector<json> Platform::list_submissions(std::optional<TaskType> task) const {
  std::vector<std::pair<std::string, json>> rows;
  for (const auto& [key, value] : store_.list(RecordKind::Submission)) {
    json submission = json::parse(value);
    if (task && submission.at("task") != to_string(*task)) continue;
    rows.emplace_back(submission.at("submitted_at").get<std::string>() + key,
                      std::move(submission));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<json> out;
  for (auto& row : rows) out.push_back(std::move(row.second));
  return out;
}

std::vector<LeaderboardEntry> Platform::leaderboard(TaskType task) const {
  std::vector<std::string> task_datasets;
  for (const auto& [key, value] : store_.list(RecordKind::Dataset)) {
    if (json::parse(value).at("task") == to_string(task)) task_datasets.push_back(key);
  }
  std::vector<SubmissionSnapshot> snapshots;
  for (const auto& [key, value] : store_.list(RecordKind::Submission)) {
    const Submission submission = submission_from_json(json::parse(value));
    if (submission.task != task) continue;
    if (submission.status != SubmissionStatus::Completed &&
        submission.status != SubmissionStatus::Failed) {
      continue;
    }
    SubmissionSnapshot snapshot{submission.submission_id, submission.author,
                                submission.submitted_at, {}};
    for (const auto& [run_key, run_value] : store_.list(RecordKind::Run, key + ".")) {
      const RunRecord run = run_from_json(json::parse(run_value));
      RunOutcome outcome{std::string(to_string(run.status)), run.wall_clock_seconds, {}};
      if (const auto stored = store_.find(RecordKind::Result, run_key)) {
        outcome.result = metric_result_from_json(json::parse(*stored));
      }
      snapshot.runs.emplace(run.dataset_id, std::move(outcome));
    }
    snapshots.push_back(std::move(snapshot));
  }
  return build_leaderboard(task_datasets, snapshots);
}

std::string Platform::bundle_archive(const std::string& dataset_id) const {
  registry_.get_dataset(dataset_id);  // NotFound for unknown ids
  zip::Writer writer;
  for (const char* name : {"train.csv", "valid.csv", "test_input.csv", "MANIFEST.json"}) {
    writer.add(name, read_file(layout_.public_dir(dataset_id) / name));
  }
  return std::move(writer).finish();
}

std::string Platform::preprocessing_archive(const std::string& dataset_id) const {
  return export_preprocessing_code(registry_.get_dataset(dataset_id));
}

CodeArchive Platform::code_archive(const std::string& submission_id) const {
  return fetch_code_archive(store_, archives_, submission_id);
}

std::string Platform::run_logs(const std::string& run_id) const {
  return runner_.get_run_logs(run_id);
}

RunRecord Platform::run(const std::string& run_id) const {
  return run_from_json(json::parse(store_.get(RecordKind::Run, run_id)));
}

void Platform::start() {
  runner_.recover();
  runner_.start();
}

void Platform::stop() { runner_.stop(); }

void Platform::wait_idle() { runner_.wait_idle(); }

}  // namespace rboard
