#include "rboard/records.hpp"

#include "rboard/error.hpp"

namespace rboard {
using nlohmann::json;

std::string_view to_string(SubmissionStatus status) noexcept {
  switch (status) {
    case SubmissionStatus::Pending: return "Pending";
    case SubmissionStatus::Running: return "Running";
    case SubmissionStatus::Completed: return "Completed";
    case SubmissionStatus::Failed: return "Failed";
  }
  return "Failed";
}

std::string_view to_string(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::Queued: return "Queued";
    case RunStatus::Running: return "Running";
    case RunStatus::Succeeded: return "Succeeded";
    case RunStatus::Failed: return "Failed";
    case RunStatus::Timeout: return "Timeout";
    case RunStatus::OutputInvalid: return "OutputInvalid";
  }
  return "Failed";
}

SubmissionStatus parse_submission_status(std::string_view text) {
  for (auto s : {SubmissionStatus::Pending, SubmissionStatus::Running, SubmissionStatus::Completed,
                 SubmissionStatus::Failed}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown submission status '" + std::string(text) + "'");
}

RunStatus parse_run_status(std::string_view text) {
  for (auto s : {RunStatus::Queued, RunStatus::Running, RunStatus::Succeeded, RunStatus::Failed,
                 RunStatus::Timeout, RunStatus::OutputInvalid}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown run status '" + std::string(text) + "'");
}

bool is_terminal(RunStatus status) noexcept {
  return status != RunStatus::Queued && status != RunStatus::Running;
}

bool is_valid_transition(RunStatus from, RunStatus to) noexcept {
  if (from == RunStatus::Queued) return to == RunStatus::Running;
  if (from == RunStatus::Running) return is_terminal(to);
  return false;
}

json to_json(const Submission& s) {
  json manifest = json::array();
  for (const auto& file : s.manifest) manifest.push_back({{"path", file.path}, {"bytes", file.bytes}});
  return {{"submission_id", s.submission_id},
          {"task", to_string(s.task)},
          {"author", s.author},
          {"archive_checksum", s.archive_checksum},
          {"archive_bytes", s.archive_bytes},
          {"entry_file", s.entry_file},
          {"manifest", std::move(manifest)},
          {"submitted_at", s.submitted_at},
          {"status", to_string(s.status)},
          {"run_ids", s.run_ids}};
}

Submission submission_from_json(const json& j) {
  Submission s;
  s.submission_id = j.at("submission_id").get<std::string>();
  const auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error(ErrorCode::InvalidArgument, "submission record: unknown task");
  s.task = *task;
  s.author = j.at("author").get<std::string>();
  s.archive_checksum = j.at("archive_checksum").get<std::string>();
  s.archive_bytes = j.at("archive_bytes").get<std::uint64_t>();
  s.entry_file = j.at("entry_file").get<std::string>();
  for (const auto& file : j.at("manifest")) {
    s.manifest.push_back({file.at("path").get<std::string>(), file.at("bytes").get<std::uint64_t>()});
  }
  s.submitted_at = j.at("submitted_at").get<std::string>();
  s.status = parse_submission_status(j.at("status").get<std::string>());
  s.run_ids = j.at("run_ids").get<std::vector<std::string>>();
  return s;
}

json to_json(const RunRecord& r) {
  return {{"run_id", r.run_id},
          {"submission_id", r.submission_id},
          {"dataset_id", r.dataset_id},
          {"status", to_string(r.status)},
          {"wall_clock_seconds", r.wall_clock_seconds},
          {"exit_code", r.exit_code ? json(*r.exit_code) : json(nullptr)},
          {"log_excerpt", r.log_excerpt},
          {"prediction_checksum",
           r.prediction_checksum ? json(*r.prediction_checksum) : json(nullptr)},
          {"detail", r.detail},
          {"attempts", r.attempts},
          {"queued_at", r.queued_at},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at}};
}

RunRecord run_from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.submission_id = j.at("submission_id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.status = parse_run_status(j.at("status").get<std::string>());
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  if (!j.at("exit_code").is_null()) r.exit_code = j.at("exit_code").get<int>();
  r.log_excerpt = j.at("log_excerpt").get<std::string>();
  if (!j.at("prediction_checksum").is_null()) {
    r.prediction_checksum = j.at("prediction_checksum").get<std::string>();
  }
  r.detail = j.at("detail").get<std::string>();
  r.attempts = j.at("attempts").get<int>();
  r.queued_at = j.at("queued_at").get<std::string>();
  r.started_at = j.at("started_at").get<std::string>();
  r.finished_at = j.at("finished_at").get<std::string>();
  return r;
}

std::string make_run_id(std::string_view submission_id, std::string_view dataset_id) {
  return std::string(submission_id) + "." + std::string(dataset_id);
}

}  // namespace rboard
