#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rboard/util.hpp"

namespace rboard {

enum class SubmissionStatus { Pending, Running, Completed, Failed };
enum class RunStatus { Queued, Running, Succeeded, Failed, Timeout, OutputInvalid };

std::string_view to_string(SubmissionStatus status) noexcept;
std::string_view to_string(RunStatus status) noexcept;
SubmissionStatus parse_submission_status(std::string_view text);
RunStatus parse_run_status(std::string_view text);

bool is_terminal(RunStatus status) noexcept;
// Queued -> Running -> {Succeeded, Failed, Timeout, OutputInvalid}.
bool is_valid_transition(RunStatus from, RunStatus to) noexcept;

struct ArchiveFile {
  std::string path;
  std::uint64_t bytes = 0;
};

struct Submission {
  std::string submission_id;
  TaskType task = TaskType::Ctr;
  std::string author;
  std::string archive_checksum;
  std::uint64_t archive_bytes = 0;
  std::string entry_file = "main.py";
  std::vector<ArchiveFile> manifest;
  std::string submitted_at;
  SubmissionStatus status = SubmissionStatus::Pending;
  std::vector<std::string> run_ids;
};

struct RunRecord {
  std::string run_id;
  std::string submission_id;
  std::string dataset_id;
  RunStatus status = RunStatus::Queued;
  double wall_clock_seconds = 0.0;
  std::optional<int> exit_code;
  std::string log_excerpt;
  std::optional<std::string> prediction_checksum;
  std::string detail;  // why a run did not succeed
  int attempts = 0;
  std::string queued_at;
  std::string started_at;
  std::string finished_at;
};

nlohmann::json to_json(const Submission& submission);
Submission submission_from_json(const nlohmann::json& json);
nlohmann::json to_json(const RunRecord& run);
RunRecord run_from_json(const nlohmann::json& json);

// run ids are "<submission_id>.<dataset_id>", so a submission's runs share a
// key prefix.
std::string make_run_id(std::string_view submission_id, std::string_view dataset_id);

}  // namespace rboard
