#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rboard {

enum class NetworkPolicy { Disabled };

struct SandboxLimits {
  double wall_timeout_seconds = 3600.0;
  std::uint64_t memory_bytes = 8ULL << 30;
  std::uint64_t max_output_bytes = 1ULL << 30;
  std::size_t log_bound_bytes = 64 * 1024;
  NetworkPolicy network = NetworkPolicy::Disabled;

  // Throws InvalidArgument unless every limit is strictly positive.
  void validate() const;
};

// Append-only capture of process output that keeps at most `bound` bytes:
// the first bytes received plus a truncation marker. Concurrent readers get
// a consistent prefix.
class BoundedLog {
 public:
  explicit BoundedLog(std::size_t bound);

  void append(std::string_view bytes);
  std::string snapshot() const;
  bool truncated() const;
  std::uint64_t total_bytes() const;

 private:
  static constexpr std::size_t kMarkerReserve = 96;

  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::string head_;
  std::uint64_t total_ = 0;
};

struct SandboxRequest {
  std::filesystem::path working_dir;
  std::vector<std::string> argv;
  std::vector<std::string> environment;  // KEY=VALUE
  SandboxLimits limits;
  // Switch to this uid/gid before exec (requires root).
  std::optional<std::pair<uid_t, gid_t>> run_as;
};

struct SandboxOutcome {
  enum class Termination { Exited, Signaled, TimedOut, SpawnFailed };

  Termination termination = Termination::SpawnFailed;
  int exit_code = -1;
  int signal = 0;
  double wall_clock_seconds = 0.0;
  std::string spawn_error;
};

// Runs one process in its own process group and network namespace with
// address-space and file-size limits, stdout and stderr merged into `log`.
// The whole group is killed at the wall timeout and after the main process
// exits. Wall time runs from spawn to reaping.
SandboxOutcome run_sandboxed(const SandboxRequest& request, BoundedLog& log);

// Resolves `program` against PATH unless it already contains a slash.
std::optional<std::filesystem::path> find_executable(std::string_view program);

}  // namespace rboard
