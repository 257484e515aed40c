#include "rboard/sandbox.hpp"

#include <fcntl.h>
#include <grp.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <utility>

#include "rboard/error.hpp"

namespace rboard {
namespace {

using Clock = std::chrono::steady_clock;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    reset(std::exchange(other.fd_, -1));
    return *this;
  }
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  void reset(int fd = -1) noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::Io, std::string("pipe2 failed: ") + std::strerror(errno));
  }
  return {Fd(fds[0]), Fd(fds[1])};
}

// Child side of the fork. Only async-signal-safe calls from here on; any
// failure is reported as (stage, errno) through `status_fd`.
[[noreturn]] void exec_child(const SandboxRequest& request, const char* executable,
                             char* const* argv, char* const* envp, int output_fd,
                             int status_fd) {
  auto report = [status_fd](int stage) {
    const int payload[2] = {stage, errno};
    [[maybe_unused]] auto n = ::write(status_fd, payload, sizeof payload);
    ::_exit(127);
  };

  ::setpgid(0, 0);
  sigset_t none;
  sigemptyset(&none);
  ::sigprocmask(SIG_SETMASK, &none, nullptr);
  ::signal(SIGPIPE, SIG_DFL);

  if (request.limits.network == NetworkPolicy::Disabled && ::unshare(CLONE_NEWNET) != 0) {
    // Unprivileged fallback: a user namespace grants CLONE_NEWNET.
    if (request.run_as || ::unshare(CLONE_NEWUSER | CLONE_NEWNET) != 0) report(1);
  }

  const rlimit memory{request.limits.memory_bytes, request.limits.memory_bytes};
  const rlimit file_size{request.limits.max_output_bytes, request.limits.max_output_bytes};
  const rlimit no_core{0, 0};
  if (::setrlimit(RLIMIT_AS, &memory) != 0 || ::setrlimit(RLIMIT_FSIZE, &file_size) != 0 ||
      ::setrlimit(RLIMIT_CORE, &no_core) != 0) {
    report(2);
  }

  if (::chdir(request.working_dir.c_str()) != 0) report(3);

  const int devnull = ::open("/dev/null", O_RDONLY);
  if (devnull < 0 || ::dup2(devnull, STDIN_FILENO) < 0 || ::dup2(output_fd, STDOUT_FILENO) < 0 ||
      ::dup2(output_fd, STDERR_FILENO) < 0) {
    report(4);
  }

  if (request.run_as) {
    if (::setgroups(0, nullptr) != 0 || ::setgid(request.run_as->second) != 0 ||
        ::setuid(request.run_as->first) != 0) {
      report(5);
    }
  }

  if (status_fd <= 3 || ::close_range(3, static_cast<unsigned>(status_fd) - 1, 0) != 0 ||
      ::close_range(static_cast<unsigned>(status_fd) + 1, ~0U, 0) != 0) {
    const long max_fd = std::min(::sysconf(_SC_OPEN_MAX), 65536L);
    for (int fd = 3; fd < max_fd; ++fd) {
      if (fd != status_fd) ::close(fd);
    }
  }

  ::execve(executable, argv, envp);
  report(6);
  ::_exit(127);
}

std::string describe_spawn_failure(int stage, int err) {
  static constexpr std::array<const char*, 7> kStages{
      "",        "cannot isolate network", "cannot apply resource limits",
      "cannot enter working directory",    "cannot redirect output",
      "cannot drop privileges",            "exec failed"};
  const char* what = stage >= 1 && stage < static_cast<int>(kStages.size()) ? kStages[stage]
                                                                            : "spawn failed";
  return std::string(what) + ": " + std::strerror(err);
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void drain(int fd, BoundedLog& log, int timeout_ms) {
  std::array<char, 65536> buffer{};
  for (;;) {
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready <= 0) return;
    const ssize_t n = ::read(fd, buffer.data(), buffer.size());
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    log.append(std::string_view(buffer.data(), static_cast<std::size_t>(n)));
  }
}

}  // namespace

void SandboxLimits::validate() const {
  if (!(wall_timeout_seconds > 0.0) || memory_bytes == 0 || max_output_bytes == 0 ||
      log_bound_bytes == 0) {
    throw Error(ErrorCode::InvalidArgument, "sandbox limits must be strictly positive");
  }
}

BoundedLog::BoundedLog(std::size_t bound)
    : capacity_(bound > 2 * kMarkerReserve ? bound - kMarkerReserve : bound / 2) {}

void BoundedLog::append(std::string_view bytes) {
  const std::lock_guard lock(mutex_);
  total_ += bytes.size();
  if (head_.size() < capacity_) head_.append(bytes.substr(0, capacity_ - head_.size()));
}

std::string BoundedLog::snapshot() const {
  const std::lock_guard lock(mutex_);
  std::string out = head_;
  if (total_ > head_.size()) {
    out += "\n[rboard: output truncated, " + std::to_string(total_ - head_.size()) +
           " bytes omitted]\n";
  }
  return out;
}

bool BoundedLog::truncated() const {
  const std::lock_guard lock(mutex_);
  return total_ > head_.size();
}

std::uint64_t BoundedLog::total_bytes() const {
  const std::lock_guard lock(mutex_);
  return total_;
}

std::optional<std::filesystem::path> find_executable(std::string_view program) {
  if (program.empty()) return std::nullopt;
  if (program.find('/') != std::string_view::npos) return std::filesystem::path(program);
  const char* path_env = std::getenv("PATH");
  const std::string_view search = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= search.size()) {
    const auto end = std::min(search.find(':', start), search.size());
    const std::filesystem::path candidate =
        std::filesystem::path(search.substr(start, end - start)) / program;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    start = end + 1;
  }
  return std::nullopt;
}

SandboxOutcome run_sandboxed(const SandboxRequest& request, BoundedLog& log) {
  request.limits.validate();
  if (request.argv.empty()) throw Error(ErrorCode::InvalidArgument, "sandbox: empty argv");

  SandboxOutcome outcome;
  const auto executable = find_executable(request.argv.front());
  if (!executable) {
    outcome.spawn_error = "command '" + request.argv.front() + "' not found on PATH";
    return outcome;
  }
  const std::string executable_path = executable->string();

  std::vector<char*> argv;
  for (const auto& arg : request.argv) argv.push_back(const_cast<char*>(arg.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (const auto& var : request.environment) envp.push_back(const_cast<char*>(var.c_str()));
  envp.push_back(nullptr);

  auto [output_read, output_write] = make_pipe();
  auto [status_read, status_write] = make_pipe();

  const auto start = Clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    outcome.spawn_error = std::string("fork failed: ") + std::strerror(errno);
    return outcome;
  }
  if (pid == 0) {
    exec_child(request, executable_path.c_str(), argv.data(), envp.data(), output_write.get(),
               status_write.get());
  }
  ::setpgid(pid, pid);  // also done in the child; whichever runs first wins
  output_write.reset();
  status_write.reset();

  int failure[2] = {0, 0};
  ssize_t status_bytes = 0;
  do {
    status_bytes = ::read(status_read.get(), failure, sizeof failure);
  } while (status_bytes < 0 && errno == EINTR);
  if (status_bytes == static_cast<ssize_t>(sizeof failure)) {
    int ignored = 0;
    ::waitpid(pid, &ignored, 0);
    outcome.spawn_error = describe_spawn_failure(failure[0], failure[1]);
    outcome.wall_clock_seconds = seconds_since(start);
    return outcome;
  }

  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(
                  std::chrono::duration<double>(request.limits.wall_timeout_seconds));
  int wait_status = 0;
  bool timed_out = false;
  bool output_open = true;
  std::array<char, 65536> buffer{};
  for (;;) {
    const pid_t reaped = ::waitpid(pid, &wait_status, WNOHANG);
    if (reaped == pid) break;
    if (Clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      while (::waitpid(pid, &wait_status, 0) < 0 && errno == EINTR) {
      }
      timed_out = true;
      break;
    }
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    const int wait_ms = static_cast<int>(std::clamp<long long>(remaining, 0, 10));
    if (output_open) {
      pollfd pfd{output_read.get(), POLLIN, 0};
      if (::poll(&pfd, 1, wait_ms) > 0) {
        const ssize_t n = ::read(output_read.get(), buffer.data(), buffer.size());
        if (n > 0) {
          log.append(std::string_view(buffer.data(), static_cast<std::size_t>(n)));
        } else if (n == 0) {
          output_open = false;
        }
      }
    } else {
      ::usleep(static_cast<useconds_t>(wait_ms) * 1000);
    }
  }
  outcome.wall_clock_seconds = seconds_since(start);

  // Reap the rest of the process group so nothing outlives the run.
  ::kill(-pid, SIGKILL);
  if (output_open) drain(output_read.get(), log, 50);

  if (timed_out) {
    outcome.termination = SandboxOutcome::Termination::TimedOut;
    if (WIFSIGNALED(wait_status)) outcome.signal = WTERMSIG(wait_status);
  } else if (WIFEXITED(wait_status)) {
    outcome.termination = SandboxOutcome::Termination::Exited;
    outcome.exit_code = WEXITSTATUS(wait_status);
  } else {
    outcome.termination = SandboxOutcome::Termination::Signaled;
    outcome.signal = WTERMSIG(wait_status);
    outcome.exit_code = 128 + outcome.signal;
  }
  return outcome;
}

}  // namespace rboard
