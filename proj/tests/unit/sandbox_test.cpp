#include <gtest/gtest.h>

#include <pwd.h>
#include <signal.h>
#include <unistd.h>

#include <fstream>
#include <thread>

#include "rboard/error.hpp"
#include "rboard/fsutil.hpp"
#include "rboard/sandbox.hpp"

namespace rboard {
namespace {

using Termination = SandboxOutcome::Termination;

SandboxRequest shell(const std::filesystem::path& dir, const std::string& script,
                     double timeout = 10.0) {
  SandboxRequest request;
  request.working_dir = dir;
  request.argv = {"/bin/sh", "-c", script};
  request.environment = {"PATH=/usr/bin:/bin", "MARK=sandboxed"};
  request.limits.wall_timeout_seconds = timeout;
  request.limits.memory_bytes = 1ULL << 30;
  return request;
}

TEST(SandboxLimits, Validate) {
  SandboxLimits limits;
  EXPECT_NO_THROW(limits.validate());
  limits.wall_timeout_seconds = 0;
  EXPECT_THROW(limits.validate(), Error);
  limits = {};
  limits.memory_bytes = 0;
  EXPECT_THROW(limits.validate(), Error);
  limits = {};
  limits.log_bound_bytes = 0;
  EXPECT_THROW(limits.validate(), Error);
}

TEST(BoundedLog, KeepsHeadAndMarks) {
  BoundedLog log(1024);
  log.append("hello ");
  log.append("world");
  EXPECT_EQ(log.snapshot(), "hello world");
  EXPECT_FALSE(log.truncated());

  BoundedLog small(1024);
  for (int i = 0; i < 100; ++i) small.append(std::string(100, 'a' + i % 26));
  const std::string text = small.snapshot();
  EXPECT_TRUE(small.truncated());
  EXPECT_LE(text.size(), 1024u);
  EXPECT_EQ(text.substr(0, 100), std::string(100, 'a'));
  EXPECT_NE(text.find("output truncated"), std::string::npos);
  EXPECT_EQ(small.total_bytes(), 10000u);
}

TEST(FindExecutable, ResolvesPath) {
  const auto sh = find_executable("sh");
  ASSERT_TRUE(sh);
  EXPECT_TRUE(sh->is_absolute());
  EXPECT_EQ(find_executable("/bin/sh"), std::filesystem::path("/bin/sh"));
  EXPECT_FALSE(find_executable("definitely-not-a-program-xyz"));
}

TEST(Sandbox, ExitCodeAndOutput) {
  TempDir dir("sandbox-");
  BoundedLog log(4096);
  const auto out = run_sandboxed(shell(dir.path(), "echo out; echo err >&2; exit 3"), log);
  EXPECT_EQ(out.termination, Termination::Exited);
  EXPECT_EQ(out.exit_code, 3);
  EXPECT_NE(log.snapshot().find("out\n"), std::string::npos);
  EXPECT_NE(log.snapshot().find("err\n"), std::string::npos);
  EXPECT_GT(out.wall_clock_seconds, 0.0);
}

TEST(Sandbox, WorkingDirEnvironmentAndStdin) {
  TempDir dir("sandbox-");
  std::filesystem::permissions(dir.path(), std::filesystem::perms::all);
  BoundedLog log(4096);
  const auto out = run_sandboxed(
      shell(dir.path(), "pwd; echo \"mark=$MARK home=${HOME:-unset}\"; cat; echo done"), log);
  EXPECT_EQ(out.exit_code, 0);
  const std::string text = log.snapshot();
  EXPECT_NE(text.find(std::filesystem::canonical(dir.path()).string()), std::string::npos);
  EXPECT_NE(text.find("mark=sandboxed home=unset"), std::string::npos);
  EXPECT_NE(text.find("done"), std::string::npos);
}

TEST(Sandbox, Signaled) {
  TempDir dir("sandbox-");
  BoundedLog log(4096);
  const auto out = run_sandboxed(shell(dir.path(), "kill -SEGV $$"), log);
  EXPECT_EQ(out.termination, Termination::Signaled);
  EXPECT_EQ(out.signal, SIGSEGV);
}

TEST(Sandbox, TimeoutKillsWholeGroup) {
  TempDir dir("sandbox-");
  std::filesystem::permissions(dir.path(), std::filesystem::perms::all);
  BoundedLog log(4096);
  // The background child would create `survivor` after the deadline.
  const auto out = run_sandboxed(
      shell(dir.path(), "(sleep 3; touch survivor) & echo started; sleep 100", 1.0), log);
  EXPECT_EQ(out.termination, Termination::TimedOut);
  EXPECT_GE(out.wall_clock_seconds, 1.0);
  EXPECT_LT(out.wall_clock_seconds, 2.0);
  std::this_thread::sleep_for(std::chrono::milliseconds(3000));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "survivor"));
}

TEST(Sandbox, GroupKilledAfterMainExits) {
  TempDir dir("sandbox-");
  std::filesystem::permissions(dir.path(), std::filesystem::perms::all);
  BoundedLog log(4096);
  const auto out =
      run_sandboxed(shell(dir.path(), "(sleep 1; touch survivor) >/dev/null 2>&1 & exit 0"), log);
  EXPECT_EQ(out.termination, Termination::Exited);
  std::this_thread::sleep_for(std::chrono::milliseconds(2000));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "survivor"));
}

TEST(Sandbox, LogIsBounded) {
  TempDir dir("sandbox-");
  auto request = shell(dir.path(), "head -c 5000000 /dev/zero | tr '\\0' y; exit 1");
  request.limits.log_bound_bytes = 2048;
  BoundedLog log(request.limits.log_bound_bytes);
  const auto out = run_sandboxed(request, log);
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_LE(log.snapshot().size(), 2048u);
  EXPECT_TRUE(log.truncated());
  EXPECT_EQ(log.total_bytes(), 5000000u);
}

TEST(Sandbox, MemoryLimitApplies) {
  TempDir dir("sandbox-");
  auto request = shell(dir.path(), "");
  request.argv = {"python3", "-c", "b = bytearray(512 * 1024 * 1024); print('allocated')"};
  request.environment = {"PATH=/usr/bin:/bin"};
  request.limits.memory_bytes = 256ULL << 20;
  BoundedLog log(8192);
  const auto out = run_sandboxed(request, log);
  EXPECT_EQ(out.termination, Termination::Exited);
  EXPECT_NE(out.exit_code, 0);
  EXPECT_EQ(log.snapshot().find("allocated"), std::string::npos);
  EXPECT_NE(log.snapshot().find("MemoryError"), std::string::npos);
}

TEST(Sandbox, FileSizeLimitApplies) {
  TempDir dir("sandbox-");
  std::filesystem::permissions(dir.path(), std::filesystem::perms::all);
  auto request = shell(dir.path(), "head -c 200000 /dev/zero > big; echo status=$?");
  request.limits.max_output_bytes = 65536;
  BoundedLog log(4096);
  run_sandboxed(request, log);
  EXPECT_LE(std::filesystem::file_size(dir.path() / "big"), 65536u);
  EXPECT_EQ(log.snapshot().find("status=0"), std::string::npos);
}

TEST(Sandbox, NetworkUnavailable) {
  TempDir dir("sandbox-");
  auto request = shell(dir.path(), "");
  request.argv = {"python3", "-c",
                  "import socket\n"
                  "s = socket.socket()\n"
                  "s.settimeout(2)\n"
                  "try:\n"
                  "    s.connect(('1.1.1.1', 80)); print('connected')\n"
                  "except OSError as e:\n"
                  "    print('blocked', e.errno)\n"
                  "import os; print('ifaces', sorted(os.listdir('/sys/class/net')))\n"};
  request.environment = {"PATH=/usr/bin:/bin"};
  BoundedLog log(8192);
  const auto out = run_sandboxed(request, log);
  EXPECT_EQ(out.exit_code, 0) << log.snapshot();
  EXPECT_NE(log.snapshot().find("blocked"), std::string::npos) << log.snapshot();
}

TEST(Sandbox, RunsAsRequestedUser) {
  if (::geteuid() != 0) GTEST_SKIP() << "needs root";
  const passwd* nobody = ::getpwnam("nobody");
  ASSERT_NE(nobody, nullptr);
  TempDir dir("sandbox-");
  std::filesystem::permissions(dir.path(), std::filesystem::perms::all);
  auto request = shell(dir.path(), "id -u; cat /etc/shadow >/dev/null 2>&1 && echo readable; true");
  request.run_as = std::make_pair(nobody->pw_uid, nobody->pw_gid);
  BoundedLog log(4096);
  const auto out = run_sandboxed(request, log);
  EXPECT_EQ(out.exit_code, 0);
  EXPECT_EQ(log.snapshot().substr(0, log.snapshot().find('\n')), std::to_string(nobody->pw_uid));
  EXPECT_EQ(log.snapshot().find("readable"), std::string::npos);
}

TEST(Sandbox, SpawnFailureIsReported) {
  TempDir dir("sandbox-");
  auto request = shell(dir.path(), "");
  request.argv = {"/nonexistent/program"};
  BoundedLog log(4096);
  const auto out = run_sandboxed(request, log);
  EXPECT_EQ(out.termination, Termination::SpawnFailed);
  EXPECT_FALSE(out.spawn_error.empty());

  request = shell(dir.path() / "missing-dir", "true");
  const auto missing_dir = run_sandboxed(request, log);
  EXPECT_EQ(missing_dir.termination, Termination::SpawnFailed);
}

TEST(Sandbox, ConcurrentRunsAreIndependent) {
  TempDir dir("sandbox-");
  std::vector<std::thread> threads;
  std::vector<int> codes(4, -1);
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] {
      BoundedLog log(1024);
      codes[i] = run_sandboxed(shell(dir.path(), "sleep 0.3; exit " + std::to_string(i + 10)), log)
                     .exit_code;
    });
  }
  for (auto& t : threads) t.join();
  for (int i = 0; i < 4; ++i) EXPECT_EQ(codes[i], i + 10);
}

}  // namespace
}  // namespace rboard
