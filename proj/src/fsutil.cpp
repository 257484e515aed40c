#include "rboard/fsutil.hpp"

#include <fcntl.h>
#include <stdlib.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "rboard/error.hpp"

namespace rboard {
namespace fs = std::filesystem;

namespace {

void fsync_path(const fs::path& path, int flags) {
  const int fd = ::open(path.c_str(), flags | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.filename().string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const fs::path tmp = path.parent_path() /
                       ("." + path.filename().string() + ".tmp" + std::to_string(rng()));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) {
    throw Error(ErrorCode::Io, "cannot create " + tmp.filename().string() + ": " +
                                   std::strerror(errno));
  }
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int saved = errno;
      ::close(fd);
      ::unlink(tmp.c_str());
      throw Error(ErrorCode::Io, std::string("write failed: ") + std::strerror(saved));
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    const int saved = errno;
    ::unlink(tmp.c_str());
    throw Error(ErrorCode::Io, std::string("rename failed: ") + std::strerror(saved));
  }
  fsync_path(path.parent_path(), O_RDONLY | O_DIRECTORY);
}

void remove_all_noexcept(const fs::path& path) noexcept {
  std::error_code ec;
  fs::remove_all(path, ec);
}

TempDir::TempDir(const fs::path& parent, std::string_view prefix) {
  fs::create_directories(parent);
  std::string pattern = (parent / (std::string(prefix) + "XXXXXX")).string();
  if (::mkdtemp(pattern.data()) == nullptr) {
    throw Error(ErrorCode::Io, std::string("mkdtemp failed: ") + std::strerror(errno));
  }
  path_ = pattern;
}

TempDir::TempDir(TempDir&& other) noexcept : path_(other.release()) {}

TempDir& TempDir::operator=(TempDir&& other) noexcept {
  if (this != &other) {
    if (!path_.empty()) remove_all_noexcept(path_);
    path_ = other.release();
  }
  return *this;
}

TempDir::~TempDir() {
  if (!path_.empty()) remove_all_noexcept(path_);
}

fs::path TempDir::release() noexcept {
  fs::path out = std::move(path_);
  path_.clear();
  return out;
}

void Layout::create() const {
  for (const fs::path& dir : {data_root(), public_root(), hidden_root(), staging_root(),
                              store_root(), archives_root(), runs_root(), work_root()}) {
    fs::create_directories(dir);
  }
  fs::permissions(hidden_root(), fs::perms::owner_all, fs::perm_options::replace);
}

}  // namespace rboard
