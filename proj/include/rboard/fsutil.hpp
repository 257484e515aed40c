#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace rboard {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary, fsyncs, then renames over `path`. Readers
// see either the previous complete file or the new one.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

void remove_all_noexcept(const std::filesystem::path& path) noexcept;

// Owns a freshly created directory and removes it on destruction.
class TempDir {
 public:
  explicit TempDir(const std::filesystem::path& parent = std::filesystem::temp_directory_path(),
                   std::string_view prefix = "rboard-");
  // Creates the directory under the system temp directory.
  explicit TempDir(const char* prefix) : TempDir(std::filesystem::temp_directory_path(), prefix) {}
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  TempDir(TempDir&& other) noexcept;
  TempDir& operator=(TempDir&& other) noexcept;
  ~TempDir();

  const std::filesystem::path& path() const noexcept { return path_; }
  // Keeps the directory on disk and returns its path.
  std::filesystem::path release() noexcept;

 private:
  std::filesystem::path path_;
};

// Fixed on-disk layout below the platform root.
class Layout {
 public:
  explicit Layout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path data_root() const { return root_ / "data"; }
  std::filesystem::path public_root() const { return root_ / "public"; }
  std::filesystem::path hidden_root() const { return root_ / "hidden"; }
  std::filesystem::path staging_root() const { return root_ / "staging"; }
  std::filesystem::path store_root() const { return root_ / "store"; }
  std::filesystem::path archives_root() const { return root_ / "archives"; }
  std::filesystem::path runs_root() const { return root_ / "runs"; }
  std::filesystem::path work_root() const { return root_ / "work"; }

  std::filesystem::path data_dir(std::string_view id) const { return data_root() / id; }
  std::filesystem::path public_dir(std::string_view id) const { return public_root() / id; }
  std::filesystem::path hidden_dir(std::string_view id) const { return hidden_root() / id; }
  std::filesystem::path run_dir(std::string_view id) const { return runs_root() / id; }

  // Creates every directory; hidden/ is restricted to the owner.
  void create() const;

 private:
  std::filesystem::path root_;
};

}  // namespace rboard
