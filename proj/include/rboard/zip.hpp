#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rboard::zip {

struct Entry {
  std::string name;  // forward-slash separated, relative
  std::string data;
  bool is_directory = false;
};

enum class Method : std::uint16_t { Stored = 0, Deflate = 8 };

// Builds a zip archive in memory. Timestamps are pinned to 1980-01-01 and
// entries are written in insertion order, so identical input yields
// identical bytes.
class Writer {
 public:
  explicit Writer(Method method = Method::Deflate) : method_(method) {}

  void add(std::string name, std::string_view data);
  std::string finish() &&;

 private:
  struct Pending {
    std::string name;
    std::uint32_t crc = 0;
    std::uint32_t compressed_size = 0;
    std::uint32_t size = 0;
    std::uint32_t offset = 0;
    Method method = Method::Stored;
  };

  Method method_;
  std::string body_;
  std::vector<Pending> entries_;
};

// Parses and fully decompresses an archive, verifying CRCs. Throws
// Error(MalformedArchive) for anything it cannot read safely (truncation,
// zip64, encryption, unsafe paths, duplicate names) and Error(ArchiveTooLarge)
// when declared uncompressed sizes exceed `max_total_uncompressed`.
std::vector<Entry> read(std::string_view archive, std::uint64_t max_total_uncompressed);

// Writes entries below `destination`, which must already exist.
void extract(const std::vector<Entry>& entries, const std::filesystem::path& destination);

bool is_safe_entry_name(std::string_view name) noexcept;

}  // namespace rboard::zip
