#include "rboard/zip.hpp"

#include <zlib.h>

#include <fstream>
#include <limits>
#include <set>

#include "rboard/error.hpp"

namespace rboard::zip {
namespace {

constexpr std::uint32_t kLocalSignature = 0x04034b50;
constexpr std::uint32_t kCentralSignature = 0x02014b50;
constexpr std::uint32_t kEndSignature = 0x06054b50;
constexpr std::size_t kLocalHeaderSize = 30;
constexpr std::size_t kCentralHeaderSize = 46;
constexpr std::size_t kEndRecordSize = 22;
constexpr std::uint16_t kDosDate1980 = (0 << 9) | (1 << 5) | 1;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put32(std::string& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v & 0xffff));
  put16(out, static_cast<std::uint16_t>(v >> 16));
}

[[noreturn]] void malformed(const std::string& why) {
  throw Error(ErrorCode::MalformedArchive, "malformed archive: " + why);
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return static_cast<std::uint16_t>(byte(at) | (byte(at + 1) << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    return static_cast<std::uint32_t>(u16(at)) |
           (static_cast<std::uint32_t>(u16(at + 2)) << 16);
  }
  std::string_view slice(std::size_t at, std::size_t length) const {
    need(at, length);
    return bytes_.substr(at, length);
  }
  std::size_t size() const { return bytes_.size(); }

 private:
  void need(std::size_t at, std::size_t length) const {
    if (at > bytes_.size() || length > bytes_.size() - at) malformed("truncated data");
  }
  unsigned byte(std::size_t at) const { return static_cast<unsigned char>(bytes_[at]); }

  std::string_view bytes_;
};

std::string deflate_raw(std::string_view data) {
  z_stream stream{};
  if (deflateInit2(&stream, Z_BEST_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorCode::Io, "zip: deflate init failed");
  }
  std::string out(deflateBound(&stream, static_cast<uLong>(data.size())), '\0');
  stream.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  stream.avail_in = static_cast<uInt>(data.size());
  stream.next_out = reinterpret_cast<Bytef*>(out.data());
  stream.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&stream, Z_FINISH);
  deflateEnd(&stream);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::Io, "zip: deflate failed");
  out.resize(stream.total_out);
  return out;
}

std::string inflate_raw(std::string_view data, std::uint32_t expected_size) {
  z_stream stream{};
  if (inflateInit2(&stream, -MAX_WBITS) != Z_OK) {
    throw Error(ErrorCode::Io, "zip: inflate init failed");
  }
  // One spare byte detects streams that expand past their declared size.
  std::string out(static_cast<std::size_t>(expected_size) + 1, '\0');
  stream.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  stream.avail_in = static_cast<uInt>(data.size());
  stream.next_out = reinterpret_cast<Bytef*>(out.data());
  stream.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&stream, Z_FINISH);
  const auto produced = stream.total_out;
  inflateEnd(&stream);
  if (rc != Z_STREAM_END || produced != expected_size) {
    malformed("compressed stream does not match declared size");
  }
  out.resize(produced);
  return out;
}

std::uint32_t crc_of(std::string_view data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < data.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(data.size() - offset, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + offset), chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void Writer::add(std::string name, std::string_view data) {
  if (!is_safe_entry_name(name)) {
    throw Error(ErrorCode::InvalidArgument, "zip: unsafe entry name '" + name + "'");
  }
  if (data.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "zip: entry too large for a non-zip64 archive");
  }
  Pending entry;
  entry.name = std::move(name);
  entry.crc = crc_of(data);
  entry.size = static_cast<std::uint32_t>(data.size());
  entry.offset = static_cast<std::uint32_t>(body_.size());

  std::string payload;
  if (method_ == Method::Deflate && !data.empty()) {
    payload = deflate_raw(data);
    entry.method = Method::Deflate;
    if (payload.size() >= data.size()) {
      payload.assign(data);
      entry.method = Method::Stored;
    }
  } else {
    payload.assign(data);
    entry.method = Method::Stored;
  }
  entry.compressed_size = static_cast<std::uint32_t>(payload.size());

  put32(body_, kLocalSignature);
  put16(body_, 20);
  put16(body_, 0x0800);  // UTF-8 names
  put16(body_, static_cast<std::uint16_t>(entry.method));
  put16(body_, 0);
  put16(body_, kDosDate1980);
  put32(body_, entry.crc);
  put32(body_, entry.compressed_size);
  put32(body_, entry.size);
  put16(body_, static_cast<std::uint16_t>(entry.name.size()));
  put16(body_, 0);
  body_ += entry.name;
  body_ += payload;
  entries_.push_back(std::move(entry));
}

std::string Writer::finish() && {
  std::string out = std::move(body_);
  const auto directory_offset = static_cast<std::uint32_t>(out.size());
  for (const Pending& entry : entries_) {
    put32(out, kCentralSignature);
    put16(out, (3 << 8) | 20);  // made by: unix
    put16(out, 20);
    put16(out, 0x0800);
    put16(out, static_cast<std::uint16_t>(entry.method));
    put16(out, 0);
    put16(out, kDosDate1980);
    put32(out, entry.crc);
    put32(out, entry.compressed_size);
    put32(out, entry.size);
    put16(out, static_cast<std::uint16_t>(entry.name.size()));
    put16(out, 0);
    put16(out, 0);
    put16(out, 0);
    put16(out, 0);
    put32(out, 0100644u << 16);
    put32(out, entry.offset);
    out += entry.name;
  }
  const auto directory_size = static_cast<std::uint32_t>(out.size() - directory_offset);
  put32(out, kEndSignature);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries_.size()));
  put16(out, static_cast<std::uint16_t>(entries_.size()));
  put32(out, directory_size);
  put32(out, directory_offset);
  put16(out, 0);
  return out;
}

bool is_safe_entry_name(std::string_view name) noexcept {
  if (name.empty() || name.front() == '/' || name.find('\\') != std::string_view::npos ||
      name.find('\0') != std::string_view::npos) {
    return false;
  }
  std::size_t start = 0;
  while (start <= name.size()) {
    const auto end = std::min(name.find('/', start), name.size());
    const auto part = name.substr(start, end - start);
    if (part == "..") return false;
    if (part.empty() && end != name.size()) return false;  // "a//b"
    start = end + 1;
  }
  return true;
}

std::vector<Entry> read(std::string_view archive, std::uint64_t max_total_uncompressed) {
  const Cursor in(archive);
  if (archive.size() < kEndRecordSize) malformed("too short for an end-of-directory record");

  // The end record sits in the last 22 + 65535 bytes (variable-length comment).
  std::size_t end_at = std::string_view::npos;
  const std::size_t search_floor =
      archive.size() > kEndRecordSize + 0xffff ? archive.size() - kEndRecordSize - 0xffff : 0;
  for (std::size_t pos = archive.size() - kEndRecordSize + 1; pos-- > search_floor;) {
    if (in.u32(pos) == kEndSignature &&
        pos + kEndRecordSize + in.u16(pos + 20) == archive.size()) {
      end_at = pos;
      break;
    }
  }
  if (end_at == std::string_view::npos) malformed("end-of-directory record not found");

  const std::uint16_t count = in.u16(end_at + 10);
  const std::uint32_t directory_size = in.u32(end_at + 12);
  const std::uint32_t directory_offset = in.u32(end_at + 16);
  if (in.u16(end_at + 4) != 0 || in.u16(end_at + 6) != 0 || in.u16(end_at + 8) != count) {
    malformed("multi-volume archives are not supported");
  }
  if (count == 0xffff || directory_offset == 0xffffffff || directory_size == 0xffffffff) {
    malformed("zip64 archives are not supported");
  }
  if (static_cast<std::uint64_t>(directory_offset) + directory_size > end_at) {
    malformed("central directory overlaps end record");
  }

  struct Header {
    std::string name;
    std::uint16_t flags, method;
    std::uint32_t crc, compressed_size, size, local_offset;
  };
  std::vector<Header> headers;
  headers.reserve(count);
  std::uint64_t declared_total = 0;
  std::set<std::string> names;
  std::size_t at = directory_offset;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (in.u32(at) != kCentralSignature) malformed("bad central directory signature");
    Header h;
    h.flags = in.u16(at + 8);
    h.method = in.u16(at + 10);
    h.crc = in.u32(at + 16);
    h.compressed_size = in.u32(at + 20);
    h.size = in.u32(at + 24);
    const std::uint16_t name_length = in.u16(at + 28);
    const std::uint16_t extra_length = in.u16(at + 30);
    const std::uint16_t comment_length = in.u16(at + 32);
    h.local_offset = in.u32(at + 42);
    h.name = std::string(in.slice(at + kCentralHeaderSize, name_length));
    at += kCentralHeaderSize + name_length + extra_length + comment_length;

    if (h.flags & 0x1) malformed("encrypted entries are not supported");
    if (h.method != 0 && h.method != 8) malformed("unsupported compression method");
    if (h.size == 0xffffffff || h.compressed_size == 0xffffffff) {
      malformed("zip64 entries are not supported");
    }
    if (!is_safe_entry_name(h.name)) malformed("unsafe entry name");
    if (!names.insert(h.name).second) malformed("duplicate entry name");
    declared_total += h.size;
    headers.push_back(std::move(h));
  }
  if (at > static_cast<std::size_t>(directory_offset) + directory_size) {
    malformed("central directory exceeds its declared size");
  }
  if (declared_total > max_total_uncompressed) {
    throw Error(ErrorCode::ArchiveTooLarge,
                "archive expands to " + std::to_string(declared_total) +
                    " bytes, limit is " + std::to_string(max_total_uncompressed));
  }

  std::vector<Entry> entries;
  entries.reserve(headers.size());
  for (const Header& h : headers) {
    if (in.u32(h.local_offset) != kLocalSignature) malformed("bad local header signature");
    const std::size_t data_at = static_cast<std::size_t>(h.local_offset) + kLocalHeaderSize +
                                in.u16(h.local_offset + 26) + in.u16(h.local_offset + 28);
    if (data_at > directory_offset) malformed("entry data overlaps central directory");
    const std::string_view payload = in.slice(data_at, h.compressed_size);

    Entry entry;
    entry.name = h.name;
    entry.is_directory = !h.name.empty() && h.name.back() == '/';
    if (h.method == 0) {
      if (h.compressed_size != h.size) malformed("stored entry size mismatch");
      entry.data.assign(payload);
    } else {
      entry.data = inflate_raw(payload, h.size);
    }
    if (crc_of(entry.data) != h.crc) malformed("CRC mismatch in '" + h.name + "'");
    entries.push_back(std::move(entry));
  }
  return entries;
}

void extract(const std::vector<Entry>& entries, const std::filesystem::path& destination) {
  namespace fs = std::filesystem;
  for (const Entry& entry : entries) {
    if (!is_safe_entry_name(entry.name)) malformed("unsafe entry name");
    const fs::path target = destination / fs::path(entry.name);
    if (entry.is_directory) {
      fs::create_directories(target);
      continue;
    }
    fs::create_directories(target.parent_path());
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    out.write(entry.data.data(), static_cast<std::streamsize>(entry.data.size()));
    if (!out) throw Error(ErrorCode::Io, "failed to extract " + entry.name);
  }
}

}  // namespace rboard::zip
