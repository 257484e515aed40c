#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

struct sqlite3;

namespace rboard {

enum class RecordKind { Dataset, Submission, Run, Result };

std::string_view to_string(RecordKind kind) noexcept;

// Sealed records reject every later put; terminal runs are written sealed.
enum class Finality { Mutable, Sealed };

// Durable key-value records backed by an embedded SQLite database in WAL
// mode. Each put is atomic; transact() groups several reads and writes into
// one atomic unit. All methods are thread-safe.
class Store {
 public:
  using Entry = std::pair<std::string, std::string>;  // key, value

  class Transaction {
   public:
    std::optional<std::string> find(RecordKind kind, std::string_view key) const;
    std::string get(RecordKind kind, std::string_view key) const;
    void put(RecordKind kind, std::string_view key, std::string_view value,
             Finality finality = Finality::Mutable);
    std::vector<Entry> list(RecordKind kind, std::string_view key_prefix = {}) const;

   private:
    friend class Store;
    explicit Transaction(Store& store) : store_(store) {}
    Store& store_;
  };

  explicit Store(const std::filesystem::path& directory);
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;
  ~Store();

  void put(RecordKind kind, std::string_view key, std::string_view value,
           Finality finality = Finality::Mutable);
  // Throws NotFound.
  std::string get(RecordKind kind, std::string_view key) const;
  std::optional<std::string> find(RecordKind kind, std::string_view key) const;
  // Sorted by key.
  std::vector<Entry> list(RecordKind kind, std::string_view key_prefix = {}) const;

  template <typename Fn>
  decltype(auto) transact(Fn&& fn) {
    const std::lock_guard lock(mutex_);
    begin();
    try {
      Transaction tx(*this);
      if constexpr (std::is_void_v<decltype(fn(tx))>) {
        fn(tx);
        commit();
      } else {
        auto result = fn(tx);
        commit();
        return result;
      }
    } catch (...) {
      rollback();
      throw;
    }
  }

 private:
  void begin();
  void commit();
  void rollback() noexcept;
  void exec(const char* sql);

  std::optional<std::string> find_unlocked(RecordKind kind, std::string_view key) const;
  void put_unlocked(RecordKind kind, std::string_view key, std::string_view value,
                    Finality finality);
  std::vector<Entry> list_unlocked(RecordKind kind, std::string_view key_prefix) const;

  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

// Content-addressed blobs stored as <dir>/<sha256>.zip.
class ArchiveStore {
 public:
  explicit ArchiveStore(std::filesystem::path directory);

  // Stores the bytes (once per distinct content) and returns their SHA-256.
  std::string put(std::string_view bytes);
  // Throws NotFound, or IntegrityError if the blob no longer hashes to `checksum`.
  std::string get(std::string_view checksum) const;
  bool contains(std::string_view checksum) const;

 private:
  std::filesystem::path path_for(std::string_view checksum) const;

  std::filesystem::path directory_;
  std::mutex write_mutex_;
};

struct CodeArchive {
  std::string bytes;
  std::string checksum;
};

// The archive a submission was accepted with; its bytes hash to `checksum`.
CodeArchive fetch_code_archive(const Store& store, const ArchiveStore& archives,
                               std::string_view submission_id);

}  // namespace rboard
