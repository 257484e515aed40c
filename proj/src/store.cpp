#include "rboard/store.hpp"

#include <sqlite3.h>

#include <memory>

#include "rboard/error.hpp"
#include "rboard/fsutil.hpp"
#include "rboard/records.hpp"
#include "rboard/sha256.hpp"
#include "rboard/util.hpp"

namespace rboard {
namespace fs = std::filesystem;

namespace {

struct StatementDeleter {
  void operator()(sqlite3_stmt* stmt) const noexcept { sqlite3_finalize(stmt); }
};
using Statement = std::unique_ptr<sqlite3_stmt, StatementDeleter>;

[[noreturn]] void fail(sqlite3* db, const std::string& what) {
  throw Error(ErrorCode::Io, "store: " + what + ": " + sqlite3_errmsg(db));
}

Statement prepare(sqlite3* db, const char* sql) {
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db, sql, -1, &stmt, nullptr) != SQLITE_OK) fail(db, "prepare");
  return Statement(stmt);
}

void bind_text(sqlite3_stmt* stmt, int index, std::string_view text) {
  // A null pointer would bind SQL NULL, which never compares equal.
  sqlite3_bind_text(stmt, index, text.data() ? text.data() : "", static_cast<int>(text.size()),
                    SQLITE_TRANSIENT);
}

std::string column_blob(sqlite3_stmt* stmt, int index) {
  const auto* data = static_cast<const char*>(sqlite3_column_blob(stmt, index));
  const int size = sqlite3_column_bytes(stmt, index);
  return data ? std::string(data, static_cast<std::size_t>(size)) : std::string();
}

}  // namespace

std::string_view to_string(RecordKind kind) noexcept {
  switch (kind) {
    case RecordKind::Dataset: return "dataset";
    case RecordKind::Submission: return "submission";
    case RecordKind::Run: return "run";
    case RecordKind::Result: return "result";
  }
  return "unknown";
}

Store::Store(const fs::path& directory) {
  fs::create_directories(directory);
  const fs::path file = directory / "records.db";
  if (sqlite3_open_v2(file.c_str(), &db_,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    const std::string message = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(ErrorCode::Io, "store: cannot open database: " + message);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=FULL");
  exec(
      "CREATE TABLE IF NOT EXISTS records ("
      " kind TEXT NOT NULL, key TEXT NOT NULL, value BLOB NOT NULL,"
      " sealed INTEGER NOT NULL DEFAULT 0, updated_at TEXT NOT NULL,"
      " PRIMARY KEY (kind, key)) WITHOUT ROWID");
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) {
  char* message = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &message) != SQLITE_OK) {
    const std::string text = message ? message : "unknown error";
    sqlite3_free(message);
    throw Error(ErrorCode::Io, std::string("store: ") + text);
  }
}

void Store::begin() { exec("BEGIN IMMEDIATE"); }
void Store::commit() { exec("COMMIT"); }
void Store::rollback() noexcept { sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr); }

std::optional<std::string> Store::find_unlocked(RecordKind kind, std::string_view key) const {
  const Statement stmt = prepare(db_, "SELECT value FROM records WHERE kind = ? AND key = ?");
  bind_text(stmt.get(), 1, to_string(kind));
  bind_text(stmt.get(), 2, key);
  const int rc = sqlite3_step(stmt.get());
  if (rc == SQLITE_ROW) return column_blob(stmt.get(), 0);
  if (rc != SQLITE_DONE) fail(db_, "read");
  return std::nullopt;
}

void Store::put_unlocked(RecordKind kind, std::string_view key, std::string_view value,
                         Finality finality) {
  if (key.empty()) throw Error(ErrorCode::InvalidArgument, "store: empty key");
  {
    const Statement stmt = prepare(db_, "SELECT sealed FROM records WHERE kind = ? AND key = ?");
    bind_text(stmt.get(), 1, to_string(kind));
    bind_text(stmt.get(), 2, key);
    const int rc = sqlite3_step(stmt.get());
    if (rc == SQLITE_ROW && sqlite3_column_int(stmt.get(), 0) != 0) {
      throw Error(ErrorCode::ImmutableRecord, std::string(to_string(kind)) + " '" +
                                                  std::string(key) + "' is final and cannot change");
    }
    if (rc != SQLITE_ROW && rc != SQLITE_DONE) fail(db_, "read");
  }
  const Statement stmt = prepare(
      db_,
      "INSERT INTO records (kind, key, value, sealed, updated_at) VALUES (?, ?, ?, ?, ?) "
      "ON CONFLICT(kind, key) DO UPDATE SET value = excluded.value, sealed = excluded.sealed, "
      "updated_at = excluded.updated_at");
  bind_text(stmt.get(), 1, to_string(kind));
  bind_text(stmt.get(), 2, key);
  if (value.empty()) {
    sqlite3_bind_zeroblob(stmt.get(), 3, 0);
  } else {
    sqlite3_bind_blob(stmt.get(), 3, value.data(), static_cast<int>(value.size()), SQLITE_TRANSIENT);
  }
  sqlite3_bind_int(stmt.get(), 4, finality == Finality::Sealed ? 1 : 0);
  bind_text(stmt.get(), 5, utc_now_iso8601());
  if (sqlite3_step(stmt.get()) != SQLITE_DONE) fail(db_, "write");
}

std::vector<Store::Entry> Store::list_unlocked(RecordKind kind,
                                               std::string_view key_prefix) const {
  const Statement stmt = prepare(
      db_,
      "SELECT key, value FROM records WHERE kind = ? AND substr(key, 1, ?) = ? ORDER BY key");
  bind_text(stmt.get(), 1, to_string(kind));
  sqlite3_bind_int(stmt.get(), 2, static_cast<int>(key_prefix.size()));
  bind_text(stmt.get(), 3, key_prefix);
  std::vector<Entry> out;
  int rc = 0;
  while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
    const auto* key = reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), 0));
    out.emplace_back(key ? key : "", column_blob(stmt.get(), 1));
  }
  if (rc != SQLITE_DONE) fail(db_, "list");
  return out;
}

void Store::put(RecordKind kind, std::string_view key, std::string_view value,
                Finality finality) {
  transact([&](Transaction& tx) { tx.put(kind, key, value, finality); });
}

std::string Store::get(RecordKind kind, std::string_view key) const {
  auto value = find(kind, key);
  if (!value) {
    throw Error(ErrorCode::NotFound,
                std::string(to_string(kind)) + " '" + std::string(key) + "' not found");
  }
  return std::move(*value);
}

std::optional<std::string> Store::find(RecordKind kind, std::string_view key) const {
  const std::lock_guard lock(mutex_);
  return find_unlocked(kind, key);
}

std::vector<Store::Entry> Store::list(RecordKind kind, std::string_view key_prefix) const {
  const std::lock_guard lock(mutex_);
  return list_unlocked(kind, key_prefix);
}

std::optional<std::string> Store::Transaction::find(RecordKind kind, std::string_view key) const {
  return store_.find_unlocked(kind, key);
}

std::string Store::Transaction::get(RecordKind kind, std::string_view key) const {
  auto value = find(kind, key);
  if (!value) {
    throw Error(ErrorCode::NotFound,
                std::string(to_string(kind)) + " '" + std::string(key) + "' not found");
  }
  return std::move(*value);
}

void Store::Transaction::put(RecordKind kind, std::string_view key, std::string_view value,
                             Finality finality) {
  store_.put_unlocked(kind, key, value, finality);
}

std::vector<Store::Entry> Store::Transaction::list(RecordKind kind,
                                                   std::string_view key_prefix) const {
  return store_.list_unlocked(kind, key_prefix);
}

ArchiveStore::ArchiveStore(fs::path directory) : directory_(std::move(directory)) {
  fs::create_directories(directory_);
}

fs::path ArchiveStore::path_for(std::string_view checksum) const {
  if (!is_sha256_hex(checksum)) {
    throw Error(ErrorCode::InvalidArgument, "not a SHA-256 digest");
  }
  return directory_ / (std::string(checksum) + ".zip");
}

std::string ArchiveStore::put(std::string_view bytes) {
  std::string checksum = sha256_hex(bytes);
  const fs::path path = path_for(checksum);
  const std::lock_guard lock(write_mutex_);
  if (!fs::exists(path) || sha256_file_hex(path) != checksum) write_file_atomic(path, bytes);
  return checksum;
}

std::string ArchiveStore::get(std::string_view checksum) const {
  const fs::path path = path_for(checksum);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::NotFound, "archive " + std::string(checksum) + " not found");
  }
  std::string bytes = read_file(path);
  if (sha256_hex(bytes) != checksum) {
    throw Error(ErrorCode::IntegrityError, "archive " + std::string(checksum) + " is corrupted");
  }
  return bytes;
}

bool ArchiveStore::contains(std::string_view checksum) const {
  return is_sha256_hex(checksum) && fs::exists(path_for(checksum));
}

CodeArchive fetch_code_archive(const Store& store, const ArchiveStore& archives,
                               std::string_view submission_id) {
  const auto record = store.find(RecordKind::Submission, submission_id);
  if (!record) {
    throw Error(ErrorCode::NotFound, "submission '" + std::string(submission_id) + "' not found");
  }
  const Submission submission = submission_from_json(nlohmann::json::parse(*record));
  return CodeArchive{archives.get(submission.archive_checksum), submission.archive_checksum};
}

}  // namespace rboard
