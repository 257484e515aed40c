#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "rboard/fsutil.hpp"
#include "rboard/util.hpp"

namespace rboard {

// CTR datasets use feature_columns + label_column; TopN datasets use the
// user/item/timestamp triple. The unused half stays empty.
struct ColumnSchema {
  std::vector<std::string> feature_columns;
  std::string label_column;
  std::string user_column;
  std::string item_column;
  std::string timestamp_column;

  bool operator==(const ColumnSchema&) const = default;
};

enum class SplitProtocol { RandomStratified, LeaveLatestOut };

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;

  bool operator==(const SplitRatios&) const = default;
};

struct SplitConfig {
  SplitProtocol protocol = SplitProtocol::RandomStratified;
  SplitRatios ratios;  // RandomStratified only
  std::uint64_t secret_seed = 0;
};

// Throws SchemaViolation unless every ratio is > 0 and they sum to 1 within 1e-9.
void validate_ratios(const SplitRatios& ratios);

// The split configuration with the seed stripped; the only form that leaves
// the registry through public surfaces.
struct PublicSplitConfig {
  SplitProtocol protocol = SplitProtocol::RandomStratified;
  SplitRatios ratios;
};

struct DatasetDescriptor {
  std::string dataset_id;
  TaskType task = TaskType::Ctr;
  std::string name;
  std::string raw_checksum;
  ColumnSchema schema;
  SplitConfig split_config;
  std::string created_at;
};

struct PublicDatasetDescriptor {
  std::string dataset_id;
  TaskType task = TaskType::Ctr;
  std::string name;
  std::string raw_checksum;
  ColumnSchema schema;
  PublicSplitConfig split_config;
  std::string created_at;
};

PublicDatasetDescriptor public_projection(const DatasetDescriptor& descriptor);

nlohmann::json to_json(const PublicDatasetDescriptor& descriptor);
// Full form including the seed. Only ever written below data/.
nlohmann::json to_private_json(const DatasetDescriptor& descriptor);
DatasetDescriptor descriptor_from_private_json(const nlohmann::json& json);

std::string_view to_string(SplitProtocol protocol) noexcept;

// Everything the operator supplies at registration time.
struct RegistrationRequest {
  std::string dataset_id;
  TaskType task = TaskType::Ctr;
  std::string name;
  ColumnSchema schema;
  SplitConfig split_config;
};

// Builds a request from the schema document accepted by the CLI and the
// registration endpoint:
//   {"name": ..., "columns": {"features": [...], "label": ...}
//                          | {"user": ..., "item": ..., "timestamp": ...},
//    "split": {"ratios": [train, valid, test], "seed": <u64>}}
// The protocol follows the task. A missing seed is drawn from the OS.
RegistrationRequest registration_from_json(std::string dataset_id, TaskType task,
                                           const nlohmann::json& schema_document);

struct CtrTable {
  std::vector<std::string> feature_columns;
  std::string label_column;
  std::vector<std::vector<std::string>> features;  // one row per record, schema order
  std::vector<int> labels;
};

struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

struct TopNTable {
  std::string user_column;
  std::string item_column;
  std::string timestamp_column;
  std::vector<Interaction> interactions;
};

using RawTable = std::variant<CtrTable, TopNTable>;

// Validates raw CSV bytes against the schema. Errors name the offending
// row and column.
RawTable parse_raw_dataset(TaskType task, const ColumnSchema& schema, std::string_view bytes);

// Thread-safe catalogue of registered datasets rooted at `layout.root()`.
// Reads may run concurrently; registrations are serialized.
class DatasetRegistry {
 public:
  // Runs inside registration with staging directories for the public and
  // hidden artifacts. Throwing aborts the registration.
  using PrepareHook =
      std::function<void(const DatasetDescriptor&, const RawTable&,
                         const std::filesystem::path& public_dir,
                         const std::filesystem::path& hidden_dir)>;

  explicit DatasetRegistry(Layout layout, PrepareHook prepare = {});

  // Validates, persists and prepares a dataset. Atomic: on any error no
  // trace of the dataset remains.
  std::string register_dataset(const RegistrationRequest& request, std::string_view raw_bytes);

  PublicDatasetDescriptor get_dataset(std::string_view dataset_id) const;
  std::vector<PublicDatasetDescriptor> list_datasets(
      std::optional<TaskType> task = std::nullopt) const;

  // Internal accessors; results may carry the secret seed.
  DatasetDescriptor descriptor(std::string_view dataset_id) const;
  // Raw bytes, verified against raw_checksum.
  std::string raw_bytes(std::string_view dataset_id) const;
  bool contains(std::string_view dataset_id) const;

  const Layout& layout() const noexcept { return layout_; }

 private:
  void load_existing();

  Layout layout_;
  PrepareHook prepare_;
  mutable std::shared_mutex mutex_;
  std::mutex write_mutex_;
  std::map<std::string, DatasetDescriptor, std::less<>> datasets_;
};

}  // namespace rboard
