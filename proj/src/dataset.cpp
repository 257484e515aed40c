#include "rboard/dataset.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <set>

#include "rboard/csv.hpp"
#include "rboard/error.hpp"
#include "rboard/sha256.hpp"

namespace rboard {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& message) {
  throw Error(ErrorCode::SchemaViolation, message);
}

std::string row_label(const csv::Table& table, std::size_t row) {
  return "row " + std::to_string(row + 1) + " (line " + std::to_string(table.lines[row]) + ")";
}

json schema_to_json(TaskType task, const ColumnSchema& schema) {
  if (task == TaskType::Ctr) {
    return {{"features", schema.feature_columns}, {"label", schema.label_column}};
  }
  return {{"user", schema.user_column},
          {"item", schema.item_column},
          {"timestamp", schema.timestamp_column}};
}

ColumnSchema schema_from_json(TaskType task, const json& columns) {
  if (!columns.is_object()) schema_error("schema: \"columns\" must be an object");
  ColumnSchema schema;
  try {
    if (task == TaskType::Ctr) {
      schema.feature_columns = columns.at("features").get<std::vector<std::string>>();
      schema.label_column = columns.at("label").get<std::string>();
    } else {
      schema.user_column = columns.at("user").get<std::string>();
      schema.item_column = columns.at("item").get<std::string>();
      schema.timestamp_column = columns.at("timestamp").get<std::string>();
    }
  } catch (const json::exception& e) {
    schema_error(std::string("schema: ") + e.what());
  }
  return schema;
}

void validate_schema(TaskType task, const ColumnSchema& schema) {
  std::vector<std::string> names;
  if (task == TaskType::Ctr) {
    if (schema.feature_columns.empty()) schema_error("schema: CTR datasets need feature columns");
    names = schema.feature_columns;
    names.push_back(schema.label_column);
    for (const auto& feature : schema.feature_columns) {
      if (feature == "row_id") schema_error("schema: column name 'row_id' is reserved");
    }
  } else {
    names = {schema.user_column, schema.item_column, schema.timestamp_column};
  }
  std::set<std::string> unique;
  for (const auto& name : names) {
    if (name.empty()) schema_error("schema: column names must be non-empty");
    if (!unique.insert(name).second) schema_error("schema: duplicate column '" + name + "'");
  }
}

std::uint64_t seed_from_json(const json& value) {
  if (value.is_number_unsigned()) return value.get<std::uint64_t>();
  if (value.is_number_integer() && value.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(value.get<std::int64_t>());
  }
  if (value.is_string()) {
    const auto text = value.get<std::string>();
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (ec == std::errc() && ptr == text.data() + text.size()) return seed;
  }
  throw Error(ErrorCode::InvalidArgument, "split.seed must be an unsigned 64-bit integer");
}

// Maps header names to positions, requiring exactly the expected columns.
std::vector<std::size_t> locate_columns(const csv::Row& header,
                                        const std::vector<std::string>& expected) {
  std::set<std::string> seen;
  for (const auto& column : header) {
    if (!seen.insert(column).second) schema_error("header: duplicate column '" + column + "'");
    if (std::find(expected.begin(), expected.end(), column) == expected.end()) {
      schema_error("header: unexpected column '" + column + "'");
    }
  }
  std::vector<std::size_t> positions;
  for (const auto& name : expected) {
    const auto index = csv::column_index(header, name);
    if (index == header.size()) schema_error("header: missing column '" + name + "'");
    positions.push_back(index);
  }
  return positions;
}

}  // namespace

void validate_ratios(const SplitRatios& ratios) {
  for (double r : {ratios.train, ratios.valid, ratios.test}) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      schema_error("split ratios must each be > 0");
    }
  }
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    schema_error("split ratios must sum to 1");
  }
}

std::string_view to_string(SplitProtocol protocol) noexcept {
  return protocol == SplitProtocol::RandomStratified ? "random_stratified" : "leave_latest_out";
}

PublicDatasetDescriptor public_projection(const DatasetDescriptor& d) {
  return PublicDatasetDescriptor{d.dataset_id,
                                 d.task,
                                 d.name,
                                 d.raw_checksum,
                                 d.schema,
                                 PublicSplitConfig{d.split_config.protocol, d.split_config.ratios},
                                 d.created_at};
}

json to_json(const PublicDatasetDescriptor& d) {
  json split = {{"protocol", to_string(d.split_config.protocol)}};
  if (d.split_config.protocol == SplitProtocol::RandomStratified) {
    const auto& r = d.split_config.ratios;
    split["ratios"] = {r.train, r.valid, r.test};
  }
  return {{"dataset_id", d.dataset_id},       {"task", to_string(d.task)},
          {"name", d.name},                   {"raw_checksum", d.raw_checksum},
          {"schema", schema_to_json(d.task, d.schema)},
          {"split_config", std::move(split)}, {"created_at", d.created_at}};
}

json to_private_json(const DatasetDescriptor& d) {
  json out = to_json(public_projection(d));
  out["split_config"]["secret_seed"] = d.split_config.secret_seed;
  return out;
}

DatasetDescriptor descriptor_from_private_json(const json& j) {
  DatasetDescriptor d;
  d.dataset_id = j.at("dataset_id").get<std::string>();
  const auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error(ErrorCode::Io, "descriptor: unknown task");
  d.task = *task;
  d.name = j.at("name").get<std::string>();
  d.raw_checksum = j.at("raw_checksum").get<std::string>();
  d.schema = schema_from_json(d.task, j.at("schema"));
  const json& split = j.at("split_config");
  d.split_config.protocol = split.at("protocol").get<std::string>() == "random_stratified"
                                ? SplitProtocol::RandomStratified
                                : SplitProtocol::LeaveLatestOut;
  if (split.contains("ratios")) {
    const auto ratios = split.at("ratios").get<std::vector<double>>();
    if (ratios.size() != 3) throw Error(ErrorCode::Io, "descriptor: bad ratios");
    d.split_config.ratios = {ratios[0], ratios[1], ratios[2]};
  }
  d.split_config.secret_seed = split.at("secret_seed").get<std::uint64_t>();
  d.created_at = j.at("created_at").get<std::string>();
  return d;
}

RegistrationRequest registration_from_json(std::string dataset_id, TaskType task,
                                           const json& document) {
  if (!document.is_object()) schema_error("schema document must be a JSON object");
  RegistrationRequest request;
  request.dataset_id = std::move(dataset_id);
  request.task = task;
  request.name = document.value("name", request.dataset_id);
  if (!document.contains("columns")) schema_error("schema document lacks \"columns\"");
  request.schema = schema_from_json(task, document.at("columns"));

  SplitConfig& split = request.split_config;
  split.protocol =
      task == TaskType::Ctr ? SplitProtocol::RandomStratified : SplitProtocol::LeaveLatestOut;
  split.secret_seed = std::random_device{}();
  split.secret_seed = (split.secret_seed << 32) ^ std::random_device{}();
  if (document.contains("split")) {
    const json& s = document.at("split");
    if (s.contains("ratios")) {
      if (task != TaskType::Ctr) schema_error("split ratios apply to CTR datasets only");
      const auto ratios = s.at("ratios").get<std::vector<double>>();
      if (ratios.size() != 3) schema_error("split.ratios must have three entries");
      split.ratios = {ratios[0], ratios[1], ratios[2]};
    }
    if (s.contains("seed")) split.secret_seed = seed_from_json(s.at("seed"));
  }
  return request;
}

RawTable parse_raw_dataset(TaskType task, const ColumnSchema& schema, std::string_view bytes) {
  validate_schema(task, schema);
  const csv::Table table = csv::parse(bytes, ErrorCode::SchemaViolation);
  if (table.header.empty() || (table.header.size() == 1 && table.header[0].empty())) {
    throw Error(ErrorCode::EmptyDataset, "raw file has no header");
  }
  if (table.rows.empty()) throw Error(ErrorCode::EmptyDataset, "raw file has no data rows");

  auto check_width = [&](std::size_t r) {
    if (table.rows[r].size() != table.header.size()) {
      schema_error(row_label(table, r) + ": expected " + std::to_string(table.header.size()) +
                   " fields, found " + std::to_string(table.rows[r].size()));
    }
  };

  if (task == TaskType::Ctr) {
    std::vector<std::string> expected = schema.feature_columns;
    expected.push_back(schema.label_column);
    const auto positions = locate_columns(table.header, expected);
    CtrTable out;
    out.feature_columns = schema.feature_columns;
    out.label_column = schema.label_column;
    out.features.reserve(table.rows.size());
    out.labels.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      check_width(r);
      const auto& row = table.rows[r];
      const std::string& label = row[positions.back()];
      if (label != "0" && label != "1") {
        schema_error(row_label(table, r) + ", column '" + schema.label_column + "': value '" +
                     label + "' is not 0 or 1");
      }
      std::vector<std::string> features;
      features.reserve(schema.feature_columns.size());
      for (std::size_t f = 0; f + 1 < positions.size(); ++f) features.push_back(row[positions[f]]);
      out.features.push_back(std::move(features));
      out.labels.push_back(label == "1" ? 1 : 0);
    }
    return out;
  }

  const auto positions = locate_columns(
      table.header, {schema.user_column, schema.item_column, schema.timestamp_column});
  TopNTable out;
  out.user_column = schema.user_column;
  out.item_column = schema.item_column;
  out.timestamp_column = schema.timestamp_column;
  out.interactions.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    check_width(r);
    const auto& row = table.rows[r];
    Interaction interaction{row[positions[0]], row[positions[1]], 0};
    if (interaction.user.empty()) {
      schema_error(row_label(table, r) + ", column '" + schema.user_column + "': empty value");
    }
    if (interaction.item.empty()) {
      schema_error(row_label(table, r) + ", column '" + schema.item_column + "': empty value");
    }
    const std::string& ts = row[positions[2]];
    const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), interaction.timestamp);
    if (ts.empty() || ts.front() == '-' || ec != std::errc() || ptr != ts.data() + ts.size()) {
      schema_error(row_label(table, r) + ", column '" + schema.timestamp_column + "': value '" +
                   ts + "' is not a non-negative integer epoch timestamp");
    }
    out.interactions.push_back(std::move(interaction));
  }
  return out;
}

DatasetRegistry::DatasetRegistry(Layout layout, PrepareHook prepare)
    : layout_(std::move(layout)), prepare_(std::move(prepare)) {
  layout_.create();
  load_existing();
}

void DatasetRegistry::load_existing() {
  // Anything left in staging belongs to a registration that never committed.
  for (const auto& entry : fs::directory_iterator(layout_.staging_root())) {
    remove_all_noexcept(entry.path());
  }
  for (const auto& entry : fs::directory_iterator(layout_.data_root())) {
    const fs::path descriptor_path = entry.path() / "descriptor.json";
    if (!fs::exists(descriptor_path)) continue;
    auto descriptor = descriptor_from_private_json(json::parse(read_file(descriptor_path)));
    datasets_.emplace(descriptor.dataset_id, std::move(descriptor));
  }
  for (const fs::path& root : {layout_.public_root(), layout_.hidden_root()}) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (!datasets_.contains(entry.path().filename().string())) remove_all_noexcept(entry.path());
    }
  }
}

std::string DatasetRegistry::register_dataset(const RegistrationRequest& request,
                                              std::string_view raw_bytes) {
  if (!is_valid_slug(request.dataset_id)) {
    throw Error(ErrorCode::InvalidArgument,
                "dataset id must match [a-z0-9-]{1,64}: '" + request.dataset_id + "'");
  }
  const std::lock_guard write_lock(write_mutex_);
  if (contains(request.dataset_id) || fs::exists(layout_.data_dir(request.dataset_id))) {
    throw Error(ErrorCode::DuplicateId, "dataset '" + request.dataset_id + "' already exists");
  }
  const SplitProtocol expected_protocol = request.task == TaskType::Ctr
                                              ? SplitProtocol::RandomStratified
                                              : SplitProtocol::LeaveLatestOut;
  if (request.split_config.protocol != expected_protocol) {
    schema_error(std::string("split protocol for ") + std::string(to_string(request.task)) +
                 " datasets must be " + std::string(to_string(expected_protocol)));
  }
  if (expected_protocol == SplitProtocol::RandomStratified) {
    validate_ratios(request.split_config.ratios);
  }

  const RawTable table = parse_raw_dataset(request.task, request.schema, raw_bytes);

  DatasetDescriptor descriptor;
  descriptor.dataset_id = request.dataset_id;
  descriptor.task = request.task;
  descriptor.name = request.name.empty() ? request.dataset_id : request.name;
  descriptor.raw_checksum = sha256_hex(raw_bytes);
  descriptor.schema = request.schema;
  descriptor.split_config = request.split_config;
  descriptor.created_at = utc_now_iso8601();

  TempDir staging(layout_.staging_root(), request.dataset_id + "-");
  const fs::path data_dir = staging.path() / "data";
  const fs::path public_dir = staging.path() / "public";
  const fs::path hidden_dir = staging.path() / "hidden";
  for (const auto& dir : {data_dir, public_dir, hidden_dir}) fs::create_directories(dir);
  fs::permissions(hidden_dir, fs::perms::owner_all, fs::perm_options::replace);

  write_file_atomic(data_dir / "raw.csv", raw_bytes);
  if (sha256_file_hex(data_dir / "raw.csv") != descriptor.raw_checksum) {
    throw Error(ErrorCode::IntegrityError, "raw file checksum changed while persisting");
  }
  write_file_atomic(data_dir / "descriptor.json", to_private_json(descriptor).dump(2) + "\n");
  if (prepare_) prepare_(descriptor, table, public_dir, hidden_dir);

  // data/<id> is moved last: its descriptor marks the registration committed.
  const fs::path public_target = layout_.public_dir(descriptor.dataset_id);
  const fs::path hidden_target = layout_.hidden_dir(descriptor.dataset_id);
  try {
    fs::rename(public_dir, public_target);
    fs::rename(hidden_dir, hidden_target);
    fs::rename(data_dir, layout_.data_dir(descriptor.dataset_id));
  } catch (const fs::filesystem_error& e) {
    remove_all_noexcept(public_target);
    remove_all_noexcept(hidden_target);
    throw Error(ErrorCode::Io, "failed to commit dataset '" + descriptor.dataset_id + "'");
  }

  const std::unique_lock lock(mutex_);
  datasets_.emplace(descriptor.dataset_id, descriptor);
  return descriptor.dataset_id;
}

bool DatasetRegistry::contains(std::string_view dataset_id) const {
  const std::shared_lock lock(mutex_);
  return datasets_.find(dataset_id) != datasets_.end();
}

DatasetDescriptor DatasetRegistry::descriptor(std::string_view dataset_id) const {
  const std::shared_lock lock(mutex_);
  const auto it = datasets_.find(dataset_id);
  if (it == datasets_.end()) {
    throw Error(ErrorCode::NotFound, "dataset '" + std::string(dataset_id) + "' not found");
  }
  return it->second;
}

PublicDatasetDescriptor DatasetRegistry::get_dataset(std::string_view dataset_id) const {
  return public_projection(descriptor(dataset_id));
}

std::vector<PublicDatasetDescriptor> DatasetRegistry::list_datasets(
    std::optional<TaskType> task) const {
  const std::shared_lock lock(mutex_);
  std::vector<PublicDatasetDescriptor> out;
  for (const auto& [id, descriptor] : datasets_) {
    if (!task || descriptor.task == *task) out.push_back(public_projection(descriptor));
  }
  return out;
}

std::string DatasetRegistry::raw_bytes(std::string_view dataset_id) const {
  const DatasetDescriptor d = descriptor(dataset_id);
  std::string bytes = read_file(layout_.data_dir(dataset_id) / "raw.csv");
  if (sha256_hex(bytes) != d.raw_checksum) {
    throw Error(ErrorCode::IntegrityError,
                "raw file of dataset '" + d.dataset_id + "' no longer matches its checksum");
  }
  return bytes;
}

}  // namespace rboard
