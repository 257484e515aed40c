#include "rboard/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>
#include <unordered_map>

#include "embedded_sources.hpp"
#include "rboard/error.hpp"
#include "rboard/sha256.hpp"
#include "rboard/zip.hpp"

namespace rboard {
namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t SplitRng::uniform_below(std::uint64_t bound) {
  // Reject the low 2^64 mod bound outputs so every residue is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return x % bound;
  }
}

namespace {

// Floor and fractional part of total * share. The fraction is kept in units
// of 1e-9 so quotas that tie in exact arithmetic also tie here instead of
// being ordered by rounding noise.
struct Quota {
  std::size_t whole = 0;
  std::int64_t fraction = 0;
};

Quota split_quota(std::size_t total, double share) {
  const double quota = static_cast<double>(total) * share;
  const double whole = std::floor(quota + 1e-9);
  const double fraction = std::max(0.0, quota - whole);
  return {static_cast<std::size_t>(whole), std::llround(fraction * 1e9)};
}

}  // namespace

std::array<std::size_t, 3> largest_remainder_counts(std::size_t total,
                                                    const SplitRatios& ratios) {
  const std::array<double, 3> shares{ratios.train, ratios.valid, ratios.test};
  std::array<std::size_t, 3> counts{};
  std::array<std::int64_t, 3> fractions{};
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    const Quota q = split_quota(total, shares[j]);
    counts[j] = q.whole;
    fractions[j] = q.fraction;
    assigned += counts[j];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fractions[a] > fractions[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % 3, ++assigned) ++counts[order[k]];
  return counts;
}

namespace {

using Counts = std::array<std::size_t, 3>;

// Per-class part sizes whose column sums equal the overall largest-remainder
// sizes. Each class gets floor(quota) per part plus at most one extra unit;
// among the feasible ways to hand out the extra units the one covering the
// largest total fractional quota wins (first in enumeration order on ties).
std::array<Counts, 2> stratified_counts(const std::array<std::size_t, 2>& class_sizes,
                                        const SplitRatios& ratios) {
  const std::array<double, 3> shares{ratios.train, ratios.valid, ratios.test};
  const Counts totals = largest_remainder_counts(class_sizes[0] + class_sizes[1], ratios);

  std::array<Counts, 2> floors{};
  std::array<std::array<std::int64_t, 3>, 2> fractions{};
  std::array<std::size_t, 2> row_need{};
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const Quota q = split_quota(class_sizes[c], shares[j]);
      floors[c][j] = q.whole;
      fractions[c][j] = q.fraction;
      assigned += floors[c][j];
    }
    row_need[c] = class_sizes[c] - assigned;
  }
  std::array<long, 3> column_need{};
  for (std::size_t j = 0; j < 3; ++j) {
    column_need[j] = static_cast<long>(totals[j]) -
                     static_cast<long>(floors[0][j] + floors[1][j]);
  }

  int best_mask = -1;
  std::int64_t best_score = -1;
  for (int mask = 0; mask < 8; ++mask) {
    if (static_cast<std::size_t>(std::popcount(static_cast<unsigned>(mask))) != row_need[0]) {
      continue;
    }
    bool feasible = true;
    std::int64_t score = 0;
    for (std::size_t j = 0; j < 3 && feasible; ++j) {
      const long first = (mask >> j) & 1;
      const long second = column_need[j] - first;
      feasible = second == 0 || second == 1;
      if (first) score += fractions[0][j];
      if (second == 1) score += fractions[1][j];
    }
    if (feasible && score > best_score) {
      best_score = score;
      best_mask = mask;
    }
  }

  std::array<Counts, 2> out = floors;
  if (best_mask < 0) {
    // Not reachable for two classes; fall back to independent rounding.
    for (std::size_t c = 0; c < 2; ++c) {
      out[c] = largest_remainder_counts(class_sizes[c], ratios);
    }
    return out;
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const long first = (best_mask >> j) & 1;
    out[0][j] += static_cast<std::size_t>(first);
    out[1][j] += static_cast<std::size_t>(column_need[j] - first);
  }
  return out;
}

csv::Row interaction_row(const Interaction& interaction) {
  return {interaction.user, interaction.item, std::to_string(interaction.timestamp)};
}

BundleFile make_file(std::string name, std::string content) {
  std::string digest = sha256_hex(content);
  return BundleFile{std::move(name), std::move(content), std::move(digest)};
}

}  // namespace

SplitIndices split_random_stratified(std::span<const int> labels, const SplitRatios& ratios,
                                     std::uint64_t seed) {
  validate_ratios(ratios);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    }
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].empty()) {
      throw Error(ErrorCode::DegenerateClass,
                  "label class " + std::to_string(c) + " has no rows; stratification impossible");
    }
  }

  SplitRng rng(seed);
  const auto counts = stratified_counts({by_class[0].size(), by_class[1].size()}, ratios);
  SplitIndices out;
  for (std::size_t c = 0; c < 2; ++c) {
    rng.shuffle(by_class[c]);
    const auto first = by_class[c].begin();
    const auto valid_begin = first + static_cast<std::ptrdiff_t>(counts[c][0]);
    const auto test_begin = valid_begin + static_cast<std::ptrdiff_t>(counts[c][1]);
    out.train.insert(out.train.end(), first, valid_begin);
    out.valid.insert(out.valid.end(), valid_begin, test_begin);
    out.test.insert(out.test.end(), test_begin, by_class[c].end());
  }
  rng.shuffle(out.train);
  rng.shuffle(out.valid);
  rng.shuffle(out.test);
  return out;
}

SplitIndices split_leave_latest_out(std::span<const Interaction> interactions) {
  if (interactions.empty()) {
    throw Error(ErrorCode::EmptyInteractions, "no interactions to split");
  }
  std::map<std::string_view, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    by_user[interactions[i].user].push_back(i);
  }
  SplitIndices out;
  for (auto& [user, indices] : by_user) {
    if (indices.size() < 3) {
      out.train.insert(out.train.end(), indices.begin(), indices.end());
      continue;
    }
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      const Interaction& x = interactions[a];
      const Interaction& y = interactions[b];
      if (x.timestamp != y.timestamp) return x.timestamp > y.timestamp;
      if (x.item != y.item) return x.item > y.item;
      return a < b;
    });
    out.test.push_back(indices[0]);
    out.valid.push_back(indices[1]);
    out.train.insert(out.train.end(), indices.begin() + 2, indices.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<Interaction> deduplicate_interactions(std::span<const Interaction> interactions) {
  std::map<std::pair<std::string_view, std::string_view>, std::size_t> keep;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto key = std::pair<std::string_view, std::string_view>(interactions[i].user,
                                                                    interactions[i].item);
    const auto [it, inserted] = keep.emplace(key, i);
    if (!inserted && interactions[i].timestamp > interactions[it->second].timestamp) {
      it->second = i;
    }
  }
  std::vector<std::size_t> kept;
  kept.reserve(keep.size());
  for (const auto& [key, index] : keep) kept.push_back(index);
  std::sort(kept.begin(), kept.end());
  std::vector<Interaction> out;
  out.reserve(kept.size());
  for (std::size_t index : kept) out.push_back(interactions[index]);
  return out;
}

std::string seed_fingerprint(std::string_view dataset_id, std::uint64_t seed) {
  std::string material(dataset_id);
  for (int shift = 56; shift >= 0; shift -= 8) {
    material.push_back(static_cast<char>((seed >> shift) & 0xff));
  }
  return sha256_hex(material);
}

std::vector<BundleFile> SplitBundle::files() const {
  return {make_file("train.csv", csv::format(header, train)),
          make_file("valid.csv", csv::format(header, valid)),
          make_file("test.csv", csv::format(header, test))};
}

const BundleFile& PublicBundle::file(std::string_view name) const {
  for (const auto& f : files) {
    if (f.name == name) return f;
  }
  throw Error(ErrorCode::NotFound, "bundle has no file '" + std::string(name) + "'");
}

SplitBundle build_split_bundle(const DatasetDescriptor& descriptor, const RawTable& table) {
  SplitBundle bundle;
  bundle.dataset_id = descriptor.dataset_id;
  bundle.task = descriptor.task;
  bundle.seed_fingerprint =
      seed_fingerprint(descriptor.dataset_id, descriptor.split_config.secret_seed);

  if (const auto* ctr = std::get_if<CtrTable>(&table)) {
    const SplitIndices parts = split_random_stratified(
        ctr->labels, descriptor.split_config.ratios, descriptor.split_config.secret_seed);
    bundle.header = ctr->feature_columns;
    bundle.header.push_back(ctr->label_column);
    auto rows_of = [&](const std::vector<std::size_t>& indices) {
      std::vector<csv::Row> rows;
      rows.reserve(indices.size());
      for (std::size_t i : indices) {
        csv::Row row = ctr->features[i];
        row.push_back(ctr->labels[i] ? "1" : "0");
        rows.push_back(std::move(row));
      }
      return rows;
    };
    bundle.train = rows_of(parts.train);
    bundle.valid = rows_of(parts.valid);
    bundle.test = rows_of(parts.test);

    int positives = 0;
    for (std::size_t i : parts.test) positives += ctr->labels[i];
    if (positives == 0 || positives == static_cast<int>(parts.test.size())) {
      throw Error(ErrorCode::SingleClass,
                  "hidden test part holds a single label class; AUC would be undefined");
    }
    return bundle;
  }

  const auto& topn = std::get<TopNTable>(table);
  const std::vector<Interaction> interactions = deduplicate_interactions(topn.interactions);
  const SplitIndices parts = split_leave_latest_out(interactions);
  if (parts.test.empty()) {
    throw Error(ErrorCode::EmptyInteractions, "no user has at least 3 distinct interactions");
  }
  bundle.header = {topn.user_column, topn.item_column, topn.timestamp_column};
  for (std::size_t i : parts.train) bundle.train.push_back(interaction_row(interactions[i]));
  for (std::size_t i : parts.valid) bundle.valid.push_back(interaction_row(interactions[i]));
  for (std::size_t i : parts.test) {
    bundle.test.push_back(interaction_row(interactions[i]));
    bundle.evaluated_users.push_back(interactions[i].user);
  }
  std::sort(bundle.evaluated_users.begin(), bundle.evaluated_users.end());
  return bundle;
}

PublicBundle derive_public_bundle(const SplitBundle& bundle) {
  PublicBundle out;
  out.dataset_id = bundle.dataset_id;
  out.task = bundle.task;
  out.files.push_back(make_file("train.csv", csv::format(bundle.header, bundle.train)));
  out.files.push_back(make_file("valid.csv", csv::format(bundle.header, bundle.valid)));

  std::string test_input;
  if (bundle.task == TaskType::Ctr) {
    csv::Row header(bundle.header.begin(), bundle.header.end() - 1);
    header.push_back("row_id");
    std::vector<csv::Row> rows;
    rows.reserve(bundle.test.size());
    for (std::size_t i = 0; i < bundle.test.size(); ++i) {
      csv::Row row(bundle.test[i].begin(), bundle.test[i].end() - 1);
      row.push_back(std::to_string(i));
      rows.push_back(std::move(row));
    }
    test_input = csv::format(header, rows);
  } else {
    std::vector<csv::Row> rows;
    rows.reserve(bundle.evaluated_users.size());
    for (const auto& user : bundle.evaluated_users) rows.push_back({user});
    test_input = csv::format({"user_id"}, rows);
  }
  out.files.push_back(make_file("test_input.csv", std::move(test_input)));

  json manifest_files = json::array();
  for (const auto& file : out.files) {
    manifest_files.push_back(
        {{"name", file.name}, {"sha256", file.sha256}, {"bytes", file.content.size()}});
  }
  const json manifest = {{"dataset_id", bundle.dataset_id},
                         {"task", to_string(bundle.task)},
                         {"files", std::move(manifest_files)}};
  out.files.push_back(make_file("MANIFEST.json", manifest.dump(2) + "\n"));
  return out;
}

void write_hidden_bundle(const SplitBundle& bundle, const fs::path& hidden_dir) {
  fs::create_directories(hidden_dir);
  json checksums = json::object();
  for (const auto& file : bundle.files()) {
    checksums[file.name] = file.sha256;
    if (file.name == "test.csv") write_file_atomic(hidden_dir / file.name, file.content);
  }
  const json split = {{"dataset_id", bundle.dataset_id},
                      {"seed_fingerprint", bundle.seed_fingerprint},
                      {"files", std::move(checksums)}};
  write_file_atomic(hidden_dir / "split.json", split.dump(2) + "\n");
}

void write_public_bundle(const PublicBundle& bundle, const fs::path& public_dir) {
  fs::create_directories(public_dir);
  for (const auto& file : bundle.files) write_file_atomic(public_dir / file.name, file.content);
}

void prepare_dataset(const DatasetDescriptor& descriptor, const RawTable& table,
                     const fs::path& public_dir, const fs::path& hidden_dir) {
  const SplitBundle bundle = build_split_bundle(descriptor, table);
  write_hidden_bundle(bundle, hidden_dir);
  write_public_bundle(derive_public_bundle(bundle), public_dir);
}

std::string export_preprocessing_code(const PublicDatasetDescriptor& descriptor) {
  json protocol = to_json(descriptor);
  protocol.erase("created_at");
  protocol["random_generator"] =
      "mt19937_64 seeded with the withheld split seed; Fisher-Yates shuffles with "
      "rejection-sampled bounds";
  protocol["withheld"] = json::array({"split seed"});
  protocol["public_bundle"] = {"train.csv", "valid.csv", "test_input.csv", "MANIFEST.json"};

  std::string description;
  description += "# Preprocessing of dataset " + descriptor.dataset_id + "\n\n";
  description += "Raw file SHA-256: " + descriptor.raw_checksum + "\n\n";
  if (descriptor.task == TaskType::Ctr) {
    const auto& r = descriptor.split_config.ratios;
    description +=
        "Protocol: label-stratified random split with ratios train/valid/test = " +
        json(r.train).dump() + "/" + json(r.valid).dump() + "/" + json(r.test).dump() +
        ".\n\nPart sizes use largest-remainder rounding over all rows; per-class\n"
        "counts stay within one row of their exact quota. Each class is shuffled,\n"
        "cut into parts, and each part is shuffled again. test_input.csv drops the\n"
        "label column and appends row_id, the row's position in the hidden test part.\n";
  } else {
    description +=
        "Protocol: per-user leave-latest-out. Duplicate (user, item) pairs keep\n"
        "their latest interaction. For users with at least three interactions the\n"
        "latest goes to test, the second latest to valid, the rest to train;\n"
        "timestamp ties go to the lexicographically larger item first. Users with\n"
        "fewer interactions stay in train and are not evaluated. test_input.csv\n"
        "lists the evaluated user ids in sorted order.\n";
  }
  description +=
      "\nThe split seed is withheld. Everything else needed to reproduce the\n"
      "procedure is in this archive, including the source files.\n";

  zip::Writer writer;
  writer.add("PROTOCOL.md", description);
  writer.add("protocol.json", protocol.dump(2) + "\n");
  for (const auto& source : detail::preprocessing_sources()) {
    writer.add(std::string(source.path), source.content);
  }
  return std::move(writer).finish();
}

PreparationReport Preparer::run(const std::string& dataset_id) {
  const DatasetDescriptor descriptor = registry_.descriptor(dataset_id);
  const RawTable table =
      parse_raw_dataset(descriptor.task, descriptor.schema, registry_.raw_bytes(dataset_id));
  const SplitBundle bundle = build_split_bundle(descriptor, table);
  const PublicBundle public_bundle = derive_public_bundle(bundle);

  const Layout& layout = registry_.layout();
  PreparationReport report;
  report.dataset_id = dataset_id;
  report.matches_stored = true;
  for (const auto& file : bundle.files()) report.checksums[file.name] = file.sha256;
  for (const auto& file : public_bundle.files) {
    report.checksums["public/" + file.name] = file.sha256;
  }

  const fs::path hidden_dir = layout.hidden_dir(dataset_id);
  const fs::path split_json = hidden_dir / "split.json";
  if (fs::exists(split_json) && fs::exists(hidden_dir / "test.csv")) {
    const json stored = json::parse(read_file(split_json));
    for (const auto& file : bundle.files()) {
      if (stored.at("files").value(file.name, "") != file.sha256) report.matches_stored = false;
    }
    if (sha256_file_hex(hidden_dir / "test.csv") != report.checksums.at("test.csv")) {
      report.matches_stored = false;
    }
  } else {
    write_hidden_bundle(bundle, hidden_dir);
  }

  const fs::path public_dir = layout.public_dir(dataset_id);
  for (const auto& file : public_bundle.files) {
    const fs::path path = public_dir / file.name;
    if (!fs::exists(path)) {
      fs::create_directories(public_dir);
      write_file_atomic(path, file.content);
    } else if (sha256_file_hex(path) != file.sha256) {
      report.matches_stored = false;
    }
  }
  return report;
}

Preparer::~Preparer() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [this] { return active_ == 0; });
}

std::shared_future<PreparationReport> Preparer::prepare(const std::string& dataset_id) {
  std::unique_lock lock(mutex_);
  if (const auto it = in_flight_.find(dataset_id); it != in_flight_.end()) return it->second;
  if (!registry_.contains(dataset_id)) {
    throw Error(ErrorCode::NotFound, "dataset '" + dataset_id + "' not found");
  }
  std::promise<PreparationReport> promise;
  std::shared_future<PreparationReport> future = promise.get_future().share();
  in_flight_.emplace(dataset_id, future);
  ++active_;
  lock.unlock();
  std::thread([this, dataset_id, promise = std::move(promise)]() mutable {
    std::optional<PreparationReport> report;
    std::exception_ptr failure;
    try {
      report = run(dataset_id);
    } catch (...) {
      failure = std::current_exception();
    }
    // Leave the in-flight map before publishing, so a caller that sees this
    // result finished and asks again gets a fresh run.
    const std::lock_guard guard(mutex_);
    in_flight_.erase(dataset_id);
    if (failure) {
      promise.set_exception(failure);
    } else {
      promise.set_value(std::move(*report));
    }
    if (--active_ == 0) idle_.notify_all();
  }).detach();
  return future;
}

}  // namespace rboard
