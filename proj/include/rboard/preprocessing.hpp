#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rboard/csv.hpp"
#include "rboard/dataset.hpp"

namespace rboard {

// Portable seeded generator: mt19937_64 output is fixed by the standard and
// the bounded draw and shuffle below are ours, so permutations do not depend
// on the standard library implementation.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Row indices assigned to each part.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

// Hamilton apportionment of `total` items over the three ratios; leftover
// units go to the largest fractional quotas, ties to the earlier part.
std::array<std::size_t, 3> largest_remainder_counts(std::size_t total, const SplitRatios& ratios);

// Label-stratified random split of binary labels. Part sizes follow
// largest_remainder_counts over all rows; within each class the counts stay
// within one of the exact quota. Throws DegenerateClass if a class is empty.
SplitIndices split_random_stratified(std::span<const int> labels, const SplitRatios& ratios,
                                     std::uint64_t seed);

// Per user: latest interaction to test, second latest to valid, rest to
// train. Timestamp ties go to the lexicographically larger item first.
// Users with fewer than three interactions stay entirely in train.
SplitIndices split_leave_latest_out(std::span<const Interaction> interactions);

// Keeps one interaction per (user, item): the latest, first occurrence on ties.
std::vector<Interaction> deduplicate_interactions(std::span<const Interaction> interactions);

// SHA-256 over dataset_id followed by the seed as 8 big-endian bytes.
std::string seed_fingerprint(std::string_view dataset_id, std::uint64_t seed);

struct BundleFile {
  std::string name;
  std::string content;
  std::string sha256;
};

// Full materialization including the hidden test part. train/valid/test
// share `header`. For CTR the label is the last column and a test row's
// row_id is its position in `test`.
struct SplitBundle {
  std::string dataset_id;
  TaskType task = TaskType::Ctr;
  csv::Row header;
  std::vector<csv::Row> train;
  std::vector<csv::Row> valid;
  std::vector<csv::Row> test;
  std::vector<std::string> evaluated_users;  // TopN, sorted
  std::string seed_fingerprint;

  // train.csv, valid.csv, test.csv
  std::vector<BundleFile> files() const;
};

// What submissions receive: train.csv, valid.csv, test_input.csv and
// MANIFEST.json, in that order.
struct PublicBundle {
  std::string dataset_id;
  TaskType task = TaskType::Ctr;
  std::vector<BundleFile> files;

  const BundleFile& file(std::string_view name) const;
};

SplitBundle build_split_bundle(const DatasetDescriptor& descriptor, const RawTable& table);
PublicBundle derive_public_bundle(const SplitBundle& bundle);

// hidden/<id>/test.csv and hidden/<id>/split.json.
void write_hidden_bundle(const SplitBundle& bundle, const std::filesystem::path& hidden_dir);
void write_public_bundle(const PublicBundle& bundle, const std::filesystem::path& public_dir);

// Registration hook: split, derive and write both bundles.
void prepare_dataset(const DatasetDescriptor& descriptor, const RawTable& table,
                     const std::filesystem::path& public_dir,
                     const std::filesystem::path& hidden_dir);

// Reviewable description of how a dataset was prepared: protocol parameters
// plus the preprocessing sources. Never includes the seed. Deterministic.
std::string export_preprocessing_code(const PublicDatasetDescriptor& descriptor);

struct PreparationReport {
  std::string dataset_id;
  std::map<std::string, std::string> checksums;  // file name -> sha256
  bool matches_stored = false;
};

// Re-derives the bundles of registered datasets from their raw bytes and
// checks them against what is on disk, rewriting missing artifacts. Only one
// preparation per dataset runs at a time; concurrent callers share it.
class Preparer {
 public:
  explicit Preparer(const DatasetRegistry& registry) : registry_(registry) {}
  Preparer(const Preparer&) = delete;
  Preparer& operator=(const Preparer&) = delete;
  ~Preparer();

  std::shared_future<PreparationReport> prepare(const std::string& dataset_id);

 private:
  PreparationReport run(const std::string& dataset_id);

  const DatasetRegistry& registry_;
  std::mutex mutex_;
  std::condition_variable idle_;
  std::size_t active_ = 0;
  std::map<std::string, std::shared_future<PreparationReport>> in_flight_;
};

}  // namespace rboard
