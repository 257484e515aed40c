#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rboard/platform.hpp"
#include "rboard/util.hpp"

namespace rboard::test_support {

struct SyntheticDataset {
  TaskType task = TaskType::Ctr;
  std::string raw_csv;
  nlohmann::json schema;  // registration document, seed included
};

// Clicks depend on the item's latent click rate, so per-item click rates
// from train predict the test labels.
SyntheticDataset synthetic_ctr(std::uint64_t seed, std::size_t rows = 2000,
                               std::size_t items = 40);

// Users pick items from a Zipf-like popularity curve, so global popularity
// predicts each user's latest item better than chance.
SyntheticDataset synthetic_topn(std::uint64_t seed, std::size_t users = 120,
                                std::size_t items = 150);

std::filesystem::path stub_dir(std::string_view stub);

// Zip of tests/fixtures/stubs/<stub>/ plus `extra` files at the archive root.
std::string stub_archive(std::string_view stub,
                         const std::map<std::string, std::string>& extra = {});

// Platform configuration for tests: root below `root`, short timeout.
PlatformConfig test_config(const std::filesystem::path& root, std::size_t workers = 2);

PublicDatasetDescriptor register_synthetic(Platform& platform, const std::string& id,
                                           const SyntheticDataset& dataset);

}  // namespace rboard::test_support
