#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "rboard/fsutil.hpp"
#include "rboard/zip.hpp"

namespace rboard::test_support {
namespace fs = std::filesystem;

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t below(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>(unit(rng) * static_cast<double>(bound));
}

}  // namespace

SyntheticDataset synthetic_ctr(std::uint64_t seed, std::size_t rows, std::size_t items) {
  std::mt19937_64 rng(seed);
  std::vector<double> click_rate(items);
  for (auto& rate : click_rate) {
    const double u = unit(rng);
    rate = 0.05 + 0.6 * u * u;
  }
  std::ostringstream out;
  out << "user,item,hour,click\n";
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t item = below(rng, items);
    const std::size_t user = below(rng, 300);
    const std::size_t hour = below(rng, 24);
    const int click = unit(rng) < click_rate[item] ? 1 : 0;
    out << 'u' << user << ",i" << item << ',' << hour << ',' << click << '\n';
  }
  SyntheticDataset dataset;
  dataset.task = TaskType::Ctr;
  dataset.raw_csv = out.str();
  dataset.schema = {{"name", "synthetic ctr"},
                    {"columns", {{"features", {"user", "item", "hour"}}, {"label", "click"}}},
                    {"split", {{"ratios", {0.8, 0.1, 0.1}}, {"seed", seed ^ 0x5eed}}}};
  return dataset;
}

SyntheticDataset synthetic_topn(std::uint64_t seed, std::size_t users, std::size_t items) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(items);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = items; i > 1; --i) std::swap(order[i - 1], order[below(rng, i)]);
  std::vector<double> cumulative(items);
  double total = 0.0;
  for (std::size_t r = 0; r < items; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), 1.1);
    cumulative[r] = total;
  }

  std::ostringstream out;
  out << "user_id,item_id,ts\n";
  std::int64_t clock = 1'600'000'000;
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t count = 4 + below(rng, 9);
    std::set<std::size_t> chosen;
    while (chosen.size() < count) {
      const double x = unit(rng) * total;
      const auto rank = static_cast<std::size_t>(
          std::lower_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
      chosen.insert(order[std::min(rank, items - 1)]);
    }
    std::vector<std::size_t> sequence(chosen.begin(), chosen.end());
    for (std::size_t i = sequence.size(); i > 1; --i) {
      std::swap(sequence[i - 1], sequence[below(rng, i)]);
    }
    for (const std::size_t item : sequence) {
      clock += 1 + static_cast<std::int64_t>(below(rng, 5000));
      out << "user" << u << ",item" << item << ',' << clock << '\n';
    }
  }
  SyntheticDataset dataset;
  dataset.task = TaskType::TopN;
  dataset.raw_csv = out.str();
  dataset.schema = {{"name", "synthetic topn"},
                    {"columns", {{"user", "user_id"}, {"item", "item_id"}, {"timestamp", "ts"}}},
                    {"split", {{"seed", seed ^ 0x5eed}}}};
  return dataset;
}

fs::path stub_dir(std::string_view stub) { return fs::path(RBOARD_STUB_DIR) / stub; }

std::string stub_archive(std::string_view stub, const std::map<std::string, std::string>& extra) {
  zip::Writer writer;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(stub_dir(stub))) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    writer.add(fs::relative(file, stub_dir(stub)).generic_string(), read_file(file));
  }
  for (const auto& [name, content] : extra) writer.add(name, content);
  return std::move(writer).finish();
}

PlatformConfig test_config(const fs::path& root, std::size_t workers) {
  PlatformConfig config;
  config.root = root;
  config.runner.workers = workers;
  config.runner.limits.wall_timeout_seconds = 60.0;
  config.runner.limits.memory_bytes = 2ULL << 30;
  return config;
}

PublicDatasetDescriptor register_synthetic(Platform& platform, const std::string& id,
                                           const SyntheticDataset& dataset) {
  return platform.register_dataset(registration_from_json(id, dataset.task, dataset.schema),
                                   dataset.raw_csv);
}

}  // namespace rboard::test_support
