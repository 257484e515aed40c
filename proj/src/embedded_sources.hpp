#pragma once

#include <span>
#include <string_view>

namespace rboard::detail {

struct EmbeddedSource {
  std::string_view path;
  std::string_view content;
};

// Preprocessing sources compiled into the binary for export.
std::span<const EmbeddedSource> preprocessing_sources();

}  // namespace rboard::detail
