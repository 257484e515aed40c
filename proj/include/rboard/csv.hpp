#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "rboard/error.hpp"

namespace rboard::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  // 1-based line on which each data row starts (quoted fields may span lines).
  std::vector<std::size_t> lines;
};

// Parses comma-separated UTF-8 text with a header row and `\n` line endings.
// Double-quoted fields follow RFC 4180 escaping. A trailing newline is
// optional. Malformed quoting throws Error(on_error).
Table parse(std::string_view text, ErrorCode on_error = ErrorCode::InvalidArgument);

// Quotes a field only when it contains a comma, quote, or newline.
std::string format_row(const Row& row);
std::string format(const Row& header, const std::vector<Row>& rows);

// Returns the index of `name` in `header`, or header.size() if absent.
std::size_t column_index(const Row& header, std::string_view name) noexcept;

}  // namespace rboard::csv
