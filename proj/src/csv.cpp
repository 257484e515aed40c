#include "rboard/csv.hpp"

#include <algorithm>

namespace rboard::csv {

Table parse(std::string_view text, ErrorCode on_error) {
  Table table;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool row_has_content = false;
  std::size_t line = 1;
  std::size_t row_start_line = 1;
  bool have_header = false;

  auto finish_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
    if (!have_header) {
      table.header = std::move(row);
      have_header = true;
    } else {
      table.rows.push_back(std::move(row));
      table.lines.push_back(row_start_line);
    }
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (!row_has_content) {
      row_start_line = line;
      row_has_content = true;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw Error(on_error, "line " + std::to_string(line) +
                                    ": unexpected quote inside unquoted field");
        }
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        break;
      case '\n':
        finish_row();
        ++line;
        break;
      default:
        if (field_was_quoted) {
          throw Error(on_error, "line " + std::to_string(line) +
                                    ": characters after closing quote");
        }
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(on_error, "line " + std::to_string(row_start_line) +
                              ": unterminated quoted field");
  }
  if (row_has_content) finish_row();
  return table;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out.push_back(',');
    const std::string& value = row[i];
    const bool needs_quotes = value.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) {
      out += value;
      continue;
    }
    out.push_back('"');
    for (char c : value) {
      if (c == '"') out.push_back('"');
      out.push_back(c);
    }
    out.push_back('"');
  }
  out.push_back('\n');
  return out;
}

std::string format(const Row& header, const std::vector<Row>& rows) {
  std::string out = format_row(header);
  for (const Row& row : rows) out += format_row(row);
  return out;
}

std::size_t column_index(const Row& header, std::string_view name) noexcept {
  return static_cast<std::size_t>(
      std::find(header.begin(), header.end(), name) - header.begin());
}

}  // namespace rboard::csv
