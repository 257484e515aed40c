#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace rboard {

enum class TaskType { Ctr, TopN };

// "ctr" / "topn", as used on the command line and in URLs.
std::string_view to_string(TaskType task) noexcept;
std::optional<TaskType> parse_task(std::string_view text) noexcept;

// Matches [a-z0-9-]{1,64}.
bool is_valid_slug(std::string_view text) noexcept;

// Identifiers minted by the platform: lowercase alphanumerics, '-' and '.'.
bool is_valid_record_id(std::string_view text) noexcept;

// `prefix` followed by 16 random lowercase hex digits.
std::string random_id(std::string_view prefix);

// ISO-8601 UTC with microseconds, e.g. 2026-10-16T09:30:00.123456Z.
// Lexicographic order matches chronological order.
std::string utc_now_iso8601();

}  // namespace rboard

namespace rboard {

// Replaces invalid UTF-8 sequences with U+FFFD so arbitrary process output
// can be embedded in JSON.
std::string sanitize_utf8(std::string_view bytes);

}  // namespace rboard
