#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spa {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_fields(std::string_view s, char sep);

std::optional<std::int64_t> parse_int(std::string_view s);
std::optional<double> parse_double(std::string_view s);
std::optional<bool> parse_bool(std::string_view s);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Entries of a `key = value` file in file order, with 1-based line numbers.
/// Blank lines and `#` comments are skipped; duplicate keys are rejected.
using KeyValues = std::vector<std::pair<std::string, std::pair<std::string, std::size_t>>>;

KeyValues parse_key_values(std::string_view text, const std::string& origin);
KeyValues read_key_values(const std::filesystem::path& path);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace spa
