#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace stockcast::io {

/// Whole-file read; throws DataError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place, creating
/// parent directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a full-precision double; throws DataError on trailing garbage.
double parse_double(std::string_view text);

}  // namespace stockcast::io
