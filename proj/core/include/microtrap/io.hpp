#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace microtrap {

/// Shortest round-trip decimal representation; locale independent.
std::string fmt_num(double value);

/// Fixed-precision formatting for human-readable tables.
std::string fmt_fixed(double value, int precision);

/// Writes to `<path>.tmp` then renames over `path`; parent directories are created.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace microtrap
