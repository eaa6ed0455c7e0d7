#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace uista {

/// Writes to a sibling temp file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest round-trip form with 17 significant digits ("%.17g").
std::string format_double(double v);

}  // namespace uista
