#pragma once

#include <filesystem>
#include <string>

namespace filmgen::io {

/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_text(const std::filesystem::path& path);

}  // namespace filmgen::io
