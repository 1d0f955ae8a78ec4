#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cogscreen {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written artifact.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Directory holding the shipped data files (default lexicon, configs).
// COGSCREEN_DATA_DIR in the environment overrides the build-time location.
std::filesystem::path data_dir();

}  // namespace cogscreen
