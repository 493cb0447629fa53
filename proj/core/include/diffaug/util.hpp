#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace diffaug {

// FNV-1a over the raw bytes. Stable across platforms; used for config and
// split fingerprints, not for security.
uint64_t fnv1a64(std::string_view bytes);
uint64_t fnv1a64(const void* data, size_t len);

std::string hex64(uint64_t v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     std::string_view content);
std::vector<uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path,
                       const uint8_t* data, size_t len);

void ensure_parent_dir(const std::filesystem::path& path);

// Splits on a delimiter without collapsing empty fields.
std::vector<std::string> split(std::string_view s, char delim);
std::string trim(std::string_view s);
std::string lower(std::string_view s);

}  // namespace diffaug
