#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace collage::util {

// Hex-encoded SHA-256 of arbitrary bytes.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& text);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

// Whole-file IO. Throws IoError on failure.
std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);

// Crash-safe write: writes to <path>.tmp.<pid> in the same directory, then
// renames over the target. Either the old content or the new content is on
// disk, never a prefix.
void atomic_write_file(const std::filesystem::path& path, const void* data, std::size_t size);
void atomic_write_file(const std::filesystem::path& path, const std::string& text);
void atomic_write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Shortest decimal representation that round-trips the double. Locale free.
std::string format_double(double value);

// Splits on a delimiter, trimming ASCII whitespace from each piece.
std::vector<std::string> split_trimmed(const std::string& text, char delim);

std::string trim(const std::string& text);

bool starts_with(const std::string& text, const std::string& prefix);

std::string to_lower(std::string text);

// Joins pieces with a separator.
std::string join(const std::vector<std::string>& pieces, const std::string& sep);

}  // namespace collage::util
