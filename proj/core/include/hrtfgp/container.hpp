#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrtfgp::container {

// Raw little-endian IEEE-754 single precision blob, no header.
void write_f32_blob(const std::filesystem::path& path, std::span<const float> values);

// `field` is only used to label errors.
std::vector<float> read_f32_blob(const std::filesystem::path& path, std::string_view field);

// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_text_file(const std::filesystem::path& path);

// 64-bit FNV-1a, used for content digests in logs.
std::uint64_t fnv1a64(std::span<const std::byte> bytes);
std::string hex64(std::uint64_t value);

}  // namespace hrtfgp::container
