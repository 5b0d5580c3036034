#pragma once

// Shared on-disk container used by datasets and model weight files:
//   magic[8] | u64 LE manifest length | manifest (UTF-8 JSON) | payload

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace amcuq::detail {

using Magic = std::array<char, 8>;

struct Container {
  std::string manifest;
  std::vector<std::uint8_t> payload;
};

void write_container(const std::filesystem::path& path, const Magic& magic, const std::string& manifest,
                     std::span<const std::uint8_t> payload);
Container read_container(const std::filesystem::path& path, const Magic& magic);

void append_le_f32(std::vector<std::uint8_t>& out, float v);
void append_le_f64(std::vector<std::uint8_t>& out, double v);
float read_le_f32(const std::uint8_t* p);
double read_le_f64(const std::uint8_t* p);

}  // namespace amcuq::detail
