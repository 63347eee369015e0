#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssm/synthdata/world.hpp"

namespace ssm::synth {

// SSMF container:
//   "SSMF" | u8 version (1) | u32 LE header length | UTF-8 JSON header
//   {"frames", "dim", "fps", "has_labels", "horizon"} | frames x dim f32 LE
//   | when labelled: frames i32 LE current labels, frames i32 LE future labels
inline constexpr char kSsmfMagic[4] = {'S', 'S', 'M', 'F'};
inline constexpr std::uint8_t kSsmfVersion = 1;

std::vector<std::uint8_t> encode_feature_file(const Episode& episode);
Episode decode_feature_file(const std::vector<std::uint8_t>& bytes);

void write_feature_file(const std::filesystem::path& path, const Episode& episode);
Episode load_feature_file(const std::filesystem::path& path);

// Shared little-endian helpers for the binary containers.
namespace le {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_i32(std::vector<std::uint8_t>& out, std::int32_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(const std::uint8_t* p);
std::int32_t get_i32(const std::uint8_t* p);
float get_f32(const std::uint8_t* p);
}  // namespace le

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace ssm::synth
