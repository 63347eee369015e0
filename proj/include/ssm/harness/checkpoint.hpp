#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssm/harness/config.hpp"

namespace ssm::harness {

struct Checkpoint {
  RunConfig config;
  num::ParamStore params;
  objective::OptimState optim;
  std::uint64_t step = 0;
};

// Rounds every stored value through f32 so that the in-memory checkpoint
// equals what a save/load cycle produces.
void quantize_to_f32(num::ParamStore& store);
Checkpoint make_checkpoint(const RunConfig& config, num::ParamStore params, objective::OptimState optim,
                           std::uint64_t step);

// SSMC container:
//   "SSMC" | u8 version (1) | u32 LE header length | JSON header
//   {"config", "step", "optimizer_step", "tensors": [{"name", "shape"}...]}
//   | f32 LE blobs: all parameters in manifest order, then first moments,
//   then second moments
inline constexpr char kSsmcMagic[4] = {'S', 'S', 'M', 'C'};
inline constexpr std::uint8_t kSsmcVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ssm::harness
