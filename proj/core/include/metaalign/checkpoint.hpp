#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "metaalign/maml.hpp"

namespace metaalign {

// FSMP v1 checkpoint, little-endian:
//   "FSMP" u8(version=1)
//   u32 d | u32 d_v | u32 d_t | u8 metric_kind (0 cosine, 1 bilinear, 2 mlp) | u32 mlp_hidden
//   u64 completed_steps | u8 has_velocity
//   f64 W_I (d x d_v, column-major) | f64 W_T (d x d_t) | f64 metric values
//   [f64 velocity, same length as the three blocks above, if has_velocity]
inline constexpr char kCheckpointMagic[4] = {'F', 'S', 'M', 'P'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> EncodeCheckpoint(const TrainState& state);
TrainState DecodeCheckpoint(const std::vector<std::uint8_t>& bytes);

void SaveCheckpoint(const TrainState& state, const std::filesystem::path& path);
TrainState LoadCheckpoint(const std::filesystem::path& path);

}  // namespace metaalign
