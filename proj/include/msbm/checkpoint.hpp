#pragma once

#include <filesystem>
#include <utility>

#include "msbm/control_net.hpp"

namespace msbm {

// Little-endian binary container, bit-exact round trip:
//   magic "MSBMCKP1" | u32 role | u32 dim | u32 time_embed | u32 hidden |
//   u32 blocks | i64 step | f64 lr, beta1, beta2, epsilon, ema_decay |
//   u64 n | f64[n] params | f64[n] m | f64[n] v | f64[n] ema
void save_checkpoint(const std::filesystem::path& file, const ControlFunction& ctrl,
                     const TrainerState& state);

std::pair<ControlFunction, TrainerState> load_checkpoint(const std::filesystem::path& file);

}  // namespace msbm
