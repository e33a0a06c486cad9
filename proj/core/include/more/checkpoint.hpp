#pragma once

#include <cstdint>
#include <string>

#include "more/params.hpp"

namespace more {

struct Checkpoint {
  ParamSet params;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::string config_echo;
};

// Binary layout: magic "MORE", version u32, step u64, seed u64,
// config length u32 + utf-8 bytes, entry count u64, then per entry
// name length u32 + utf-8 name, rank u64, dims u64..., payload f64 LE.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace more
