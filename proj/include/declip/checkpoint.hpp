#pragma once

#include <cstdint>
#include <string>

#include "declip/model.hpp"

namespace declip {

struct CheckpointMeta {
  uint64_t seed = 0;
  std::string config_hash;  // hex digest of the originating config text
};

// Self-describing binary container: 8-byte magic, little-endian u64 header
// length, JSON header (schema, seed, config hash, model config, parameter
// names and shapes in lexicographic order), then each parameter's values as
// row-major IEEE-754 binary64, little-endian. Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const DualEncoder& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  DualEncoder model;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

inline constexpr char kCheckpointMagic[9] = "DCLCKPT1";

}  // namespace declip
