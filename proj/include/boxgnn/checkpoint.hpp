#pragma once

// Binary checkpoint container.
//
//   offset  size  field
//   0       8     magic "BOXGNNCK"
//   8       4     format version, uint32 little-endian (currently 1)
//   12      8     header length H, uint64 little-endian
//   20      H     UTF-8 JSON header (compact, keys sorted)
//   20+H    ...   tables listed in header["tables"], in that order, each
//                 rows*cols IEEE-754 float64 values, little-endian, row-major
//
// The header carries the effective configuration, vocabulary sizes and hash,
// the seed and the optimizer constants. Serialization is deterministic, so a
// load followed by a save reproduces the file byte for byte.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "boxgnn/model.hpp"

namespace boxgnn {

struct Checkpoint {
  nlohmann::json config;  // effective TrainConfig (and any run metadata)
  std::string vocab_hash;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  ModelParams params;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error on I/O failure or a malformed container.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace boxgnn
