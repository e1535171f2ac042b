#pragma once

// Checkpoint container.
//
//   bytes [0, 8)    magic "CREFCKPT"
//   bytes [8, 12)   u32 little-endian format version (currently 1)
//   bytes [12, 20)  u64 little-endian header length H
//   bytes [20, 20+H) UTF-8 JSON header:
//       {"format_version": 1, "dtype": "f64" | "f32", "metadata": {...},
//        "tensors": [{"name": ..., "shape": [...]}, ...]}
//   remaining       tensor elements in header order, IEEE-754 little-endian
//
// Encoding is deterministic, so equal contents give equal bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cref/core/parameters.hpp"

namespace cref {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<real> values;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot_parameters(const ParameterList& params, nlohmann::json metadata = {});
// Copies values into existing parameters; names and shapes must match.
void restore_parameters(const Checkpoint& ckpt, const ParameterList& params);

}  // namespace cref
