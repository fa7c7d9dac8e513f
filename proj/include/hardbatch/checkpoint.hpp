#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hardbatch/model.hpp"

namespace hardbatch {

/// Binary checkpoint, little-endian, version 1:
///
///   offset  size  field
///   0       8     magic "HBCKPT01"
///   8       4     u32 version (= 1)
///   12      4     u32 flags: bit 0 normalize_embeddings, bit 1 has_velocity
///   16      8     u64 config_hash
///   24      8     u64 epoch (completed epochs)
///   32      8     u64 step  (completed optimizer steps)
///   40      8     u64 layer count n
///   48      16n   per layer: u64 out_dim, u64 in_dim
///   ...     8     u64 C (classes)
///   ...     8     u64 T (scenes)
///   ...           f64 parameters, ModelParams::tensors() order, row-major
///   ...           f64 velocity, same order (only if has_velocity)
///
/// Decoding checks the magic, version, layer chain and exact total length.
struct Checkpoint {
  ModelParams params;
  std::optional<ModelParams> velocity;
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  bool normalize_embeddings = false;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hardbatch
