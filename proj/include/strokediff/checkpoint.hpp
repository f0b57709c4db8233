#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "strokediff/training.hpp"

namespace strokediff {

inline constexpr int kCheckpointVersion = 1;

// A checkpoint is a directory holding manifest.json (version, configs,
// schedule, epoch, history, array index) and weights.bin, the named arrays
// as consecutive little-endian float32 values.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);

// Throws CheckpointError on a missing directory, version mismatch, dtype
// other than float32, or a weight file whose size or checksum disagrees
// with the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// FNV-1a over the stored weights, schedule and mode; stable across
// save/load and printed as 16 hex digits.
std::string checkpoint_fingerprint(const Checkpoint& checkpoint);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace strokediff
