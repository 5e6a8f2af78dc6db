#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "gfnet/model/gfmodel.hpp"

namespace gfnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, ChecksumMismatch, Malformed };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointMeta {
  std::string stage;      // e.g. "stage1"
  std::string rng_state;  // serialized generator, may be empty
};

struct LoadedCheckpoint {
  GfModel model;
  CheckpointMeta meta;
  std::uint64_t checksum = 0;
};

/// Layout (little-endian):
///   "GFCK" | u32 version | u32 scalar bytes | str config | str stage | str rng
///   | u32 count | count x (str name | u32 rank | u32 dims[rank] | payload)
///   | u64 FNV-1a of everything before it
/// where str = u32 length + bytes.
std::string encode_checkpoint(const GfModel& model, const CheckpointMeta& meta);
LoadedCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const GfModel& model, const CheckpointMeta& meta, const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gfnet
