#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gfnet/model/config.hpp"
#include "gfnet/train/ppo.hpp"
#include "gfnet/train/trainer.hpp"

namespace gfnet {

/// Settings shared by eval, sweep and trace.
struct EvalSettings {
  std::size_t concurrency = 8;
  std::uint64_t random_seed = 0;          // random-policy baseline
  std::string calibration_split = "val";  // thresholds are fitted here
  std::string eval_split = "test";
  std::string cost = "macs";              // macs | latency | steps
  std::size_t latency_reps = 21;

  void validate() const;
};

/// Everything a run needs. Every field has a default; a config file only overrides.
struct RunConfig {
  std::string dataset = "data";  // directory with train/val/test .gfds files
  std::string output_dir = "run";
  std::uint64_t seed = 1;        // model initialisation
  ModelConfig model;             // norm stats come from the dataset, never from the file
  StageConfig stage0 = default_stage_config(0);
  StageConfig stage1 = default_stage_config(1);
  StageConfig stage3 = default_stage_config(3);
  PpoConfig ppo;
  EvalSettings eval;

  void validate() const;
  /// Pretty-printed JSON with sorted keys; from_json(to_json()) round-trips.
  std::string to_json() const;
  /// Applies `text` on top of the defaults. Unknown keys raise ConfigError naming the key.
  static RunConfig from_json(const std::string& text);
  /// Applies `text` on top of `*this`.
  void merge_json(const std::string& text);
  /// `dotted.key=value` override; the value is read as JSON, falling back to a bare string.
  void set(const std::string& assignment);

  std::filesystem::path dataset_path(const std::string& split) const;
};

/// Environment variable holding the default config path.
inline constexpr const char* kConfigEnvVar = "GFNET_CONFIG";

/// Defaults, then the file at `explicit_path` (or $GFNET_CONFIG when empty), then `overrides` in order.
RunConfig resolve_config(const std::string& explicit_path, const std::vector<std::string>& overrides);

}  // namespace gfnet
