#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfnet {

enum class Split { Train, Val, Test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Per-channel statistics on the [0, 1] pixel scale.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Manifest {
  std::string source;
  Split split = Split::Train;
  NormStats norm;  // always the train-split statistics
};

/// Images are stored as N x C x H x W bytes.
struct Dataset {
  std::uint32_t n = 0, c = 0, h = 0, w = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  Manifest manifest;

  std::size_t image_size() const { return std::size_t{c} * h * w; }
  std::span<const std::uint8_t> image(std::size_t i) const;
  /// Throws ConfigError if sizes or labels are inconsistent.
  void validate() const;
};

/// Mean/stddev per channel over every pixel of `train`.
NormStats compute_norm_stats(const Dataset& train);

class LoadError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, BadHeader, Truncated, LabelOutOfRange, BadManifest };
  LoadError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Binary GFDS file plus `<path>.manifest` sidecar.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
/// `format` must be "gfds". A missing sidecar leaves the manifest default-initialised.
Dataset load_dataset(const std::filesystem::path& path, const std::string& format = "gfds");

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

}  // namespace gfnet
