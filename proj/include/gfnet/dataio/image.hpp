#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gfnet/dataio/dataset.hpp"
#include "gfnet/numcore/tensor.hpp"
#include "gfnet/util/rng.hpp"

namespace gfnet {

/// Size of both the glance and the focus patches (square).
struct PatchSpec {
  std::size_t height = 16;
  std::size_t width = 16;

  /// Requires height == width and 0 < size <= image size.
  void validate_for(std::size_t image_h, std::size_t image_w) const;
};

/// Normalized patch centre; y is the row axis, x the column axis, both in [0, 1].
struct Location {
  double y = 0.5;
  double x = 0.5;
};

/// Integer pixel window [top, top + height) x [left, left + width).
struct PixelWindow {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

/// C x H x W float image.
struct FloatImage {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<real> values;

  real at(std::size_t ch, std::size_t y, std::size_t x) const { return values[(ch * h + y) * w + x]; }
};

/// Bytes scaled to [0, 1].
FloatImage to_float_image(std::span<const std::uint8_t> pixels, std::size_t c, std::size_t h, std::size_t w);

/// Area-averaging downsample to the patch size. Upsampling is a ConfigError.
FloatImage resize_glance(const FloatImage& image, const PatchSpec& spec);

/// Clamps the centre so the window lies inside the image; top = round(cy * H) - H'/2, clamped to [0, H - H'].
PixelWindow patch_window(std::size_t image_h, std::size_t image_w, Location centre, const PatchSpec& spec);
Location clamp_centre(std::size_t image_h, std::size_t image_w, Location centre, const PatchSpec& spec);

/// Pixel copy of the clamped window; no resampling.
FloatImage crop_patch(const FloatImage& image, Location centre, const PatchSpec& spec);

/// (v - mean_c) / std_c per channel.
void normalize_in_place(FloatImage& image, const NormStats& stats);

struct AugmentDecision {
  bool flip = false;
  int dy = 0;  // shift in [-max_shift, max_shift]
  int dx = 0;
};

AugmentDecision sample_augment(Rng& rng, int max_shift = 4);
/// Horizontal flip, then shift-crop from a zero-padded canvas.
std::vector<std::uint8_t> apply_augment(std::span<const std::uint8_t> image, std::size_t c, std::size_t h,
                                        std::size_t w, const AugmentDecision& decision);
std::vector<std::uint8_t> augment(std::span<const std::uint8_t> image, std::size_t c, std::size_t h, std::size_t w,
                                  Rng& rng);

}  // namespace gfnet
