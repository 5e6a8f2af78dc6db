#include "gfnet/dataio/image.hpp"

#include <algorithm>
#include <cmath>

#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

// weights[o][i]: share of source cell i inside output cell o, normalised to sum 1 per output.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src, std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> out(dst);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double lo = static_cast<double>(o) * ratio;
    const double hi = static_cast<double>(o + 1) * ratio;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < src && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) out[o].emplace_back(i, overlap / ratio);
    }
  }
  return out;
}

}  // namespace

void PatchSpec::validate_for(std::size_t image_h, std::size_t image_w) const {
  if (height != width) throw ConfigError("patch spec: height and width must be equal");
  if (height == 0 || height > image_h || width > image_w) {
    throw ConfigError("patch spec: " + std::to_string(height) + "x" + std::to_string(width) +
                      " does not fit a " + std::to_string(image_h) + "x" + std::to_string(image_w) + " image");
  }
}

FloatImage to_float_image(std::span<const std::uint8_t> pixels, std::size_t c, std::size_t h, std::size_t w) {
  if (pixels.size() != c * h * w) throw ConfigError("to_float_image: pixel count does not match C x H x W");
  FloatImage img{c, h, w, std::vector<real>(pixels.size())};
  for (std::size_t i = 0; i < pixels.size(); ++i) img.values[i] = static_cast<real>(pixels[i] / 255.0);
  return img;
}

FloatImage resize_glance(const FloatImage& image, const PatchSpec& spec) {
  if (spec.height > image.h || spec.width > image.w) {
    throw ConfigError("resize_glance: upsampling from " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                      " to " + std::to_string(spec.height) + "x" + std::to_string(spec.width) + " is not supported");
  }
  if (spec.height == 0 || spec.width == 0) throw ConfigError("resize_glance: empty target size");
  const auto rows = area_weights(image.h, spec.height);
  const auto cols = area_weights(image.w, spec.width);
  FloatImage out{image.c, spec.height, spec.width, std::vector<real>(image.c * spec.height * spec.width)};
  for (std::size_t ch = 0; ch < image.c; ++ch) {
    for (std::size_t oy = 0; oy < spec.height; ++oy) {
      for (std::size_t ox = 0; ox < spec.width; ++ox) {
        double acc = 0;
        for (auto [iy, wy] : rows[oy])
          for (auto [ix, wx] : cols[ox]) acc += wy * wx * static_cast<double>(image.at(ch, iy, ix));
        out.values[(ch * spec.height + oy) * spec.width + ox] = static_cast<real>(acc);
      }
    }
  }
  return out;
}

Location clamp_centre(std::size_t image_h, std::size_t image_w, Location centre, const PatchSpec& spec) {
  const double half_y = static_cast<double>(spec.height) / (2.0 * static_cast<double>(image_h));
  const double half_x = static_cast<double>(spec.width) / (2.0 * static_cast<double>(image_w));
  return {std::clamp(centre.y, half_y, 1.0 - half_y), std::clamp(centre.x, half_x, 1.0 - half_x)};
}

PixelWindow patch_window(std::size_t image_h, std::size_t image_w, Location centre, const PatchSpec& spec) {
  spec.validate_for(image_h, image_w);
  const Location c = clamp_centre(image_h, image_w, centre, spec);
  auto start = [](double coord, std::size_t extent, std::size_t size) {
    const long top = std::lround(coord * static_cast<double>(extent)) - static_cast<long>(size / 2);
    return static_cast<std::size_t>(std::clamp(top, 0L, static_cast<long>(extent - size)));
  };
  return {start(c.y, image_h, spec.height), start(c.x, image_w, spec.width), spec.height, spec.width};
}

FloatImage crop_patch(const FloatImage& image, Location centre, const PatchSpec& spec) {
  const PixelWindow win = patch_window(image.h, image.w, centre, spec);
  FloatImage out{image.c, win.height, win.width, std::vector<real>(image.c * win.height * win.width)};
  for (std::size_t ch = 0; ch < image.c; ++ch)
    for (std::size_t y = 0; y < win.height; ++y)
      for (std::size_t x = 0; x < win.width; ++x)
        out.values[(ch * win.height + y) * win.width + x] = image.at(ch, win.top + y, win.left + x);
  return out;
}

void normalize_in_place(FloatImage& image, const NormStats& stats) {
  if (stats.mean.size() != image.c || stats.stddev.size() != image.c) {
    throw ConfigError("normalize: statistics do not match the channel count");
  }
  const std::size_t hw = image.h * image.w;
  for (std::size_t ch = 0; ch < image.c; ++ch) {
    const double m = stats.mean[ch], s = stats.stddev[ch];
    for (std::size_t k = 0; k < hw; ++k) {
      real& v = image.values[ch * hw + k];
      v = static_cast<real>((static_cast<double>(v) - m) / s);
    }
  }
}

AugmentDecision sample_augment(Rng& rng, int max_shift) {
  AugmentDecision d;
  d.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  std::uniform_int_distribution<int> shift(-max_shift, max_shift);
  d.dy = shift(rng);
  d.dx = shift(rng);
  return d;
}

std::vector<std::uint8_t> apply_augment(std::span<const std::uint8_t> image, std::size_t c, std::size_t h,
                                        std::size_t w, const AugmentDecision& decision) {
  if (image.size() != c * h * w) throw ConfigError("augment: pixel count does not match C x H x W");
  std::vector<std::uint8_t> out(image.size(), 0);
  const long hh = static_cast<long>(h), ww = static_cast<long>(w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (long y = 0; y < hh; ++y) {
      const long sy = y + decision.dy;
      if (sy < 0 || sy >= hh) continue;
      for (long x = 0; x < ww; ++x) {
        long sx = x + decision.dx;
        if (sx < 0 || sx >= ww) continue;
        if (decision.flip) sx = ww - 1 - sx;
        out[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] =
            image[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> augment(std::span<const std::uint8_t> image, std::size_t c, std::size_t h, std::size_t w,
                                  Rng& rng) {
  return apply_augment(image, c, h, w, sample_augment(rng));
}

}  // namespace gfnet
