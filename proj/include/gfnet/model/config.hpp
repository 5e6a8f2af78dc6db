#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gfnet/dataio/dataset.hpp"
#include "gfnet/dataio/image.hpp"

namespace gfnet {

enum class ClassifierVariant { Gru, CascadedFc };

std::string to_string(ClassifierVariant v);
ClassifierVariant parse_classifier_variant(const std::string& text);

/// 3x3 conv + ReLU per stage; the last stage width is the feature dimension F.
struct EncoderConfig {
  std::vector<std::size_t> channels{16, 32, 64, 128};
  std::vector<std::size_t> strides{1, 2, 2, 2};

  std::size_t feature_dim() const { return channels.back(); }
  /// Spatial side of the last feature map for a square input of side `input`.
  std::size_t output_side(std::size_t input) const;
};

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t num_classes = 10;
  std::size_t max_steps = 4;  // T
  PatchSpec patch{16, 16};
  EncoderConfig encoder;
  ClassifierVariant classifier = ClassifierVariant::Gru;
  std::size_t classifier_hidden = 128;
  std::size_t policy_channels = 16;  // 1x1 reducer width
  std::size_t policy_hidden = 64;
  double action_std = 0.1;
  NormStats norm;

  void validate() const;
  /// Canonical `key=value` lines in a fixed order; parse(to_text()) round-trips.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

}  // namespace gfnet
