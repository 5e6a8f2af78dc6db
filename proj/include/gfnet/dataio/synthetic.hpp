#pragma once

#include <cstddef>
#include <cstdint>

#include "gfnet/dataio/dataset.hpp"

namespace gfnet {

/// Procedural 10-class 3 x 32 x 32 corpus used for desk-scale experiments.
///
/// Each image holds one square object on a noisy background. The class is
/// (colour, stripe orientation): 5 colours x {horizontal, vertical}. Most
/// objects carry period-2 stripes, which cancel under 2x2 area averaging, so
/// the downsampled glance resolves only the colour and the orientation needs a
/// full-resolution patch over the object. A `coarse_fraction` of objects use
/// period-4 stripes that survive downsampling (the "easy" samples).
struct SyntheticSpec {
  std::uint32_t image_size = 32;
  std::uint32_t object_size = 10;
  double coarse_fraction = 0.3;
  int stripe_amplitude = 45;
  int background_noise = 18;
};

inline constexpr std::uint32_t kSyntheticClasses = 10;

/// Deterministic in (n, split, seed, spec). Manifest norm stats are left empty.
Dataset make_synthetic_dataset(std::size_t n, Split split, std::uint64_t seed, const SyntheticSpec& spec = {});

struct SyntheticCorpus {
  Dataset train, val, test;
};

/// Three disjoint splits; every manifest carries the train-split normalization stats.
SyntheticCorpus make_synthetic_corpus(std::size_t n_train, std::size_t n_val, std::size_t n_test,
                                      std::uint64_t seed, const SyntheticSpec& spec = {});

}  // namespace gfnet
