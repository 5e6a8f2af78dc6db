#include "gfnet/dataio/synthetic.hpp"

#include <algorithm>
#include <array>

#include "gfnet/util/rng.hpp"

namespace gfnet {

namespace {

constexpr std::array<std::array<int, 3>, 5> kPalette{{
    {200, 55, 55},   // red
    {55, 190, 55},   // green
    {60, 70, 210},   // blue
    {205, 200, 50},  // yellow
    {195, 60, 200},  // magenta
}};

std::uint8_t to_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

Dataset make_synthetic_dataset(std::size_t n, Split split, std::uint64_t seed, const SyntheticSpec& spec) {
  Dataset ds;
  ds.n = static_cast<std::uint32_t>(n);
  ds.c = 3;
  ds.h = ds.w = spec.image_size;
  ds.num_classes = kSyntheticClasses;
  ds.pixels.resize(n * ds.image_size());
  ds.labels.resize(n);
  ds.manifest.source = "synthetic(seed=" + std::to_string(seed) + ")";
  ds.manifest.split = split;

  Rng rng = derive_rng(seed, 0x5EED, static_cast<std::uint64_t>(split));
  const int side = static_cast<int>(spec.image_size);
  const int obj = static_cast<int>(spec.object_size);
  std::uniform_int_distribution<int> label_dist(0, kSyntheticClasses - 1);
  std::uniform_int_distribution<int> pos_dist(0, side - obj);
  std::uniform_int_distribution<int> jitter(-20, 20);
  std::uniform_int_distribution<int> noise(-spec.background_noise, spec.background_noise);
  std::uniform_int_distribution<int> gray(85, 115);
  std::uniform_int_distribution<int> phase_dist(0, 3);
  std::bernoulli_distribution coarse(spec.coarse_fraction);

  for (std::size_t i = 0; i < n; ++i) {
    const int label = label_dist(rng);
    ds.labels[i] = label;
    const auto& base = kPalette[static_cast<std::size_t>(label / 2)];
    const bool vertical = label % 2 == 1;
    const int period = coarse(rng) ? 4 : 2;
    const int phase = phase_dist(rng);
    const int top = pos_dist(rng), left = pos_dist(rng);
    std::array<int, 3> colour{};
    for (std::size_t ch = 0; ch < 3; ++ch) colour[ch] = base[ch] + jitter(rng);
    const int bg = gray(rng);

    std::uint8_t* img = ds.pixels.data() + i * ds.image_size();
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const bool inside = y >= top && y < top + obj && x >= left && x < left + obj;
        const int coord = vertical ? x : y;
        const int stripe = ((coord + phase) / (period / 2)) % 2 == 0 ? 1 : -1;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const int v = inside ? colour[ch] + stripe * spec.stripe_amplitude : bg + noise(rng);
          img[(ch * spec.image_size + static_cast<std::size_t>(y)) * spec.image_size + static_cast<std::size_t>(x)] =
              to_byte(v);
        }
      }
    }
  }
  return ds;
}

SyntheticCorpus make_synthetic_corpus(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::uint64_t seed,
                                      const SyntheticSpec& spec) {
  SyntheticCorpus corpus{make_synthetic_dataset(n_train, Split::Train, seed, spec),
                         make_synthetic_dataset(n_val, Split::Val, seed, spec),
                         make_synthetic_dataset(n_test, Split::Test, seed, spec)};
  const NormStats stats = compute_norm_stats(corpus.train);
  for (Dataset* ds : {&corpus.train, &corpus.val, &corpus.test}) ds->manifest.norm = stats;
  return corpus;
}

}  // namespace gfnet
