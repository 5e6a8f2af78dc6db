#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "gfnet/dataio/dataset.hpp"
#include "gfnet/dataio/image.hpp"
#include "gfnet/dataio/synthetic.hpp"
#include "gfnet/util/errors.hpp"

using namespace gfnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "gfnet_dataio_tests";
  fs::create_directories(dir);
  return dir / name;
}

FloatImage random_image(std::size_t c, std::size_t h, std::size_t w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0, 1);
  FloatImage img{c, h, w, std::vector<real>(c * h * w)};
  for (auto& v : img.values) v = static_cast<real>(d(rng));
  return img;
}

}  // namespace

TEST_CASE("resize_glance: area mean and constants") {
  FloatImage img{1, 2, 2, {1, 2, 3, 4}};
  CHECK(resize_glance(img, {1, 1}).values[0] == doctest::Approx(2.5));

  FloatImage flat{3, 8, 8, std::vector<real>(192, 0.25f)};
  FloatImage small = resize_glance(flat, {4, 4});
  CHECK(small.h == 4);
  for (real v : small.values) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("resize_glance: 32->16 equals the 2x2 block-mean oracle") {
  FloatImage img = random_image(3, 32, 32, 5);
  FloatImage out = resize_glance(img, {16, 16});
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const double block = (static_cast<double>(img.at(ch, 2 * y, 2 * x)) + img.at(ch, 2 * y, 2 * x + 1) +
                              img.at(ch, 2 * y + 1, 2 * x) + img.at(ch, 2 * y + 1, 2 * x + 1)) / 4.0;
        CHECK(out.at(ch, y, x) == static_cast<real>(block));
      }
}

TEST_CASE("resize_glance: idempotent at the target size; upsampling rejected") {
  FloatImage img = random_image(3, 32, 32, 6);
  FloatImage once = resize_glance(img, {16, 16});
  FloatImage twice = resize_glance(once, {16, 16});
  CHECK(once.values == twice.values);
  CHECK_THROWS_AS(resize_glance(once, {32, 32}), ConfigError);
}

TEST_CASE("resize_glance: non-integer ratios preserve range") {
  FloatImage img = random_image(1, 10, 10, 8);
  FloatImage out = resize_glance(img, {3, 3});
  for (real v : out.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("crop_patch: centred and corner windows") {
  PatchSpec spec{16, 16};
  PixelWindow mid = patch_window(32, 32, {0.5, 0.5}, spec);
  CHECK(mid.top == 8);
  CHECK(mid.left == 8);
  PixelWindow corner = patch_window(32, 32, {0.0, 0.0}, spec);
  CHECK(corner.top == 0);
  CHECK(corner.left == 0);
  Location clamped = clamp_centre(32, 32, {0.0, 0.0}, spec);
  CHECK(clamped.y == doctest::Approx(0.25));
  CHECK(clamped.x == doctest::Approx(0.25));
  PixelWindow far = patch_window(32, 32, {1.0, 1.0}, spec);
  CHECK(far.top == 16);
  CHECK(far.left == 16);
}

TEST_CASE("crop_patch: index-map oracle and bounds over random centres") {
  FloatImage img{2, 32, 32, std::vector<real>(2 * 32 * 32)};
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<real>(i);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(0, 1);
  PatchSpec spec{16, 16};
  for (int trial = 0; trial < 500; ++trial) {
    Location c{d(rng), d(rng)};
    PixelWindow win = patch_window(32, 32, c, spec);
    REQUIRE(win.top + win.height <= 32);
    REQUIRE(win.left + win.width <= 32);
    FloatImage patch = crop_patch(img, c, spec);
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
          const std::size_t src = (ch * 32 + win.top + y) * 32 + win.left + x;
          REQUIRE(patch.at(ch, y, x) == static_cast<real>(src));
        }
  }
}

TEST_CASE("patch spec must be square and fit") {
  CHECK_THROWS_AS((PatchSpec{16, 8}.validate_for(32, 32)), ConfigError);
  CHECK_THROWS_AS((PatchSpec{40, 40}.validate_for(32, 32)), ConfigError);
}

TEST_CASE("augment: flip is an involution and zero shift is identity") {
  std::vector<std::uint8_t> img(3 * 8 * 8);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint8_t>(i * 7);
  CHECK(apply_augment(img, 3, 8, 8, {false, 0, 0}) == img);
  AugmentDecision flip{true, 0, 0};
  auto once = apply_augment(img, 3, 8, 8, flip);
  CHECK(once != img);
  CHECK(apply_augment(once, 3, 8, 8, flip) == img);
  // Shifting pads with zeros.
  auto shifted = apply_augment(img, 3, 8, 8, {false, 4, 0});
  CHECK(shifted[(0 * 8 + 7) * 8 + 0] == 0);
  CHECK(shifted[0] == img[4 * 8]);
}

TEST_CASE("augment: flip frequency over 10000 draws") {
  Rng rng(42);
  int flips = 0;
  for (int i = 0; i < 10000; ++i) flips += sample_augment(rng).flip ? 1 : 0;
  CHECK(flips >= 4800);
  CHECK(flips <= 5200);
}

TEST_CASE("dataset save/load round trip is bit identical") {
  Dataset ds = make_synthetic_dataset(10, Split::Train, 1);
  ds.manifest.norm = compute_norm_stats(ds);
  const fs::path path = temp_path("roundtrip.gfds");
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  CHECK(back.n == 10);
  CHECK(back.pixels == ds.pixels);
  CHECK(back.labels == ds.labels);
  CHECK(back.manifest.norm.mean == ds.manifest.norm.mean);
  CHECK(back.manifest.norm.stddev == ds.manifest.norm.stddev);
  CHECK(back.manifest.split == Split::Train);
}

TEST_CASE("dataset: wide labels use two bytes") {
  Dataset ds;
  ds.n = 2;
  ds.c = 1;
  ds.h = ds.w = 2;
  ds.num_classes = 300;
  ds.pixels = {1, 2, 3, 4, 5, 6, 7, 8};
  ds.labels = {299, 7};
  const fs::path path = temp_path("wide.gfds");
  save_dataset(ds, path);
  CHECK(fs::file_size(path) == 28 + 8 + 4);
  CHECK(load_dataset(path).labels == ds.labels);
}

TEST_CASE("dataset load errors are distinct") {
  Dataset ds = make_synthetic_dataset(10, Split::Train, 2);
  const fs::path good = temp_path("good.gfds");
  save_dataset(ds, good);
  std::ifstream in(good, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto write = [](const fs::path& p, const std::string& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  const fs::path truncated = temp_path("truncated.gfds");
  write(truncated, bytes.substr(0, 28 + 3072 * 4 + 100));
  try {
    load_dataset(truncated);
    FAIL("expected truncation error");
  } catch (const LoadError& e) {
    CHECK(e.kind() == LoadError::Kind::Truncated);
    CHECK(std::string(e.what()).find("truncated payload at byte offset 12416") != std::string::npos);
  }

  const fs::path magic = temp_path("magic.gfds");
  std::string bad = bytes;
  bad[0] = 'X';
  write(magic, bad);
  try {
    load_dataset(magic);
    FAIL("expected bad magic");
  } catch (const LoadError& e) {
    CHECK(e.kind() == LoadError::Kind::BadMagic);
  }

  const fs::path label = temp_path("label.gfds");
  std::string bad_label = bytes;
  bad_label[bad_label.size() - 1] = static_cast<char>(10);
  write(label, bad_label);
  try {
    load_dataset(label);
    FAIL("expected label error");
  } catch (const LoadError& e) {
    CHECK(e.kind() == LoadError::Kind::LabelOutOfRange);
  }
  CHECK_THROWS_AS(load_dataset(temp_path("missing.gfds")), LoadError);
}

TEST_CASE("synthetic corpus: deterministic, balanced-ish, train stats everywhere") {
  SyntheticCorpus a = make_synthetic_corpus(200, 50, 50, 9);
  SyntheticCorpus b = make_synthetic_corpus(200, 50, 50, 9);
  CHECK(a.train.pixels == b.train.pixels);
  CHECK(a.val.pixels != a.train.pixels);
  CHECK(a.test.manifest.norm.mean == a.train.manifest.norm.mean);
  CHECK(a.val.manifest.split == Split::Val);
  std::vector<int> counts(10, 0);
  for (int y : a.train.labels) ++counts[static_cast<std::size_t>(y)];
  for (int c : counts) CHECK(c > 5);
}
