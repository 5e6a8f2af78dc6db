#include "doctest.h"

#include <cmath>
#include <random>

#include "gfnet/numcore/layers.hpp"
#include "gfnet/numcore/ops.hpp"
#include "gfnet/util/errors.hpp"
#include "reference.hpp"

using namespace gfnet;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<real>(dist(rng));
  return Tensor::from(shape, v, grad);
}

std::vector<double> to_double(std::span<const real> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("conv2d of ones sums the window") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor y = conv2d(x, k, Tensor(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(9.0));
}

TEST_CASE("conv2d identity 1x1 kernel reproduces its input") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({2, 1, 5, 4}, rng);
  Tensor y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0f), Tensor(), 1, 0);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("conv2d matches the nested-loop reference") {
  std::mt19937_64 rng(7);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    Tensor y = conv2d(x, k, Tensor(), stride, pad);
    std::size_t ho = 0, wo = 0;
    auto expect = ref::conv2d(to_double(x.data()), 2, 3, 8, 8, to_double(k.data()), 4, 3, 3, stride, pad, ho, wo);
    REQUIRE(y.shape() == Shape{2, 4, ho, wo});
    CHECK(ho == (8 + 2 * pad - 3) / stride + 1);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::abs(y.at(i) - expect[i]) <= 1e-5 * std::max(1.0, std::abs(expect[i])));
    }
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 2, 3, 3}), Tensor(), 1, 0), ConfigError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 0), ConfigError);
}

TEST_CASE("global average pooling") {
  CHECK(global_avg_pool(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4})).item() == doctest::Approx(2.5));
  Tensor c = global_avg_pool(Tensor::full({2, 3, 4, 5}, 0.75f));
  for (real v : c.data()) CHECK(v == doctest::Approx(0.75));

  std::mt19937_64 rng(3);
  Tensor x = random_tensor({3, 4, 5, 6}, rng);
  Tensor p = global_avg_pool(x);
  for (std::size_t i = 0; i < 12; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 30; ++j) total += x.at(i * 30 + j);
    CHECK(std::abs(p.at(i) - total / 30.0) < 1e-6);
  }
}

TEST_CASE("gru cell with zero parameters halves the hidden state") {
  Rng rng(0);
  GruParams p = GruParams::create(3, 4, rng);
  for (Tensor* t : {&p.w_ir, &p.w_iz, &p.w_in, &p.w_hr, &p.w_hz, &p.w_hn, &p.b_ir, &p.b_iz, &p.b_in, &p.b_hr,
                    &p.b_hz, &p.b_hn})
    for (auto& v : t->mutable_data()) v = 0;
  GruState h{Tensor::from({1, 4}, {1.0f, -2.0f, 0.5f, 4.0f})};
  GruState next = gru_cell(Tensor::from({1, 3}, {0.3f, 0.1f, -0.7f}), h, p);
  for (std::size_t i = 0; i < 4; ++i) CHECK(next.hidden.at(i) == doctest::Approx(0.5 * h.hidden.at(i)));
}

TEST_CASE("gru cell: zero input, zero state, zero biases gives zero") {
  Rng rng(5);
  GruParams p = GruParams::create(3, 4, rng);
  for (Tensor* t : {&p.b_ir, &p.b_iz, &p.b_in, &p.b_hr, &p.b_hz, &p.b_hn})
    for (auto& v : t->mutable_data()) v = 0;
  GruState next = gru_cell(Tensor::zeros({2, 3}), GruState::zeros(2, 4), p);
  for (real v : next.hidden.data()) CHECK(v == 0.0f);
}

TEST_CASE("gru cell matches the scalar reference") {
  Rng rng(11);
  const std::size_t d = 5, hd = 6, n = 3;
  GruParams p = GruParams::create(d, hd, rng);
  ref::Gru r{d, hd, to_double(p.w_ir.data()), to_double(p.w_iz.data()), to_double(p.w_in.data()),
             to_double(p.w_hr.data()), to_double(p.w_hz.data()), to_double(p.w_hn.data()),
             to_double(p.b_ir.data()), to_double(p.b_iz.data()), to_double(p.b_in.data()),
             to_double(p.b_hr.data()), to_double(p.b_hz.data()), to_double(p.b_hn.data())};
  Tensor x = random_tensor({n, d}, rng);
  Tensor h0 = random_tensor({n, hd}, rng);
  GruState next = gru_cell(x, {h0}, p);
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<double> xv(x.data().begin() + b * d, x.data().begin() + (b + 1) * d);
    std::vector<double> hv(h0.data().begin() + b * hd, h0.data().begin() + (b + 1) * hd);
    auto expect = r.step(xv, hv);
    for (std::size_t i = 0; i < hd; ++i) CHECK(std::abs(next.hidden.at(b * hd + i) - expect[i]) < 1e-5);
  }
}

TEST_CASE("softmax cross-entropy special cases") {
  auto uniform = softmax_cross_entropy(Tensor::zeros({2, 4}), {0, 3});
  CHECK(uniform.loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  auto saturated = softmax_cross_entropy(Tensor::from({1, 3}, {100, 0, 0}), {0});
  CHECK(saturated.loss.item() == doctest::Approx(0.0));
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 4}), {4}), InputError);
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 4}), {-1}), InputError);
}

TEST_CASE("softmax rows lie on the simplex") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = scale(random_tensor({4, 10}, rng), 5.0f);
    Tensor p = softmax(logits);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < 10; ++j) {
        CHECK(p.at(i * 10 + j) >= 0.0f);
        total += p.at(i * 10 + j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("linear and matmul agree") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({5, 4}, rng);
  Tensor y1 = linear(x, w, Tensor());
  // Transpose w by hand.
  std::vector<real> wt(20);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) wt[j * 5 + i] = w.at(i * 4 + j);
  Tensor y2 = matmul(x, Tensor::from({4, 5}, wt));
  for (std::size_t i = 0; i < 15; ++i) CHECK(y1.at(i) == doctest::Approx(y2.at(i)));
}

TEST_CASE("forward is bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    return global_avg_pool(relu(conv2d(x, k, Tensor(), 2, 1)));
  };
  Tensor a = run(), b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}
