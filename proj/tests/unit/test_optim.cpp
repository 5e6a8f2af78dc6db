#include "doctest.h"

#include <cmath>
#include <numbers>

#include "gfnet/numcore/ops.hpp"
#include "gfnet/numcore/optim.hpp"
#include "reference.hpp"

using namespace gfnet;

TEST_CASE("plain sgd step") {
  Tensor w = Tensor::from({1}, {0.0f}, true);
  w.mutable_grad()[0] = 1.0f;
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  Optimizer opt;
  opt.add_group({w}, cfg);
  opt.step(0);
  CHECK(w.at(0) == doctest::Approx(-0.1));
}

TEST_CASE("nesterov sgd follows the momentum recursion") {
  Tensor w = Tensor::from({1}, {1.0f}, true);
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  Optimizer opt;
  opt.add_group({w}, cfg);
  double ref_w = 1.0, buf = 0.0;
  for (int t = 0; t < 5; ++t) {
    opt.zero_grad();
    sum(square(w)).backward();
    opt.step(static_cast<std::size_t>(t));
    const double g = 2 * ref_w;
    buf = t == 0 ? g : 0.9 * buf + g;
    ref_w -= 0.1 * (g + 0.9 * buf);
    CHECK(w.at(0) == doctest::Approx(ref_w).epsilon(1e-5));
  }
}

TEST_CASE("cosine schedule") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.4;
  cfg.schedule = LrSchedule::Cosine;
  cfg.total_steps = 100;
  CHECK(cfg.learning_rate_at(0) == doctest::Approx(0.4));
  CHECK(cfg.learning_rate_at(50) == doctest::Approx(0.2));
  CHECK(cfg.learning_rate_at(100) == doctest::Approx(0.0));
  CHECK(cfg.learning_rate_at(500) >= 0.0);
  double prev = cfg.learning_rate_at(0);
  for (std::size_t t = 1; t <= 100; ++t) {
    const double lr = cfg.learning_rate_at(t);
    CHECK(lr <= prev);
    CHECK(lr >= 0.0);
    prev = lr;
  }
}

TEST_CASE("adam matches the scalar reference on w^2") {
  Tensor w = Tensor::from({1}, {1.0f}, true);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Adam;
  cfg.learning_rate = 0.1;
  Optimizer opt;
  opt.add_group({w}, cfg);
  auto expect = ref::adam_sequence(1.0, [](double v) { return 2 * v; }, 3, 0.1);
  for (int t = 0; t < 3; ++t) {
    opt.zero_grad();
    sum(square(w)).backward();
    opt.step(static_cast<std::size_t>(t));
    CHECK(std::abs(w.at(0) - expect[static_cast<std::size_t>(t)]) < 1e-7);
  }
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS(cfg.validate());
}
