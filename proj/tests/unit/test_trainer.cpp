#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include "gfnet/dataio/synthetic.hpp"
#include "gfnet/numcore/ops.hpp"
#include "gfnet/train/trainer.hpp"
#include "gfnet/train/unroll.hpp"
#include "gfnet/util/errors.hpp"
#include "support/corner_bandit.hpp"

using namespace gfnet;

namespace {

ModelConfig tiny_config(std::size_t steps = 3) {
  ModelConfig c;
  c.encoder.channels = {4, 8};
  c.encoder.strides = {2, 2};
  c.classifier_hidden = 12;
  c.policy_channels = 3;
  c.policy_hidden = 6;
  c.max_steps = steps;
  return c;
}

struct Batch {
  std::vector<FloatImage> images;
  std::vector<const FloatImage*> ptrs;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& ds, std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.images.push_back(load_image(ds, i));
    b.labels.push_back(ds.labels[i]);
  }
  for (const auto& im : b.images) b.ptrs.push_back(&im);
  return b;
}

/// Fixed centres, identical for every sample.
class FixedLocations final : public LocationSource {
 public:
  explicit FixedLocations(std::vector<Location> per_step) : per_step_(std::move(per_step)) {}
  void reset(std::size_t batch) override {
    batch_ = batch;
    k_ = 0;
  }
  std::vector<Location> next(const EncodeResult&) override { return std::vector<Location>(batch_, per_step_[k_++]); }

 private:
  std::vector<Location> per_step_;
  std::size_t batch_ = 0, k_ = 0;
};

double ce_by_hand(std::span<const real> logits, std::size_t row, std::size_t classes, int label) {
  const auto v = logits.subspan(row * classes, classes);
  double peak = -1e300;
  for (real x : v) peak = std::max(peak, static_cast<double>(x));
  double total = 0;
  for (real x : v) total += std::exp(static_cast<double>(x) - peak);
  return std::log(total) + peak - static_cast<double>(v[static_cast<std::size_t>(label)]);
}

std::vector<std::vector<real>> values_of(const ParamList& params) {
  std::vector<std::vector<real>> out;
  for (const auto& [n, t] : params) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST_CASE("cls loss matches a hand-unrolled oracle") {
  const auto ds = make_synthetic_dataset(6, Split::Train, 3);
  GfModel m = GfModel::create(tiny_config(3), 4);
  Batch b = make_batch(ds, 6);
  const std::vector<Location> locs{{0.2, 0.7}, {0.9, 0.1}};
  FixedLocations src(locs);
  const double lambda = 0.6;
  const Tensor loss = compute_cls_loss(unroll(m, b.ptrs, src, 3, true), b.labels, lambda);

  // Oracle: drive the model pieces step by step and evaluate each CE in double.
  const std::size_t c = m.config().num_classes;
  EncodeResult enc = m.encode(m.glance_batch(b.ptrs), EncoderKind::Global);
  ClassifyResult cls = m.classify_step(enc.pooled, m.initial_classifier_state(6));
  double total = 0;
  for (std::size_t t = 1; t <= 3; ++t) {
    if (t > 1) {
      std::vector<Location> at(6, locs[t - 2]);
      enc = m.encode(m.patch_batch(b.ptrs, at), EncoderKind::Local);
      cls = m.classify_step(enc.pooled, cls.state);
    }
    const Tensor aux = m.aux_logits(enc.pooled, t);
    for (std::size_t i = 0; i < 6; ++i) {
      total += ce_by_hand(cls.logits.data(), i, c, b.labels[i]) + lambda * ce_by_hand(aux.data(), i, c, b.labels[i]);
    }
  }
  CHECK(loss.item() == doctest::Approx(total / (6.0 * 3.0)).epsilon(1e-6));
}

TEST_CASE("cls loss: lambda zero is the plain per-step cross entropy") {
  const auto ds = make_synthetic_dataset(4, Split::Train, 5);
  GfModel m = GfModel::create(tiny_config(3), 2);
  Batch b = make_batch(ds, 4);
  FixedLocations src({{0.5, 0.5}, {0.1, 0.9}});
  const Unroll u = unroll(m, b.ptrs, src, 3, true);
  Tensor plain = softmax_cross_entropy(u.logits[0], b.labels).loss;
  for (std::size_t t = 1; t < 3; ++t) plain = add(plain, softmax_cross_entropy(u.logits[t], b.labels).loss);
  CHECK(compute_cls_loss(u, b.labels, 0.0).item() == scale(plain, real(1) / 3).item());
  CHECK_THROWS_AS(compute_cls_loss(u, b.labels, -1.0), ConfigError);
}

TEST_CASE("cls loss: single step") {
  const auto ds = make_synthetic_dataset(5, Split::Train, 6);
  GfModel m = GfModel::create(tiny_config(3), 3);
  Batch b = make_batch(ds, 5);
  FixedLocations src({});
  const Unroll u = unroll(m, b.ptrs, src, 1, true);
  const double expected = softmax_cross_entropy(u.logits[0], b.labels).loss.item() +
                          0.5 * softmax_cross_entropy(u.aux_logits[0], b.labels).loss.item();
  CHECK(compute_cls_loss(u, b.labels, 0.5).item() == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("cls loss: auxiliary heads get no gradient when lambda is zero") {
  const auto ds = make_synthetic_dataset(4, Split::Train, 8);
  GfModel m = GfModel::create(tiny_config(3), 5);
  Batch b = make_batch(ds, 4);
  FixedLocations src({{0.3, 0.3}, {0.6, 0.8}});
  for (auto& [n, t] : m.parameters()) t.zero_grad();
  compute_cls_loss(unroll(m, b.ptrs, src, 3, false), b.labels, 0.0).backward();
  bool any_cls = false;
  for (auto& [name, t] : m.parameters(Component::Classifier)) {
    const bool aux = name.find(".aux") != std::string::npos;
    double mag = 0;
    for (real g : t.grad()) mag += std::abs(g);
    if (aux) CHECK(mag == 0.0);
    else any_cls = any_cls || mag > 0;
  }
  CHECK(any_cls);
}

TEST_CASE("stage 0: full-batch loss falls, lambda is ignored with a warning, runs are reproducible") {
  const auto ds = make_synthetic_dataset(100, Split::Train, 11);
  auto run = [&](std::vector<std::string>& warnings) {
    GfModel m = GfModel::create(tiny_config(3), 9);
    StageConfig cfg = default_stage_config(0);
    cfg.epochs = 10;
    cfg.batch_size = 100;
    cfg.augment = false;
    cfg.lambda = 0.5;
    TrainHooks hooks;
    hooks.warn = [&](const std::string& w) { warnings.push_back(w); };
    const StageReport r = stage0_pretrain(m, ds, cfg, hooks);
    return std::make_pair(values_of(m.parameters()), r.losses);
  };
  std::vector<std::string> w1, w2;
  const auto [p1, losses] = run(w1);
  const auto [p2, losses2] = run(w2);
  REQUIRE(losses.size() == 10);
  int falling = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) falling += losses[i] < losses[i - 1];
  CHECK(falling >= 8);
  CHECK(w1.size() == 1);
  CHECK(p1 == p2);
  CHECK(losses == losses2);
}

TEST_CASE("stage 1 leaves the policy alone and stage 3 leaves it alone too") {
  const auto ds = make_synthetic_dataset(24, Split::Train, 12);
  GfModel m = GfModel::create(tiny_config(3), 10);
  const auto policy = m.component_hash(Component::Policy);
  const auto local = m.component_hash(Component::LocalEncoder);
  StageConfig cfg = default_stage_config(1);
  cfg.epochs = 1;
  cfg.batch_size = 8;
  std::ostringstream metrics;
  TrainHooks hooks;
  hooks.metrics = &metrics;
  stage1_train(m, ds, cfg, hooks);
  CHECK(m.component_hash(Component::Policy) == policy);
  CHECK(m.component_hash(Component::LocalEncoder) != local);
  // One metrics line per optimiser step.
  const std::string log = metrics.str();
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);

  const auto before3 = m.component_hash(Component::Classifier);
  StageConfig c3 = default_stage_config(3);
  c3.epochs = 1;
  c3.batch_size = 8;
  stage3_finetune(m, ds, c3);
  CHECK(m.component_hash(Component::Policy) == policy);
  CHECK(m.component_hash(Component::Classifier) != before3);
}

TEST_CASE("stage 3 with zero epochs is a no-op") {
  const auto ds = make_synthetic_dataset(8, Split::Train, 13);
  GfModel m = GfModel::create(tiny_config(3), 11);
  const auto before = values_of(m.parameters());
  StageConfig cfg = default_stage_config(3);
  cfg.epochs = 0;
  stage3_finetune(m, ds, cfg);
  CHECK(values_of(m.parameters()) == before);
}

TEST_CASE("discounted returns") {
  const std::vector<double> r{0.1, 0.2, 0.3};
  const auto g = discounted_returns(r, 0.7);
  CHECK(g[0] == doctest::Approx(0.387).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.2 + 0.7 * 0.3).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(0.3).epsilon(1e-12));
  const auto g0 = discounted_returns(r, 1e-12);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(g0[i] == doctest::Approx(r[i]).epsilon(1e-9));
}

TEST_CASE("clipped surrogate arithmetic") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  for (double r = 0.1; r < 2.0; r += 0.1)
    for (double a : {-2.0, -0.3, 0.4, 1.7}) CHECK(clipped_surrogate(r, a, 0.2) <= r * a + 1e-12);
}

TEST_CASE("rollouts: telescoping rewards, full-length episodes, recursive advantages") {
  const auto ds = make_synthetic_dataset(20, Split::Train, 14);
  GfModel m = GfModel::create(tiny_config(4), 12);
  Batch b = make_batch(ds, 20);
  PpoConfig ppo;
  Rng rng(3);
  const Rollout r = collect_rollouts(m, b.ptrs, b.labels, ppo, rng, 7);
  REQUIRE(r.episodes == 20);
  REQUIRE(r.steps == 3);
  CHECK(r.maps.size() == 3);
  for (std::size_t e = 0; e < r.episodes; ++e) {
    double total = 0;
    for (std::size_t k = 0; k < r.steps; ++k) total += r.rewards[r.index(e, k)];
    CHECK(std::abs(total - (r.true_class_prob[e * 4 + 3] - r.true_class_prob[e * 4])) < 1e-12);
    for (std::size_t k = 0; k + 1 < r.steps; ++k) {
      const double direct = r.advantages[r.index(e, k)];
      const double recursive =
          r.rewards[r.index(e, k)] + ppo.gamma * r.returns[r.index(e, k + 1)] - r.values[r.index(e, k)];
      CHECK(std::abs(direct - recursive) < 1e-12);
    }
  }
}

TEST_CASE("ppo aborts on a non-finite ratio") {
  const auto ds = make_synthetic_dataset(8, Split::Train, 15);
  GfModel m = GfModel::create(tiny_config(3), 13);
  Batch b = make_batch(ds, 8);
  PpoConfig ppo;
  Rng rng(4);
  Rollout r = collect_rollouts(m, b.ptrs, b.labels, ppo, rng);
  r.old_log_prob[3] = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> all(8);
  std::iota(all.begin(), all.end(), std::size_t{0});
  CHECK_THROWS_AS(ppo_objective(m, r, all, r.advantages, ppo), NumericError);
}

TEST_CASE("ppo objective at the collecting policy has unit ratio") {
  const auto ds = make_synthetic_dataset(8, Split::Train, 16);
  GfModel m = GfModel::create(tiny_config(3), 14);
  Batch b = make_batch(ds, 8);
  PpoConfig ppo;
  Rng rng(5);
  const Rollout r = collect_rollouts(m, b.ptrs, b.labels, ppo, rng);
  std::vector<std::size_t> all(8);
  std::iota(all.begin(), all.end(), std::size_t{0});
  PpoStats s;
  ppo_objective(m, r, all, r.advantages, ppo, &s);
  CHECK(s.mean_ratio == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(s.entropy == doctest::Approx(gaussian_entropy(0.1)).epsilon(1e-5));
}

TEST_CASE("ppo learns a corner-seeking bandit") {
  GfModel m = GfModel::create(testing::bandit_model_config(), 21);
  const auto frozen = m.component_hash(Component::Classifier);
  const auto r = testing::run_corner_bandit(m, 50);
  MESSAGE("bandit mean reward " << r.before << " -> " << r.after);
  CHECK(r.after >= 1.3 * r.before);
  CHECK(m.component_hash(Component::Classifier) == frozen);
}

TEST_CASE("stage 2 trains only the policy and keeps the best epoch") {
  const auto corpus = make_synthetic_corpus(32, 16, 1, 17);
  ModelConfig c = tiny_config(3);
  c.norm = corpus.train.manifest.norm;
  GfModel m = GfModel::create(c, 15);
  const auto g = m.component_hash(Component::GlobalEncoder), l = m.component_hash(Component::LocalEncoder),
             k = m.component_hash(Component::Classifier), p = m.component_hash(Component::Policy);
  PpoConfig ppo;
  ppo.epochs = 2;
  ppo.rollout_size = 16;
  std::ostringstream metrics, events;
  TrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.events = &events;
  const StageReport r = stage2_train(m, corpus.train, corpus.val, ppo, hooks);
  CHECK(m.component_hash(Component::GlobalEncoder) == g);
  CHECK(m.component_hash(Component::LocalEncoder) == l);
  CHECK(m.component_hash(Component::Classifier) == k);
  CHECK(m.component_hash(Component::Policy) != p);
  CHECK(r.val_accuracy.size() == 3);
  // 2 epochs x 2 buffers x 4 update epochs x 4 minibatches.
  const std::string log = metrics.str();
  CHECK(std::count(log.begin(), log.end(), '\n') == 64);
  CHECK(r.losses.size() == 64);
  const std::string ev = events.str();
  CHECK(std::count(ev.begin(), ev.end(), '\n') == 2);
}

TEST_CASE("learnable action spread moves only when enabled") {
  const auto ds = make_synthetic_dataset(16, Split::Train, 18);
  for (bool learn : {false, true}) {
    GfModel m = GfModel::create(tiny_config(3), 16);
    Batch b = make_batch(ds, 16);
    PpoConfig ppo;
    ppo.learn_action_std = learn;
    ppo.entropy_coef = 1.0;
    Optimizer opt;
    opt.add_group(ppo_parameters(m, ppo), ppo_optimizer_config(ppo));
    Rng rng(6);
    const Rollout r = collect_rollouts(m, b.ptrs, b.labels, ppo, rng);
    ppo_update(m, r, ppo, opt, rng);
    if (learn) CHECK(m.action_std() != doctest::Approx(0.1).epsilon(1e-6));
    else CHECK(m.action_std() == doctest::Approx(0.1).epsilon(1e-6));
  }
}
