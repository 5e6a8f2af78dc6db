#include "doctest.h"

#include <sstream>

#include "gfnet/bench/bench.hpp"
#include "gfnet/dataio/synthetic.hpp"
#include "gfnet/engine/engine.hpp"
#include "gfnet/train/unroll.hpp"
#include "gfnet/util/errors.hpp"

using namespace gfnet;

namespace {

ModelConfig engine_config(std::size_t steps = 4) {
  ModelConfig c;
  c.encoder.channels = {4, 8};
  c.encoder.strides = {2, 2};
  c.classifier_hidden = 12;
  c.policy_channels = 3;
  c.policy_hidden = 6;
  c.max_steps = steps;
  return c;
}

struct Fixture {
  SyntheticCorpus corpus = make_synthetic_corpus(120, 100, 1, 31);
  GfModel model = [&] {
    ModelConfig c = engine_config();
    c.norm = corpus.train.manifest.norm;
    return GfModel::create(c, 3);
  }();
  CostModel cost = count_ops(model.config()).cost_model();
};

}  // namespace

TEST_CASE("engine: zero first threshold exits every sample at the glance") {
  Fixture f;
  InferenceConfig cfg;
  cfg.mode = InferenceMode::Budgeted;
  cfg.thresholds = {0.0, 0.5, 0.5, 0.0};
  const auto r = batch_infer(f.model, f.corpus.train, cfg, &f.cost);
  CHECK(r.summary.exit_counts[0] == f.corpus.train.n);
  for (const auto& tr : r.traces) {
    CHECK(tr.exit_step == 1);
    CHECK(tr.steps.size() == 1);
    CHECK_FALSE(tr.steps[0].location.has_value());
  }
}

TEST_CASE("engine: unit thresholds run every sample to T") {
  Fixture f;
  InferenceConfig cfg;
  cfg.mode = InferenceMode::Budgeted;
  cfg.thresholds = {1.0, 1.0, 1.0, 0.0};
  const auto r = batch_infer(f.model, f.corpus.train, cfg, &f.cost);
  CHECK(r.summary.exit_counts[3] == f.corpus.train.n);
  CHECK(r.summary.average_cost == f.cost.cumulative[3]);
}

TEST_CASE("engine: anytime runs are prefixes of the full run") {
  Fixture f;
  InferenceConfig full, any;
  any.mode = InferenceMode::Anytime;
  any.anytime_step = 2;
  for (PolicyKind p : {PolicyKind::Learned, PolicyKind::Random, PolicyKind::CentreCorner}) {
    full.policy = any.policy = p;
    const auto a = batch_infer(f.model, f.corpus.val, any);
    const auto b = batch_infer(f.model, f.corpus.val, full);
    for (std::size_t i = 0; i < a.traces.size(); ++i) {
      REQUIRE(a.traces[i].steps.size() == 2);
      for (std::size_t t = 0; t < 2; ++t) {
        CHECK(a.traces[i].steps[t].probs == b.traces[i].steps[t].probs);
      }
    }
  }
  any.anytime_step = 4;
  full.policy = any.policy = PolicyKind::Learned;
  CHECK(batch_infer(f.model, f.corpus.val, any).summary == batch_infer(f.model, f.corpus.val, full).summary);
}

TEST_CASE("engine: centre-corner order and wrap") {
  CHECK(centre_corner_location(2).y == 0.5);
  CHECK(centre_corner_location(2).x == 0.5);
  const Location expected[] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t t = 3; t <= 10; ++t) {
    const Location l = centre_corner_location(t);
    CHECK(l.y == expected[(t - 3) % 4].y);
    CHECK(l.x == expected[(t - 3) % 4].x);
  }
  const PixelWindow w = patch_window(32, 32, centre_corner_location(3), PatchSpec{});
  CHECK(w.top == 0);
  CHECK(w.left == 0);
  CHECK_THROWS_AS(centre_corner_location(1), UsageError);

  Fixture f;
  InferenceConfig cfg;
  cfg.policy = PolicyKind::CentreCorner;
  const auto tr = infer(f.model, load_image(f.corpus.val, 0), cfg);
  REQUIRE(tr.steps.size() == 4);
  CHECK(tr.steps[1].location->y == 0.5);
  CHECK(tr.steps[2].location->x == 0.0);
  CHECK(tr.steps[3].location->x == 1.0);
}

TEST_CASE("engine: summary identity and independence from the lane count") {
  Fixture f;
  InferenceConfig cfg;
  cfg.mode = InferenceMode::Budgeted;
  cfg.thresholds = {0.105, 0.11, 0.1, 0.0};
  for (PolicyKind p : {PolicyKind::Learned, PolicyKind::Random}) {
    cfg.policy = p;
    cfg.random_seed = 42;
    const auto one = batch_infer(f.model, f.corpus.train, cfg, &f.cost, 1);
    const auto eight = batch_infer(f.model, f.corpus.train, cfg, &f.cost, 8);
    CHECK(one.summary == eight.summary);
    std::ostringstream a, b;
    write_traces(a, one.traces, f.model);
    write_traces(b, eight.traces, f.model);
    CHECK(a.str() == b.str());
    double total = 0;
    for (std::size_t t = 0; t < 4; ++t) total += static_cast<double>(one.summary.exit_counts[t]) * f.cost.cumulative[t];
    CHECK(one.summary.average_cost == total / static_cast<double>(one.summary.samples));
    for (const auto& tr : one.traces) {
      CHECK(tr.cost == f.cost.cumulative[tr.exit_step - 1]);
      const bool confident = tr.steps.back().confidence > cfg.thresholds[tr.exit_step - 1];
      CHECK((confident || tr.exit_step == 4));
    }
  }
}

TEST_CASE("engine: random policy is reproducible from its seed") {
  Fixture f;
  InferenceConfig cfg;
  cfg.policy = PolicyKind::Random;
  cfg.random_seed = 5;
  std::ostringstream a, b, c;
  write_traces(a, batch_infer(f.model, f.corpus.val, cfg).traces, f.model);
  write_traces(b, batch_infer(f.model, f.corpus.val, cfg).traces, f.model);
  cfg.random_seed = 6;
  write_traces(c, batch_infer(f.model, f.corpus.val, cfg).traces, f.model);
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("engine: calibrated thresholds replay within the budget") {
  Fixture f;
  const auto full = batch_infer(f.model, f.corpus.train, InferenceConfig{}, &f.cost);
  const ConfidenceTable table = confidence_table(full.traces);
  for (double b : auto_budgets(f.cost, 10)) {
    const BudgetSolution s = solve_budget(b, f.cost, table);
    const auto replay = batch_infer(f.model, f.corpus.train, InferenceConfig::budgeted(s), &f.cost);
    CHECK(replay.summary.average_cost <= 1.02 * b);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(std::abs(static_cast<double>(replay.summary.exit_counts[t]) - s.exit.probs[t] * f.corpus.train.n) <= 1.0);
    }
    // Truncating the full traces gives the same episodes.
    for (std::size_t i = 0; i < full.traces.size(); ++i) {
      const EpisodeTrace cut = truncate_trace(full.traces[i], s.thresholds, &f.cost);
      CHECK(cut.exit_step == replay.traces[i].exit_step);
      CHECK(cut.predicted == replay.traces[i].predicted);
    }
  }
}

TEST_CASE("engine: prediction is invariant under monotone logit transforms") {
  const std::vector<real> logits{0.3f, -1.2f, 2.5f, 2.4f, 0.0f};
  std::vector<real> shifted;
  for (real v : logits) shifted.push_back(3 * v + 7);
  CHECK(argmax(softmax_double(logits)) == 2);
  CHECK(argmax(softmax_double(shifted)) == 2);
  const std::vector<real> tie{1.0f, 4.0f, 4.0f};
  CHECK(argmax(softmax_double(tie)) == 1);
}

TEST_CASE("engine: traces round-trip and carry in-bounds patch windows") {
  Fixture f;
  InferenceConfig cfg;
  cfg.policy = PolicyKind::CentreCorner;
  const auto r = batch_infer(f.model, f.corpus.val, cfg, &f.cost);
  std::stringstream io;
  write_traces(io, r.traces, f.model);
  const std::string text = io.str();
  const auto back = read_traces(io);
  REQUIRE(back.size() == r.traces.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].exit_step == r.traces[i].exit_step);
    CHECK(back[i].steps.size() == r.traces[i].steps.size());
    CHECK(back[i].steps[1].confidence == r.traces[i].steps[1].confidence);
  }
  CHECK(text.find("\"location\":\"glance\"") != std::string::npos);
  CHECK(text.find("\"window\"") != std::string::npos);
  CHECK(infer(f.model, load_image(f.corpus.val, 0), cfg, 0, f.corpus.val.labels[0], &f.cost).steps[3].confidence ==
        r.traces[0].steps[3].confidence);
}

TEST_CASE("engine: config validation") {
  InferenceConfig cfg;
  cfg.mode = InferenceMode::Anytime;
  cfg.anytime_step = 0;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.anytime_step = 5;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.mode = InferenceMode::Budgeted;
  cfg.thresholds = {0.5};
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  CHECK(parse_policy_kind("centre-corner") == PolicyKind::CentreCorner);
  CHECK_THROWS_AS(parse_policy_kind("greedy"), ConfigError);
}
