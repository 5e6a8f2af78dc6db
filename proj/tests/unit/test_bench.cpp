#include "doctest.h"

#include <sstream>

#include "gfnet/bench/bench.hpp"
#include "gfnet/dataio/synthetic.hpp"
#include "gfnet/train/unroll.hpp"
#include "gfnet/util/errors.hpp"

using namespace gfnet;

namespace {

ModelConfig bench_config() {
  ModelConfig c;
  c.encoder.channels = {4, 8};
  c.encoder.strides = {2, 2};
  c.classifier_hidden = 12;
  c.policy_channels = 3;
  c.policy_hidden = 6;
  c.max_steps = 4;
  return c;
}

}  // namespace

TEST_CASE("ops: hand-counted two-layer net") {
  // 3->4 channels, 3x3, stride 1 on 8x8: 4*3*9*64; then 4->2, stride 2 -> 4x4: 2*4*9*16.
  const std::vector<ConvSpec> net{{3, 4, 3, 1, 1}, {4, 2, 3, 2, 1}};
  CHECK(conv_stack_macs(net, 8) == 6912 + 1152);
}

TEST_CASE("ops: doubling one layer's output channels doubles that layer") {
  const ConvSpec a{16, 32, 3, 2, 1}, b{16, 64, 3, 2, 1};
  CHECK(conv_macs(b, 20, 20) == 2 * conv_macs(a, 20, 20));
}

TEST_CASE("ops: encoder cost scales with the input area") {
  const auto convs = encoder_convs(EncoderConfig{}, 3);
  const double r = static_cast<double>(conv_stack_macs(convs, 96)) / static_cast<double>(conv_stack_macs(convs, 224));
  CHECK(r >= 0.175);
  CHECK(r <= 0.19);
  for (std::size_t s : {16u, 24u, 32u, 48u, 64u}) {
    const double q = static_cast<double>(conv_stack_macs(convs, s)) / static_cast<double>(conv_stack_macs(convs, 2 * s));
    CHECK(q >= 0.24);
    CHECK(q <= 0.26);
  }
}

TEST_CASE("ops: cumulative costs follow the step structure") {
  const ModelConfig c = bench_config();
  const OpCount ops = count_ops(c);
  std::uint64_t sum = 0;
  for (const auto& l : ops.layers) sum += l.macs;
  std::uint64_t parts = ops.global_encoder + ops.local_encoder + ops.policy;
  for (std::size_t t = 0; t < 4; ++t) parts += ops.classifier[t] + ops.aux_heads[t];
  CHECK(sum == parts);
  CHECK(ops.cumulative[0] == static_cast<double>(ops.global_encoder + ops.classifier[0] + ops.aux_heads[0]));
  for (std::size_t t = 1; t < 4; ++t) {
    CHECK(ops.cumulative[t] - ops.cumulative[t - 1] ==
          static_cast<double>(ops.policy + ops.local_encoder + ops.classifier[t] + ops.aux_heads[t]));
  }
  CHECK_NOTHROW(ops.cost_model().validate());
  // Hand count of the 4-8 encoder at 16x16: 4*3*9*64 + 8*4*9*16.
  CHECK(ops.global_encoder == 4 * 3 * 9 * 64 + 8 * 4 * 9 * 16);
}

TEST_CASE("latency: per-step medians grow with the number of steps and are stable") {
  const auto corpus = make_synthetic_corpus(2, 1, 1, 2);
  const GfModel m = GfModel::create(ModelConfig{}, 1);
  const FloatImage img = load_image(corpus.train, 0);
  const auto lat = measure_latency(m, img, 31);
  REQUIRE(lat.size() == m.max_steps());
  for (std::size_t t = 1; t < lat.size(); ++t) CHECK(lat[t] > lat[t - 1]);
  const auto once = measure_latency(m, img, 1);
  const auto many = measure_latency(m, img, 101);
  MESSAGE("latency ms reps=1 " << once.back() << " reps=101 " << many.back());
  CHECK(std::abs(once.back() - many.back()) <= 0.2 * many.back());
}

TEST_CASE("latency: weighted average over a trace corpus") {
  const std::vector<double> lat{1.0, 2.5, 4.0};
  const std::vector<std::size_t> counts{5, 3, 2};
  std::vector<EpisodeTrace> traces;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < counts[t]; ++i) {
      EpisodeTrace tr;
      tr.exit_step = t + 1;
      tr.steps.resize(t + 1);
      traces.push_back(tr);
    }
  const CostModel latency{lat};
  const auto s = summarize(traces, 3, &latency);
  CHECK(s.average_cost == doctest::Approx((5 * 1.0 + 3 * 2.5 + 2 * 4.0) / 10));
}

TEST_CASE("sweep: endpoints, ordering and export round trip") {
  const auto corpus = make_synthetic_corpus(120, 150, 150, 41);
  ModelConfig c = bench_config();
  c.norm = corpus.train.manifest.norm;
  const GfModel m = GfModel::create(c, 6);
  const CostModel cost = count_ops(c).cost_model();
  const auto calib = batch_infer(m, corpus.val, InferenceConfig{}, &cost).traces;
  const auto eval = batch_infer(m, corpus.test, InferenceConfig{}, &cost).traces;
  const auto budgets = auto_budgets(cost, 10);
  REQUIRE(budgets.size() == 10);
  CHECK(budgets.front() == cost.cumulative.front());
  CHECK(budgets.back() == cost.cumulative.back());
  std::vector<std::string> notices;
  auto with_bad = budgets;
  with_bad.push_back(0.5 * cost.cumulative.front());
  const auto points = sweep_budgets(calib, eval, cost, with_bad, [&](const std::string& s) { notices.push_back(s); });
  CHECK(notices.size() == 1);
  REQUIRE(points.size() == 10);
  const auto acc = per_step_accuracy(eval);
  CHECK(points.back().accuracy == acc.back());
  CHECK(points.front().accuracy == acc.front());
  for (std::size_t i = 1; i < points.size(); ++i) CHECK(points[i].budget > points[i - 1].budget);

  // Replay via full budgeted inference agrees with truncation.
  BudgetSolution s = solve_budget(budgets[4], cost, confidence_table(calib));
  const auto direct = batch_infer(m, corpus.test, InferenceConfig::budgeted(s), &cost);
  CHECK(direct.summary.accuracy == points[4].accuracy);
  CHECK(direct.summary.average_cost == points[4].realized_cost);

  const Provenance prov{{"checkpoint_checksum", "00ff00ff00ff00ff"}, {"seed", "7"}};
  for (CurveFormat fmt : {CurveFormat::Csv, CurveFormat::Jsonl}) {
    std::stringstream io;
    export_curves(io, points, prov, fmt);
    const std::string text = io.str();
    CHECK(text.find("00ff00ff00ff00ff") != std::string::npos);
    const ParsedCurves back = parse_curves(io, fmt);
    CHECK(back.points == points);
    CHECK(back.provenance == prov);
  }
  std::stringstream csv;
  export_curves(csv, points, prov);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.rfind("#", 0) == 0) continue;
    CHECK(std::count(line.begin(), line.end(), ',') + 1 == 4 + 2 * 4);
    ++rows;
  }
  CHECK(rows == 11);
  CHECK_THROWS_AS(export_curves(csv, {}, prov), InputError);
}
