#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gfnet/budget/budget.hpp"
#include "gfnet/engine/engine.hpp"
#include "gfnet/model/config.hpp"

namespace gfnet {

/// Multiply-adds are counted one per MAC; biases and activations are excluded.
struct ConvSpec {
  std::size_t in_channels = 0, out_channels = 0, kernel = 3, stride = 1, padding = 1;
};

/// Output side of a convolution: floor((side + 2p - k) / s) + 1.
std::size_t conv_output_side(std::size_t side, const ConvSpec& conv);
/// N F C kh kw Ho Wo with N = 1.
std::uint64_t conv_macs(const ConvSpec& conv, std::size_t height, std::size_t width);
/// Sum over a stack applied in sequence to a square input.
std::uint64_t conv_stack_macs(const std::vector<ConvSpec>& stack, std::size_t side);
/// The encoder's 3x3 stack for `in_channels`.
std::vector<ConvSpec> encoder_convs(const EncoderConfig& encoder, std::size_t in_channels);

struct LayerOps {
  std::string component;  // global_encoder, local_encoder, classifier, policy, aux_heads
  std::string layer;
  std::uint64_t macs = 0;
};

struct OpCount {
  std::vector<LayerOps> layers;
  std::uint64_t global_encoder = 0;     // one glance
  std::uint64_t local_encoder = 0;      // one patch
  std::vector<std::uint64_t> classifier;  // f_C at step t
  std::uint64_t policy = 0;             // one π step
  std::vector<std::uint64_t> aux_heads;   // FC_t
  std::vector<double> cumulative;       // C_t

  std::uint64_t total_per_component(const std::string& component) const;
  CostModel cost_model() const { return CostModel{cumulative}; }
};

/// C_1 = f_G + f_C(1) + FC_1; C_t = C_{t-1} + π + f_L + f_C(t) + FC_t.
OpCount count_ops(const ModelConfig& config);

/// Median wall-clock milliseconds of an anytime run to t, for t = 1..T (single lane, batch of one).
std::vector<double> measure_latency(const GfModel& model, const FloatImage& image, std::size_t reps,
                                    std::size_t warmup = 2, PolicyKind policy = PolicyKind::Learned);

struct CurvePoint {
  double budget = 0;  // per-sample budget, or C_t for anytime points
  double realized_cost = 0;
  double accuracy = 0;
  double q = 0;
  std::vector<double> thresholds;
  std::vector<std::size_t> exit_counts;

  bool operator==(const CurvePoint&) const = default;
};

/// For each budget: solve_q, calibrate on `calibration` (full-T traces), replay on `evaluation` (full-T traces).
/// Replaying a full trace is the same as budgeted inference because early exit only truncates.
std::vector<CurvePoint> sweep_budgets(const std::vector<EpisodeTrace>& calibration,
                                      const std::vector<EpisodeTrace>& evaluation, const CostModel& cost,
                                      const std::vector<double>& budgets,
                                      const std::function<void(const std::string&)>& notice = {});

/// `count` log-spaced budgets from C_1 to C_T inclusive.
std::vector<double> auto_budgets(const CostModel& cost, std::size_t count = 10);

/// Anytime points: accuracy of argmax p_t at cost C_t.
std::vector<CurvePoint> anytime_curve(const std::vector<EpisodeTrace>& full_traces, const CostModel& cost);

/// Provenance lines written as `# key: value` before the CSV header.
using Provenance = std::map<std::string, std::string>;

enum class CurveFormat { Csv, Jsonl };

/// CSV columns: budget, realized_cost, accuracy, q, eta_1..eta_T, exit_1..exit_T.
void export_curves(std::ostream& out, const std::vector<CurvePoint>& points, const Provenance& provenance,
                   CurveFormat format = CurveFormat::Csv);
struct ParsedCurves {
  Provenance provenance;
  std::vector<CurvePoint> points;
};
ParsedCurves parse_curves(std::istream& in, CurveFormat format = CurveFormat::Csv);
std::vector<std::string> curve_columns(std::size_t steps);

}  // namespace gfnet
