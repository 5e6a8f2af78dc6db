#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gfnet/budget/budget.hpp"
#include "gfnet/dataio/dataset.hpp"
#include "gfnet/dataio/image.hpp"
#include "gfnet/model/gfmodel.hpp"

namespace gfnet {

enum class InferenceMode { Budgeted, Anytime, Full };
enum class PolicyKind { Learned, Random, CentreCorner };

std::string to_string(InferenceMode m);
std::string to_string(PolicyKind p);
PolicyKind parse_policy_kind(const std::string& text);

struct InferenceConfig {
  InferenceMode mode = InferenceMode::Full;
  std::vector<double> thresholds;  // budgeted: η_1..η_T
  std::size_t anytime_step = 1;    // anytime: t*
  PolicyKind policy = PolicyKind::Learned;
  std::uint64_t random_seed = 0;   // random policy

  /// Checks the mode's requirements against a model with T steps.
  void validate(std::size_t max_steps) const;
  static InferenceConfig budgeted(const BudgetSolution& solution, PolicyKind policy = PolicyKind::Learned);
};

struct StepRecord {
  std::optional<Location> location;  // empty for the glance step
  std::vector<double> probs;         // p_t in double
  double confidence = 0;             // max_j p_tj
  int predicted = 0;
};

struct EpisodeTrace {
  std::size_t sample_id = 0;
  int label = -1;
  std::vector<StepRecord> steps;  // one per executed step
  std::size_t exit_step = 0;      // 1-based
  int predicted = 0;
  double cost = 0;                // C_exit, or the step count without a cost model

  bool correct() const { return predicted == label; }
};

/// t = 2 is the centre, then the corners (0,0), (0,1), (1,0), (1,1); from t = 7 on the corners repeat.
Location centre_corner_location(std::size_t step);

/// Softmax in double of one logit row; argmax ties go to the lowest index.
std::vector<double> softmax_double(std::span<const real> logits);
std::size_t argmax(std::span<const double> values);

/// Sequential inference of a single image (batch of one).
EpisodeTrace infer(const GfModel& model, const FloatImage& image, const InferenceConfig& config,
                   std::size_t sample_id = 0, int label = -1, const CostModel* cost = nullptr);

struct InferenceSummary {
  std::size_t samples = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  std::vector<std::size_t> exit_counts;  // per step
  double average_cost = 0;               // Σ_t exit_count_t C_t / N

  bool operator==(const InferenceSummary&) const = default;
};

struct BatchResult {
  std::vector<EpisodeTrace> traces;  // in sample order
  InferenceSummary summary;
};

/// Runs infer over every sample of `ds` on `concurrency` worker lanes; results do not depend on the lane count.
BatchResult batch_infer(const GfModel& model, const Dataset& ds, const InferenceConfig& config,
                        const CostModel* cost = nullptr, std::size_t concurrency = 1);

/// Recomputes the summary of a trace corpus.
InferenceSummary summarize(const std::vector<EpisodeTrace>& traces, std::size_t max_steps, const CostModel* cost);

/// Per-sample per-step confidences of full-T traces, as consumed by calibrate_thresholds.
ConfidenceTable confidence_table(const std::vector<EpisodeTrace>& full_traces);
/// Accuracy of argmax p_t for every t from full-T traces.
std::vector<double> per_step_accuracy(const std::vector<EpisodeTrace>& full_traces);
/// Cut a full-T trace at the step `thresholds` pick; identical to running budgeted inference.
EpisodeTrace truncate_trace(const EpisodeTrace& full, const std::vector<double>& thresholds, const CostModel* cost);

/// One JSON line per trace.
void write_traces(std::ostream& out, const std::vector<EpisodeTrace>& traces, const GfModel& model);
std::vector<EpisodeTrace> read_traces(std::istream& in);

}  // namespace gfnet
