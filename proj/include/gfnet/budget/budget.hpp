#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gfnet {

/// q_t = z (1 - q)^(t-1) q for t = 1..T, normalised to sum to one.
///
/// `q` may be negative when produced by solve_q: the geometric ratio 1 - q then
/// exceeds one and mass shifts towards later steps, which is what budgets above
/// the uniform mean cost need.
struct ExitDistribution {
  double q = 0.5;
  double z = 1.0;
  std::vector<double> probs;

  std::size_t steps() const { return probs.size(); }
};

/// C_t: cumulative cost of a sample that exits at step t.
struct CostModel {
  std::vector<double> cumulative;

  std::size_t steps() const { return cumulative.size(); }
  /// Non-empty, positive, strictly increasing.
  void validate() const;
};

struct BudgetSolution {
  ExitDistribution exit;
  std::vector<double> thresholds;  // η_1..η_T, η_T = 0
  std::vector<double> costs;       // C_1..C_T
  double budget = 0;               // per sample
  double expected_cost = 0;

  /// Canonical `key=value` record.
  std::string to_text() const;
  static BudgetSolution from_text(const std::string& text);
};

/// Requires 0 < q < 1 and T >= 1.
ExitDistribution exit_distribution(double q, std::size_t steps);
/// Same family parameterised by ratio = 1 - q > 0; ratio > 1 is allowed.
ExitDistribution geometric_exit_distribution(double ratio, std::size_t steps);

double expected_cost(const ExitDistribution& exit, const CostModel& cost);

/// Equality solution of Σ q_t C_t = budget (to 1e-6 C_T) with expected cost never above the budget.
/// budget < C_1 throws InfeasibleBudget; budget >= C_T returns (nearly) all mass at T.
ExitDistribution solve_q(double budget_per_sample, const CostModel& cost);

/// Per-sample, per-step confidences from a full-T sweep: conf[n][t].
using ConfidenceTable = std::vector<std::vector<double>>;

/// Sequential quantile calibration: at each step the η_t that lets the target
/// number of current survivors (cumulative round(N Σ_{s<=t} q_s)) strictly
/// exceed it; ties at the boundary put η_t on the tied value. η_T = 0.
std::vector<double> calibrate_thresholds(const ExitDistribution& exit, const ConfidenceTable& confidences);

/// solve_q + calibrate_thresholds in one record.
BudgetSolution solve_budget(double budget_per_sample, const CostModel& cost, const ConfidenceTable& confidences);

/// Exit step (1-based) of a confidence row under `thresholds`: first t with conf > η_t.
std::size_t exit_step_for(const std::vector<double>& confidences, const std::vector<double>& thresholds);

}  // namespace gfnet
