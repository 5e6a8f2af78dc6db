#include "gfnet/budget/budget.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

std::string join(const std::vector<double>& values) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw ConfigError("budget record: bad number '" + s + "'");
  return v;
}

std::vector<double> split(const std::string& text) {
  std::vector<double> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(parse_double(item));
  }
  return out;
}

// Largest |log ratio| the solver explores; shrinks with T so q_t never underflows.
double log_ratio_bound(std::size_t steps) { return std::min(60.0, 600.0 / static_cast<double>(steps - 1)); }

}  // namespace

void CostModel::validate() const {
  if (cumulative.empty()) throw ConfigError("cost model: no steps");
  if (!(cumulative.front() > 0)) throw ConfigError("cost model: C_1 must be positive");
  for (std::size_t t = 1; t < cumulative.size(); ++t) {
    if (!(cumulative[t] > cumulative[t - 1])) throw ConfigError("cost model: C_t must be strictly increasing");
  }
}

ExitDistribution exit_distribution(double q, std::size_t steps) {
  if (!(q > 0.0 && q < 1.0)) throw InputError("exit_distribution: q must lie in (0, 1), got " + std::to_string(q));
  return geometric_exit_distribution(1.0 - q, steps);
}

ExitDistribution geometric_exit_distribution(double ratio, std::size_t steps) {
  if (steps == 0) throw InputError("exit_distribution: T must be at least 1");
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw InputError("exit_distribution: ratio must be positive and finite");
  ExitDistribution d;
  d.q = 1.0 - ratio;
  // Log-space weights keep large ratios finite.
  const double log_ratio = std::log(ratio);
  const double peak = log_ratio > 0 ? log_ratio * static_cast<double>(steps - 1) : 0.0;
  d.probs.resize(steps);
  double total = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    d.probs[t] = std::exp(log_ratio * static_cast<double>(t) - peak);
    total += d.probs[t];
  }
  for (auto& p : d.probs) p /= total;
  // z such that q_1 = z q; undefined (infinite) only at q = 0 where the family is uniform.
  d.z = d.q != 0.0 ? d.probs[0] / d.q : std::numeric_limits<double>::infinity();
  return d;
}

double expected_cost(const ExitDistribution& exit, const CostModel& cost) {
  if (exit.steps() != cost.steps()) throw ConfigError("expected_cost: T differs between exit distribution and cost model");
  double total = 0;
  for (std::size_t t = 0; t < exit.steps(); ++t) total += exit.probs[t] * cost.cumulative[t];
  return total;
}

ExitDistribution solve_q(double budget, const CostModel& cost) {
  cost.validate();
  const std::size_t steps = cost.steps();
  const double c1 = cost.cumulative.front(), ct = cost.cumulative.back();
  if (budget < c1) {
    std::ostringstream os;
    os << "budget " << budget << " per sample is below the glance cost C_1 = " << c1 << "; feasible range is [" << c1
       << ", " << ct << "]";
    throw InfeasibleBudget(os.str(), c1, ct);
  }
  if (steps == 1) return geometric_exit_distribution(0.5, 1);

  // Expected cost is increasing in log(ratio); bisect keeping cost(lo) <= budget.
  // The bracket ends act as the floor and ceiling: there every q_t is still
  // positive while the cost sits within rounding of C_1 or C_T.
  double lo = -log_ratio_bound(steps), hi = log_ratio_bound(steps);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (expected_cost(geometric_exit_distribution(std::exp(mid), steps), cost) <= budget) lo = mid;
    else hi = mid;
  }
  return geometric_exit_distribution(std::exp(lo), steps);
}

std::vector<double> calibrate_thresholds(const ExitDistribution& exit, const ConfidenceTable& confidences) {
  const std::size_t steps = exit.steps();
  if (steps == 0) throw InputError("calibrate_thresholds: empty exit distribution");
  for (const auto& row : confidences) {
    if (row.size() < steps) throw InputError("calibrate_thresholds: confidence rows must cover all T steps");
  }
  const std::size_t n = confidences.size();
  std::vector<double> thresholds(steps, 0.0);
  std::vector<std::size_t> survivors(n);
  std::iota(survivors.begin(), survivors.end(), std::size_t{0});
  std::size_t exited = 0;
  double cumulative = 0;
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    cumulative += exit.probs[t];
    if (survivors.empty()) {
      thresholds[t] = 0.0;
      continue;
    }
    const auto target = static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n)));
    const std::size_t k = std::min(target > exited ? target - exited : 0, survivors.size());
    std::vector<double> values;
    values.reserve(survivors.size());
    for (std::size_t i : survivors) values.push_back(confidences[i][t]);
    std::sort(values.begin(), values.end(), std::greater<>());
    double eta;
    if (k == 0) eta = 1.0;
    else if (k == values.size()) eta = 0.0;
    else if (values[k - 1] == values[k]) eta = values[k];
    else eta = 0.5 * (values[k - 1] + values[k]);
    thresholds[t] = eta;
    std::vector<std::size_t> remaining;
    for (std::size_t i : survivors) {
      if (confidences[i][t] > eta) ++exited;
      else remaining.push_back(i);
    }
    survivors = std::move(remaining);
  }
  thresholds[steps - 1] = 0.0;
  return thresholds;
}

BudgetSolution solve_budget(double budget, const CostModel& cost, const ConfidenceTable& confidences) {
  BudgetSolution s;
  s.exit = solve_q(budget, cost);
  s.thresholds = calibrate_thresholds(s.exit, confidences);
  s.costs = cost.cumulative;
  s.budget = budget;
  s.expected_cost = expected_cost(s.exit, cost);
  return s;
}

std::size_t exit_step_for(const std::vector<double>& confidences, const std::vector<double>& thresholds) {
  const std::size_t steps = std::min(confidences.size(), thresholds.size());
  for (std::size_t t = 0; t < steps; ++t) {
    if (confidences[t] > thresholds[t]) return t + 1;
  }
  return steps;
}

std::string BudgetSolution::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "budget=" << budget << "\n";
  os << "q=" << exit.q << "\n";
  os << "z=" << exit.z << "\n";
  os << "q_t=" << join(exit.probs) << "\n";
  os << "eta_t=" << join(thresholds) << "\n";
  os << "C_t=" << join(costs) << "\n";
  os << "expected_cost=" << expected_cost << "\n";
  return os.str();
}

BudgetSolution BudgetSolution::from_text(const std::string& text) {
  BudgetSolution s;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("budget record: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
    if (key == "budget") s.budget = parse_double(v);
    else if (key == "q") s.exit.q = parse_double(v);
    else if (key == "z") s.exit.z = parse_double(v);
    else if (key == "q_t") s.exit.probs = split(v);
    else if (key == "eta_t") s.thresholds = split(v);
    else if (key == "C_t") s.costs = split(v);
    else if (key == "expected_cost") s.expected_cost = parse_double(v);
    else throw ConfigError("budget record: unknown key '" + key + "'");
  }
  return s;
}

}  // namespace gfnet
