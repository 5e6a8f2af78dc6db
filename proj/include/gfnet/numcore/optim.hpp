#pragma once

#include <cstddef>
#include <vector>

#include "gfnet/numcore/tensor.hpp"

namespace gfnet {

enum class OptimizerKind { SgdNesterov, Adam };
enum class LrSchedule { Constant, Cosine };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::SgdNesterov;
  double learning_rate = 0.1;
  double momentum = 0.9;  // sgd only
  double beta1 = 0.9;     // adam only
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  LrSchedule schedule = LrSchedule::Constant;
  std::size_t total_steps = 1;  // cosine horizon

  /// lr(t) = lr0 (1 + cos(π t / T_total)) / 2 for cosine; t is clamped to the horizon.
  double learning_rate_at(std::size_t step_index) const;
  void validate() const;
};

/// Stateful optimizer over groups of parameters, each group with its own config.
class Optimizer {
 public:
  void add_group(std::vector<Tensor> params, const OptimizerConfig& config);
  /// Applies one update from the current grads. `step_index` drives the lr schedule.
  void step(std::size_t step_index);
  void zero_grad();
  std::size_t steps_taken() const { return steps_taken_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<real> buf_a;  // momentum buffer / adam first moment
    std::vector<real> buf_b;  // adam second moment
    bool started = false;
  };
  struct Group {
    OptimizerConfig config;
    std::vector<Slot> slots;
  };
  std::vector<Group> groups_;
  std::size_t steps_taken_ = 0;
};

}  // namespace gfnet
