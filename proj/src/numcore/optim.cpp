#include "gfnet/numcore/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gfnet/util/errors.hpp"

namespace gfnet {

double OptimizerConfig::learning_rate_at(std::size_t step_index) const {
  if (schedule == LrSchedule::Constant) return learning_rate;
  const double horizon = static_cast<double>(std::max<std::size_t>(total_steps, 1));
  const double t = std::min(static_cast<double>(step_index), horizon);
  return std::max(0.0, learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t / horizon)));
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("optimizer: learning_rate must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("optimizer: momentum must lie in [0, 1)");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("optimizer: betas must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("optimizer: weight_decay must be non-negative");
}

void Optimizer::add_group(std::vector<Tensor> params, const OptimizerConfig& config) {
  config.validate();
  Group g{config, {}};
  for (auto& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) throw UsageError("optimizer: parameters must be trainable leaves");
    g.slots.push_back(Slot{p, std::vector<real>(p.numel(), 0), {}, false});
    if (config.kind == OptimizerKind::Adam) g.slots.back().buf_b.assign(p.numel(), 0);
  }
  groups_.push_back(std::move(g));
}

void Optimizer::zero_grad() {
  for (auto& g : groups_)
    for (auto& s : g.slots) s.param.zero_grad();
}

void Optimizer::step(std::size_t step_index) {
  ++steps_taken_;
  for (auto& group : groups_) {
    const auto& cfg = group.config;
    const real lr = static_cast<real>(cfg.learning_rate_at(step_index));
    const real wd = static_cast<real>(cfg.weight_decay);
    for (auto& slot : group.slots) {
      auto w = slot.param.mutable_data();
      auto grad = slot.param.grad();
      if (cfg.kind == OptimizerKind::SgdNesterov) {
        const real mu = static_cast<real>(cfg.momentum);
        for (std::size_t i = 0; i < w.size(); ++i) {
          const real g = grad[i] + wd * w[i];
          if (mu == 0) {
            w[i] -= lr * g;
            continue;
          }
          real& buf = slot.buf_a[i];
          buf = slot.started ? mu * buf + g : g;
          w[i] -= lr * (g + mu * buf);
        }
        slot.started = true;
      } else {
        const double t = static_cast<double>(steps_taken_);
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        const double lr_d = cfg.learning_rate_at(step_index);
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double g = static_cast<double>(grad[i]) + cfg.weight_decay * static_cast<double>(w[i]);
          const double m = cfg.beta1 * slot.buf_a[i] + (1 - cfg.beta1) * g;
          const double v = cfg.beta2 * slot.buf_b[i] + (1 - cfg.beta2) * g * g;
          slot.buf_a[i] = static_cast<real>(m);
          slot.buf_b[i] = static_cast<real>(v);
          w[i] = static_cast<real>(static_cast<double>(w[i]) - lr_d * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
        }
      }
    }
  }
}

}  // namespace gfnet
