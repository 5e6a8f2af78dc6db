#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gfnet/dataio/image.hpp"
#include "gfnet/model/gfmodel.hpp"
#include "gfnet/numcore/optim.hpp"
#include "gfnet/util/rng.hpp"

namespace gfnet {

struct PpoConfig {
  double gamma = 0.7;
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 3e-4;
  std::size_t epochs = 15;         // passes over the training set
  std::size_t update_epochs = 4;   // optimisation passes over each rollout buffer
  std::size_t minibatch_size = 256;
  std::size_t rollout_size = 1024;  // episodes per buffer
  bool normalize_advantages = true;
  bool learn_action_std = false;
  std::uint64_t seed = 2;

  void validate() const;
  /// Minibatch actually used: capped at a quarter of the buffer so each pass takes several steps.
  std::size_t effective_minibatch(std::size_t episodes) const;
};

/// Policy steps k = 0..K-1 of each episode act at t = k + 2; K = T - 1.
struct Rollout {
  std::size_t episodes = 0;
  std::size_t steps = 0;
  Shape map_shape;                        // [F, h, w] of the policy input e_{t-1}
  std::vector<std::vector<real>> maps;    // per k: episodes x prod(map_shape)
  std::vector<real> actions;              // [episodes, K, 2], unclipped
  std::vector<double> old_log_prob;       // [episodes, K]
  std::vector<double> values;             // V(s_t)
  std::vector<double> rewards;            // r_t
  std::vector<double> returns;            // V^target(s_t)
  std::vector<double> advantages;         // V^target(s_t) - V(s_t)
  std::vector<double> true_class_prob;    // [episodes, T]: p_{t,y}

  std::size_t index(std::size_t episode, std::size_t k) const { return episode * steps + k; }
  /// Fills returns and advantages from rewards and values.
  void finalize(double gamma);
};

/// V^target(s_t) = Σ_{k>=t} γ^{k-t} r_k over one episode's tail.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// min(r A, clip(r, 1 - ε, 1 + ε) A).
double clipped_surrogate(double ratio, double advantage, double clip);

/// Full-T stochastic episodes with rewards r_t = p_{t,y} - p_{t-1,y}. No gradients are recorded.
Rollout collect_rollouts(const GfModel& model, std::span<const FloatImage* const> images, const std::vector<int>& labels,
                         const PpoConfig& ppo, Rng& rng, std::size_t chunk = 128);

struct PpoStats {
  double objective = 0;
  double clip_term = 0;
  double value_loss = 0;
  double entropy = 0;
  double mean_ratio = 0;
  std::size_t steps = 0;
};

/// Surrogate objective of one minibatch: mean[L^CLIP - c1 L^VF] + c2 S. Differentiable in the policy.
Tensor ppo_objective(const GfModel& model, const Rollout& rollout, std::span<const std::size_t> episodes,
                     std::span<const double> advantages, const PpoConfig& ppo, PpoStats* stats = nullptr);

/// Policy parameters trained by PPO (log σ only when learnable).
std::vector<Tensor> ppo_parameters(const GfModel& model, const PpoConfig& ppo);
OptimizerConfig ppo_optimizer_config(const PpoConfig& ppo);

/// Adam ascent on ppo_objective for `update_epochs` passes over shuffled minibatches.
/// Returns the stats averaged over steps; `on_step` (optional) sees each optimiser step.
PpoStats ppo_update(const GfModel& model, const Rollout& rollout, const PpoConfig& ppo, Optimizer& optimizer, Rng& rng,
                    const std::function<void(const PpoStats&)>& on_step = {});

}  // namespace gfnet
