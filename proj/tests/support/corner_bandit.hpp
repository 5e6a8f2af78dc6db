#pragma once
// Contextual bandit for PPO: the policy input marks one of four corners in a
// single feature channel, and the reward is 1 minus the distance from the
// chosen centre to that corner. One policy step per episode (T = 2).

#include <cmath>
#include <random>
#include <vector>

#include "gfnet/model/gfmodel.hpp"
#include "gfnet/numcore/optim.hpp"
#include "gfnet/train/ppo.hpp"

namespace gfnet::testing {

inline ModelConfig bandit_model_config() {
  ModelConfig c;
  c.encoder.channels = {4, 8};
  c.encoder.strides = {2, 2};
  c.classifier_hidden = 12;
  c.policy_channels = 3;
  c.policy_hidden = 6;
  c.max_steps = 2;
  return c;
}

/// Collects one buffer of `episodes` and, if `update`, runs ppo_update on it. Returns the mean reward.
inline double corner_bandit_round(const GfModel& m, const PpoConfig& ppo, Optimizer& opt, Rng& rng, bool update,
                                  std::size_t episodes = 128) {
  const std::size_t n = episodes;
  const std::size_t f = m.config().encoder.feature_dim(), side = m.config().encoder.output_side(m.config().patch.height);
  std::uniform_int_distribution<int> pick(0, 3);
  Rollout r;
  r.episodes = n;
  r.steps = 1;
  r.map_shape = {f, side, side};
  r.maps.assign(1, std::vector<real>(n * f * side * side, real(0)));
  std::vector<int> corner(n);
  for (std::size_t i = 0; i < n; ++i) {
    corner[i] = pick(rng);
    for (std::size_t p = 0; p < side * side; ++p) r.maps[0][(i * f + corner[i]) * side * side + p] = real(1);
  }
  Proposal p;
  {
    NoGradGuard guard;
    Tensor maps = Tensor::from({n, f, side, side}, r.maps[0]);
    p = m.propose_step(maps, m.initial_policy_state(n), ActionMode::Stochastic, &rng);
  }
  r.actions = p.actions;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cy = corner[i] / 2, cx = corner[i] % 2;
    const double reward = 1.0 - std::hypot(p.locations[i].y - cy, p.locations[i].x - cx);
    r.old_log_prob.push_back(p.log_prob.data()[i]);
    r.values.push_back(p.value.data()[i]);
    r.rewards.push_back(reward);
    total += reward;
  }
  r.finalize(ppo.gamma);
  if (update) ppo_update(m, r, ppo, opt, rng);
  return total / static_cast<double>(n);
}

struct BanditOutcome {
  double before = 0, after = 0;
};

/// Mean reward over 5 evaluation rounds before and after `updates` PPO rounds.
inline BanditOutcome run_corner_bandit(GfModel& m, std::size_t updates, std::uint64_t seed = 99) {
  PpoConfig ppo;
  ppo.minibatch_size = 32;
  Optimizer opt;
  opt.add_group(ppo_parameters(m, ppo), ppo_optimizer_config(ppo));
  Rng rng(seed);
  BanditOutcome out;
  for (int i = 0; i < 5; ++i) out.before += corner_bandit_round(m, ppo, opt, rng, false) / 5;
  for (std::size_t i = 0; i < updates; ++i) corner_bandit_round(m, ppo, opt, rng, true);
  for (int i = 0; i < 5; ++i) out.after += corner_bandit_round(m, ppo, opt, rng, false) / 5;
  return out;
}

}  // namespace gfnet::testing
