#include "gfnet/train/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gfnet/numcore/ops.hpp"
#include "gfnet/util/errors.hpp"

namespace gfnet {

void PpoConfig::validate() const {
  if (!(gamma > 0 && gamma < 1)) throw ConfigError("ppo: gamma must lie in (0, 1)");
  if (!(clip > 0 && clip < 1)) throw ConfigError("ppo: clip must lie in (0, 1)");
  if (value_coef < 0 || entropy_coef < 0) throw ConfigError("ppo: loss coefficients must be non-negative");
  if (!(learning_rate > 0)) throw ConfigError("ppo: learning rate must be positive");
  if (minibatch_size == 0 || rollout_size == 0 || update_epochs == 0) {
    throw ConfigError("ppo: minibatch, rollout and update epoch counts must be positive");
  }
}

std::size_t PpoConfig::effective_minibatch(std::size_t episodes) const {
  return std::max<std::size_t>(1, std::min(minibatch_size, episodes / 4));
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    running = rewards[k] + gamma * running;
    out[k] = running;
  }
  return out;
}

void Rollout::finalize(double gamma) {
  returns.assign(rewards.size(), 0.0);
  advantages.assign(rewards.size(), 0.0);
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto g = discounted_returns(std::span<const double>(rewards).subspan(e * steps, steps), gamma);
    for (std::size_t k = 0; k < steps; ++k) {
      returns[index(e, k)] = g[k];
      advantages[index(e, k)] = g[k] - values[index(e, k)];
    }
  }
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

namespace {

double true_class_prob(const Tensor& logits, std::size_t row, int label) {
  // Softmax in double from the float logits.
  const std::size_t c = logits.dim(1);
  const auto v = logits.data().subspan(row * c, c);
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0;
  for (real x : v) total += std::exp(static_cast<double>(x) - peak);
  return std::exp(static_cast<double>(v[static_cast<std::size_t>(label)]) - peak) / total;
}

Tensor gather_maps(const Rollout& r, std::size_t k, std::span<const std::size_t> episodes) {
  const std::size_t stride = shape_numel(r.map_shape);
  std::vector<real> data(episodes.size() * stride);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    std::copy_n(r.maps[k].begin() + static_cast<std::ptrdiff_t>(episodes[i] * stride), stride,
                data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  Shape shape{episodes.size()};
  shape.insert(shape.end(), r.map_shape.begin(), r.map_shape.end());
  return Tensor::from(shape, std::move(data));
}

}  // namespace

Rollout collect_rollouts(const GfModel& model, std::span<const FloatImage* const> images, const std::vector<int>& labels,
                         const PpoConfig& ppo, Rng& rng, std::size_t chunk) {
  if (images.size() != labels.size()) throw ConfigError("collect_rollouts: images and labels differ in length");
  NoGradGuard guard;
  const std::size_t steps_total = model.max_steps();
  Rollout r;
  r.episodes = images.size();
  r.steps = steps_total - 1;
  r.maps.resize(r.steps);
  r.actions.resize(r.episodes * r.steps * 2);
  r.old_log_prob.resize(r.episodes * r.steps);
  r.values.resize(r.episodes * r.steps);
  r.rewards.resize(r.episodes * r.steps);
  r.true_class_prob.resize(r.episodes * steps_total);

  for (std::size_t start = 0; start < r.episodes; start += chunk) {
    const std::size_t end = std::min(r.episodes, start + chunk), n = end - start;
    const auto batch = images.subspan(start, n);
    EncodeResult enc = model.encode(model.glance_batch(batch), EncoderKind::Global);
    ClassifyResult cls = model.classify_step(enc.pooled, model.initial_classifier_state(n));
    PolicyState pstate = model.initial_policy_state(n);
    for (std::size_t b = 0; b < n; ++b) {
      r.true_class_prob[(start + b) * steps_total] = true_class_prob(cls.logits, b, labels[start + b]);
    }
    for (std::size_t k = 0; k < r.steps; ++k) {
      if (r.map_shape.empty()) r.map_shape = Shape(enc.maps.shape().begin() + 1, enc.maps.shape().end());
      r.maps[k].insert(r.maps[k].end(), enc.maps.data().begin(), enc.maps.data().end());
      Proposal p = model.propose_step(enc.maps, pstate, ActionMode::Stochastic, &rng);
      pstate = p.state;
      enc = model.encode(model.patch_batch(batch, p.locations), EncoderKind::Local);
      cls = model.classify_step(enc.pooled, cls.state);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t e = start + b, t = k + 1;  // t is the 0-based step index of the new prediction
        r.actions[(e * r.steps + k) * 2] = p.actions[2 * b];
        r.actions[(e * r.steps + k) * 2 + 1] = p.actions[2 * b + 1];
        r.old_log_prob[r.index(e, k)] = p.log_prob.data()[b];
        r.values[r.index(e, k)] = p.value.data()[b];
        const double prob = true_class_prob(cls.logits, b, labels[e]);
        r.true_class_prob[e * steps_total + t] = prob;
        r.rewards[r.index(e, k)] = prob - r.true_class_prob[e * steps_total + t - 1];
      }
    }
  }
  r.finalize(ppo.gamma);
  return r;
}

Tensor ppo_objective(const GfModel& model, const Rollout& rollout, std::span<const std::size_t> episodes,
                     std::span<const double> advantages, const PpoConfig& ppo, PpoStats* stats) {
  const std::size_t n = episodes.size();
  if (n == 0 || rollout.steps == 0) throw ConfigError("ppo_objective: empty minibatch");
  const Tensor log_std = ppo.learn_action_std ? model.policy_log_std() : model.policy_log_std().detach();
  const auto eps = static_cast<real>(ppo.clip);
  PolicyState state = model.initial_policy_state(n);
  Tensor clip_sum, value_sum;
  double ratio_sum = 0;
  for (std::size_t k = 0; k < rollout.steps; ++k) {
    PolicyOutput out = model.policy_forward(gather_maps(rollout, k, episodes), state);
    state = out.state;
    std::vector<real> actions(n * 2), old_lp(n), adv(n), target(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = rollout.index(episodes[i], k);
      actions[2 * i] = rollout.actions[2 * idx];
      actions[2 * i + 1] = rollout.actions[2 * idx + 1];
      old_lp[i] = static_cast<real>(rollout.old_log_prob[idx]);
      adv[i] = static_cast<real>(advantages[idx]);
      target[i] = static_cast<real>(rollout.returns[idx]);
    }
    const Tensor log_prob = gaussian_log_prob(out.mean, actions, log_std);
    const Tensor ratio = exp(sub(log_prob, Tensor::from({n}, old_lp)));
    for (std::size_t i = 0; i < n; ++i) {
      const real v = ratio.data()[i];
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "ppo: non-finite probability ratio at step t=" << k + 2 << " for episode " << episodes[i]
           << " (new log-prob " << log_prob.data()[i] << ", old log-prob " << old_lp[i] << ")";
        throw NumericError(os.str());
      }
      ratio_sum += v;
    }
    const Tensor a = Tensor::from({n}, adv);
    const Tensor surrogate = minimum(mul(ratio, a), mul(clamp(ratio, 1 - eps, 1 + eps), a));
    const Tensor value_err = square(sub(out.value, Tensor::from({n}, target)));
    clip_sum = k == 0 ? sum(surrogate) : add(clip_sum, sum(surrogate));
    value_sum = k == 0 ? sum(value_err) : add(value_sum, sum(value_err));
  }
  const auto count = static_cast<real>(n * rollout.steps);
  const Tensor clip_term = scale(clip_sum, 1 / count);
  const Tensor value_loss = scale(value_sum, 1 / count);
  const Tensor entropy = gaussian_entropy(log_std);
  const Tensor objective = add(sub(clip_term, scale(value_loss, static_cast<real>(ppo.value_coef))),
                               scale(entropy, static_cast<real>(ppo.entropy_coef)));
  if (stats) {
    stats->objective = objective.item();
    stats->clip_term = clip_term.item();
    stats->value_loss = value_loss.item();
    stats->entropy = entropy.item();
    stats->mean_ratio = ratio_sum / static_cast<double>(count);
  }
  return objective;
}

std::vector<Tensor> ppo_parameters(const GfModel& model, const PpoConfig& ppo) {
  std::vector<Tensor> out;
  for (auto& [name, t] : model.parameters(Component::Policy)) {
    if (name == "policy.log_std" && !ppo.learn_action_std) continue;
    out.push_back(t);
  }
  return out;
}

OptimizerConfig ppo_optimizer_config(const PpoConfig& ppo) {
  OptimizerConfig c;
  c.kind = OptimizerKind::Adam;
  c.learning_rate = ppo.learning_rate;
  c.beta1 = 0.9;
  c.beta2 = 0.999;
  c.schedule = LrSchedule::Constant;
  return c;
}

PpoStats ppo_update(const GfModel& model, const Rollout& rollout, const PpoConfig& ppo, Optimizer& optimizer, Rng& rng,
                    const std::function<void(const PpoStats&)>& on_step) {
  ppo.validate();
  std::vector<double> adv = rollout.advantages;
  if (ppo.normalize_advantages && adv.size() > 1) {
    const double m = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
    double var = 0;
    for (double a : adv) var += (a - m) * (a - m);
    const double sd = std::sqrt(var / static_cast<double>(adv.size()));
    for (double& a : adv) a = (a - m) / (sd + 1e-8);
  }
  const std::size_t mb = ppo.effective_minibatch(rollout.episodes);
  std::vector<std::size_t> order(rollout.episodes);
  PpoStats mean;
  for (std::size_t epoch = 0; epoch < ppo.update_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      PpoStats s;
      const Tensor objective =
          ppo_objective(model, rollout, std::span<const std::size_t>(order).subspan(start, end - start), adv, ppo, &s);
      optimizer.zero_grad();
      scale(objective, real(-1)).backward();
      optimizer.step(optimizer.steps_taken());
      s.steps = 1;
      mean.objective += s.objective;
      mean.clip_term += s.clip_term;
      mean.value_loss += s.value_loss;
      mean.entropy += s.entropy;
      mean.mean_ratio += s.mean_ratio;
      ++mean.steps;
      if (on_step) on_step(s);
    }
  }
  if (mean.steps) {
    const auto k = static_cast<double>(mean.steps);
    mean.objective /= k;
    mean.clip_term /= k;
    mean.value_loss /= k;
    mean.entropy /= k;
    mean.mean_ratio /= k;
  }
  return mean;
}

}  // namespace gfnet
