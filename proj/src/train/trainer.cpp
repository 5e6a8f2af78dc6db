#include "gfnet/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "gfnet/numcore/ops.hpp"
#include "gfnet/train/unroll.hpp"
#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

// Stream ids for derive_rng; one family per stage.
constexpr std::uint64_t kShuffleStream = 100, kAugmentStream = 200, kLocationStream = 300, kInitStream = 400;

void emit(std::ostream* out, const nlohmann::json& record) {
  if (out) *out << record.dump() << "\n";
}

void say(const TrainHooks& hooks, const std::string& msg) {
  if (hooks.progress) hooks.progress(msg);
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

OptimizerConfig sgd_config(const StageConfig& cfg, double lr, std::size_t total_steps) {
  OptimizerConfig c;
  c.kind = OptimizerKind::SgdNesterov;
  c.learning_rate = lr;
  c.momentum = cfg.momentum;
  c.weight_decay = cfg.weight_decay;
  c.schedule = LrSchedule::Cosine;
  c.total_steps = std::max<std::size_t>(1, total_steps);
  return c;
}

using BatchLoss = std::function<Tensor(std::span<const FloatImage* const>, const std::vector<int>&)>;

StageReport run_sgd_stage(int stage, const Dataset& train, const StageConfig& cfg, Optimizer& optimizer,
                          const OptimizerConfig& logged_lr, const BatchLoss& loss_fn, const TrainHooks& hooks) {
  StageReport report;
  Rng shuffle_rng = derive_rng(cfg.seed, kShuffleStream + stage);
  Rng augment_rng = derive_rng(cfg.seed, kAugmentStream + stage);
  std::vector<std::size_t> order(train.n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<FloatImage> images;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(load_image(train, order[i], cfg.augment ? &augment_rng : nullptr));
        labels.push_back(train.labels[order[i]]);
      }
      std::vector<const FloatImage*> ptrs;
      for (const auto& im : images) ptrs.push_back(&im);
      const Tensor loss = loss_fn(ptrs, labels);
      optimizer.zero_grad();
      loss.backward();
      const double lr = logged_lr.learning_rate_at(step);
      optimizer.step(step);
      report.losses.push_back(loss.item());
      emit(hooks.metrics, {{"stage", stage}, {"epoch", epoch}, {"step", step}, {"loss", loss.item()}, {"lr", lr}});
      epoch_loss += loss.item();
      ++batches;
      ++step;
    }
    std::ostringstream os;
    os << "stage " << stage << " epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
       << (batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    say(hooks, os.str());
  }
  return report;
}

void add_classification_groups(Optimizer& opt, const GfModel& model, const StageConfig& cfg, std::size_t total) {
  std::vector<Tensor> encoders = model.tensors(Component::GlobalEncoder);
  for (auto& t : model.tensors(Component::LocalEncoder)) encoders.push_back(t);
  opt.add_group(encoders, sgd_config(cfg, cfg.encoder_lr, total));
  opt.add_group(model.tensors(Component::Classifier), sgd_config(cfg, cfg.classifier_lr, total));
}

StageReport train_classification(int stage, GfModel& model, const Dataset& train, const StageConfig& cfg,
                                 LocationSource& source, const TrainHooks& hooks) {
  const std::size_t total = cfg.epochs * steps_per_epoch(train.n, cfg.batch_size);
  Optimizer opt;
  add_classification_groups(opt, model, cfg, total);
  const std::size_t steps = model.max_steps();
  const bool with_aux = cfg.lambda != 0.0;
  return run_sgd_stage(
      stage, train, cfg, opt, sgd_config(cfg, cfg.classifier_lr, total),
      [&](std::span<const FloatImage* const> images, const std::vector<int>& labels) {
        return compute_cls_loss(unroll(model, images, source, steps, with_aux), labels, cfg.lambda);
      },
      hooks);
}

std::vector<std::vector<real>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<real>> out;
  for (const auto& t : params) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(const std::vector<Tensor>& params, const std::vector<std::vector<real>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i];
    auto dst = t.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

void StageConfig::validate() const {
  if (batch_size == 0) throw ConfigError("stage config: batch_size must be positive");
  if (lambda < 0) throw ConfigError("stage config: lambda must be non-negative");
  if (encoder_lr < 0 || classifier_lr < 0) throw ConfigError("stage config: learning rates must be non-negative");
  if (momentum < 0 || momentum >= 1) throw ConfigError("stage config: momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("stage config: weight_decay must be non-negative");
}

StageConfig default_stage_config(int stage) {
  StageConfig c;
  switch (stage) {
    case 0:
      c.epochs = 6;
      c.encoder_lr = 0.05;
      c.classifier_lr = 0.05;
      c.lambda = 0.0;
      break;
    case 1:
      c.epochs = 12;
      c.encoder_lr = 0.01;
      c.classifier_lr = 0.1;
      break;
    case 3:
      c.epochs = 4;
      c.encoder_lr = 0.001;
      c.classifier_lr = 0.01;
      break;
    default: throw ConfigError("default_stage_config: stage must be 0, 1 or 3");
  }
  c.seed = static_cast<std::uint64_t>(stage) + 1;
  return c;
}

StageReport stage0_pretrain(GfModel& model, const Dataset& train, const StageConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.lambda != 0.0 && hooks.warn) hooks.warn("stage 0 has no auxiliary heads; lambda is ignored");
  const std::size_t f = model.config().encoder.feature_dim(), c = model.config().num_classes;
  Rng init_rng = derive_rng(cfg.seed, kInitStream);
  Tensor head_w = Tensor::zeros({c, f}, true), head_b = Tensor::zeros({c}, true);
  init_uniform(head_w, static_cast<real>(1.0 / std::sqrt(static_cast<double>(f))), init_rng);

  const std::size_t total = cfg.epochs * steps_per_epoch(train.n, cfg.batch_size);
  Optimizer opt;
  opt.add_group(model.tensors(Component::GlobalEncoder), sgd_config(cfg, cfg.encoder_lr, total));
  opt.add_group({head_w, head_b}, sgd_config(cfg, cfg.classifier_lr, total));
  return run_sgd_stage(
      0, train, cfg, opt, sgd_config(cfg, cfg.encoder_lr, total),
      [&](std::span<const FloatImage* const> images, const std::vector<int>& labels) {
        const EncodeResult enc = model.encode(model.glance_batch(images), EncoderKind::Global);
        return softmax_cross_entropy(linear(enc.pooled, head_w, head_b), labels).loss;
      },
      hooks);
}

StageReport stage1_train(GfModel& model, const Dataset& train, const StageConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  Rng loc_rng = derive_rng(cfg.seed, kLocationStream + 1);
  UniformLocations source(loc_rng);
  return train_classification(1, model, train, cfg, source, hooks);
}

StageReport stage3_finetune(GfModel& model, const Dataset& train, const StageConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  PolicyLocations source(model, ActionMode::Deterministic);
  return train_classification(3, model, train, cfg, source, hooks);
}

StageReport stage2_train(GfModel& model, const Dataset& train, const Dataset& val, const PpoConfig& ppo,
                         const TrainHooks& hooks) {
  ppo.validate();
  StageReport report;
  if (model.max_steps() < 2) {
    if (hooks.warn) hooks.warn("stage 2 skipped: T = 1 leaves no patch to choose");
    return report;
  }
  const std::vector<Tensor> params = ppo_parameters(model, ppo);
  Optimizer opt;
  opt.add_group(params, ppo_optimizer_config(ppo));
  Rng shuffle_rng = derive_rng(ppo.seed, kShuffleStream + 2);
  Rng action_rng = derive_rng(ppo.seed, kLocationStream + 2);
  Rng update_rng = derive_rng(ppo.seed, kInitStream + 2);

  std::vector<std::vector<real>> best;
  double best_acc = -1;
  std::vector<std::size_t> order(train.n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < ppo.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double reward_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += ppo.rollout_size) {
      const std::size_t end = std::min(order.size(), start + ppo.rollout_size);
      std::vector<FloatImage> images;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(load_image(train, order[i]));
        labels.push_back(train.labels[order[i]]);
      }
      std::vector<const FloatImage*> ptrs;
      for (const auto& im : images) ptrs.push_back(&im);
      const Rollout rollout = collect_rollouts(model, ptrs, labels, ppo, action_rng);
      const double mean_reward = std::accumulate(rollout.rewards.begin(), rollout.rewards.end(), 0.0) /
                                 static_cast<double>(rollout.episodes);
      reward_sum += mean_reward * static_cast<double>(rollout.episodes);
      ppo_update(model, rollout, ppo, opt, update_rng, [&](const PpoStats& s) {
        report.losses.push_back(-s.objective);
        emit(hooks.metrics, {{"stage", 2},
                             {"epoch", epoch},
                             {"step", step},
                             {"loss", -s.objective},
                             {"clip_term", s.clip_term},
                             {"value_loss", s.value_loss},
                             {"entropy", s.entropy},
                             {"mean_ratio", s.mean_ratio},
                             {"mean_episode_reward", mean_reward},
                             {"lr", ppo.learning_rate}});
        ++step;
      });
    }
    PolicyLocations source(model, ActionMode::Deterministic);
    const std::vector<double> acc = per_step_accuracy(model, val, source);
    emit(hooks.events, {{"stage", 2},
                        {"epoch", epoch},
                        {"val_accuracy", acc},
                        {"mean_episode_reward", reward_sum / static_cast<double>(std::max<std::size_t>(1, train.n))}});
    std::ostringstream os;
    os << "stage 2 epoch " << epoch + 1 << "/" << ppo.epochs << " mean reward "
       << reward_sum / static_cast<double>(std::max<std::size_t>(1, train.n)) << " val acc@T " << acc.back();
    say(hooks, os.str());
    if (acc.back() > best_acc) {
      best_acc = acc.back();
      best = snapshot(params);
      report.val_accuracy = acc;
      report.selected_epoch = epoch;
    }
  }
  if (!best.empty()) restore(params, best);
  return report;
}

}  // namespace gfnet
