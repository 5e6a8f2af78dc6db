#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gfnet/dataio/dataset.hpp"
#include "gfnet/model/gfmodel.hpp"
#include "gfnet/train/ppo.hpp"

namespace gfnet {

/// SGD-Nesterov stage (0, I or III) with a cosine schedule over the whole stage.
struct StageConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double encoder_lr = 0.01;
  double classifier_lr = 0.1;  // stage 0: the temporary glance head
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lambda = 1.0;  // ignored by stage 0
  bool augment = true;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Where training reports go. Every member is optional.
struct TrainHooks {
  std::ostream* metrics = nullptr;  // one JSON line per optimiser step
  std::ostream* events = nullptr;   // one JSON line per evaluation
  std::function<void(const std::string&)> warn;
  std::function<void(const std::string&)> progress;
};

struct StageReport {
  std::vector<double> losses;  // per optimiser step
  std::vector<double> val_accuracy;  // stage II: per-step accuracy of the selected policy
  std::size_t selected_epoch = 0;    // stage II
};

/// Trains f_G as a plain classifier on glance-sized images through a temporary linear head.
StageReport stage0_pretrain(GfModel& model, const Dataset& train, const StageConfig& config, const TrainHooks& hooks = {});

/// f_G, f_L, f_C and FC_t on compute_cls_loss with uniform random patch centres. π is not touched.
StageReport stage1_train(GfModel& model, const Dataset& train, const StageConfig& config, const TrainHooks& hooks = {});

/// PPO on π with everything else frozen; keeps the epoch with the best validation accuracy at t = T.
StageReport stage2_train(GfModel& model, const Dataset& train, const Dataset& val, const PpoConfig& ppo,
                         const TrainHooks& hooks = {});

/// Stage I loss with patches from the frozen deterministic policy.
StageReport stage3_finetune(GfModel& model, const Dataset& train, const StageConfig& config, const TrainHooks& hooks = {});

/// Defaults for each SGD stage at desk scale.
StageConfig default_stage_config(int stage);

}  // namespace gfnet
