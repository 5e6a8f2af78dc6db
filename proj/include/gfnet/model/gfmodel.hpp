#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfnet/dataio/image.hpp"
#include "gfnet/model/config.hpp"
#include "gfnet/numcore/layers.hpp"
#include "gfnet/numcore/tensor.hpp"

namespace gfnet {

enum class EncoderKind { Global, Local };
enum class Component { GlobalEncoder, LocalEncoder, Classifier, Policy };
enum class ActionMode { Stochastic, Deterministic };

std::string to_string(Component c);

struct EncodeResult {
  Tensor maps;    // e_t: [N, F, h, w]
  Tensor pooled;  // ē_t: [N, F]
};

/// Recurrent classifier state after t steps.
struct ClassifierState {
  GruState gru;                 // gru variant
  std::vector<Tensor> features;  // cascaded_fc variant: ē_1..ē_t
  std::size_t steps = 0;
};

struct ClassifyResult {
  Tensor logits;  // [N, C]
  Tensor probs;   // [N, C], on the tape
  ClassifierState state;
};

struct PolicyState {
  GruState gru;
  std::size_t steps = 0;
};

struct PolicyOutput {
  Tensor mean;   // [N, 2] in (0, 1), order (y, x)
  Tensor value;  // [N]
  PolicyState state;
};

struct Proposal {
  std::vector<Location> locations;  // clipped to [0, 1]^2
  std::vector<real> actions;        // [N * 2] unclipped (y, x) pairs
  Tensor log_prob;                  // [N]
  Tensor value;                     // [N]
  Tensor mean;                      // [N, 2]
  PolicyState state;
};

/// Sum over the coordinates of the Gaussian log-density of `actions` under N(mean, σ²), σ = exp(log_std).
/// `log_std` is a one-element tensor and receives gradient when it requires grad.
Tensor gaussian_log_prob(const Tensor& mean, std::span<const real> actions, const Tensor& log_std);
Tensor gaussian_log_prob(const Tensor& mean, std::span<const real> actions, double sd);
/// Differential entropy of the 2-D isotropic Gaussian policy.
double gaussian_entropy(double sd);
/// Same as a scalar tensor of `log_std` (constant in the mean, so only σ gets gradient).
Tensor gaussian_entropy(const Tensor& log_std, std::size_t dims = 2);

class GfModel {
 public:
  static GfModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t max_steps() const { return config_.max_steps; }

  /// All parameters with stable names, in serialization order.
  ParamList parameters() const;
  ParamList parameters(Component component) const;
  std::vector<Tensor> tensors(Component component) const;
  /// FNV-1a over the raw parameter bytes of one component.
  std::uint64_t component_hash(Component component) const;

  /// Batch of glance inputs: resize_glance + normalization.
  Tensor glance_batch(std::span<const FloatImage* const> images) const;
  /// Batch of focus inputs cropped at `locations` (one per image).
  Tensor patch_batch(std::span<const FloatImage* const> images, std::span<const Location> locations) const;

  EncodeResult encode(const Tensor& input, EncoderKind which) const;

  ClassifierState initial_classifier_state(std::size_t batch) const;
  ClassifyResult classify_step(const Tensor& pooled, const ClassifierState& state) const;
  /// FC_t(ē_t): auxiliary linear head for step t (1-based).
  Tensor aux_logits(const Tensor& pooled, std::size_t step) const;

  PolicyState initial_policy_state(std::size_t batch) const;
  PolicyOutput policy_forward(const Tensor& maps, const PolicyState& state) const;
  /// log σ of the action distribution; starts at log(action_std) and only moves if trained.
  const Tensor& policy_log_std() const { return policy_.log_std; }
  double action_std() const;
  /// Mean is computed before any sampling; `rng` is required in stochastic mode.
  Proposal propose_step(const Tensor& maps, const PolicyState& state, ActionMode mode, Rng* rng) const;

  /// Copies parameter values from `other` (same config); used for checkpoint selection.
  void copy_parameters_from(const GfModel& other);
  GfModel clone() const;

 private:
  struct Encoder {
    std::vector<Tensor> weights, biases;
  };
  struct Classifier {
    GruParams gru;
    Tensor out_w, out_b;
    std::vector<Tensor> cascade_w, cascade_b;  // step t: [C, t*F]
    std::vector<Tensor> aux_w, aux_b;          // step t: [C, F]
  };
  struct Policy {
    Tensor reduce_w, reduce_b;  // [R, F, 1, 1]
    GruParams gru;
    Tensor mean_w, mean_b;    // [2, H]
    Tensor value_w, value_b;  // [1, H]
    Tensor log_std;           // [1]
  };

  ModelConfig config_;
  Encoder global_, local_;
  Classifier classifier_;
  Policy policy_;
};

}  // namespace gfnet
