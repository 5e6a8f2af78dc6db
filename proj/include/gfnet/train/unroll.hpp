#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "gfnet/dataio/dataset.hpp"
#include "gfnet/dataio/image.hpp"
#include "gfnet/model/gfmodel.hpp"
#include "gfnet/util/rng.hpp"

namespace gfnet {

/// Supplies the patch centres for steps 2..T of a batched unroll.
class LocationSource {
 public:
  virtual ~LocationSource() = default;
  virtual void reset(std::size_t batch) = 0;
  /// Centres for the next step given the previous step's encoder output.
  virtual std::vector<Location> next(const EncodeResult& previous) = 0;
};

/// Centres drawn uniformly from [0, 1]^2.
class UniformLocations final : public LocationSource {
 public:
  explicit UniformLocations(Rng& rng) : rng_(rng) {}
  void reset(std::size_t batch) override { batch_ = batch; }
  std::vector<Location> next(const EncodeResult& previous) override;

 private:
  Rng& rng_;
  std::size_t batch_ = 0;
};

/// Centres proposed by the model's policy, evaluated without recording gradients.
class PolicyLocations final : public LocationSource {
 public:
  PolicyLocations(const GfModel& model, ActionMode mode, Rng* rng = nullptr)
      : model_(model), mode_(mode), rng_(rng) {}
  void reset(std::size_t batch) override;
  std::vector<Location> next(const EncodeResult& previous) override;

 private:
  const GfModel& model_;
  ActionMode mode_;
  Rng* rng_;
  PolicyState state_;
};

/// Full T-step batched forward: glance through f_G, then patches through f_L.
struct Unroll {
  std::vector<Tensor> logits;       // p_t logits, t = 1..T
  std::vector<Tensor> aux_logits;   // FC_t(ē_t); empty unless requested
  std::vector<std::vector<Location>> locations;  // steps 2..T
};

Unroll unroll(const GfModel& model, std::span<const FloatImage* const> images, LocationSource& source,
              std::size_t steps, bool with_aux);

/// mean over the batch of (1/T) Σ_t [CE(p_t, y) + λ CE(FC_t(ē_t), y)].
Tensor compute_cls_loss(const Unroll& forward, const std::vector<int>& labels, double lambda);

/// Image i of `ds` on the [0, 1] scale, augmented when `augment_rng` is given.
FloatImage load_image(const Dataset& ds, std::size_t i, Rng* augment_rng = nullptr);

/// Batched accuracy of argmax p_t for each t = 1..T over `ds`.
std::vector<double> per_step_accuracy(const GfModel& model, const Dataset& ds, LocationSource& source,
                                      std::size_t batch_size = 128);

}  // namespace gfnet
