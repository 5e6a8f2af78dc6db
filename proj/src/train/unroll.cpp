#include "gfnet/train/unroll.hpp"

#include <algorithm>

#include "gfnet/numcore/ops.hpp"
#include "gfnet/util/errors.hpp"

namespace gfnet {

std::vector<Location> UniformLocations::next(const EncodeResult&) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Location> out(batch_);
  for (auto& l : out) {
    l.y = u(rng_);
    l.x = u(rng_);
  }
  return out;
}

void PolicyLocations::reset(std::size_t batch) { state_ = model_.initial_policy_state(batch); }

std::vector<Location> PolicyLocations::next(const EncodeResult& previous) {
  NoGradGuard guard;
  Proposal p = model_.propose_step(previous.maps.detach(), state_, mode_, rng_);
  state_ = std::move(p.state);
  return std::move(p.locations);
}

Unroll unroll(const GfModel& model, std::span<const FloatImage* const> images, LocationSource& source,
              std::size_t steps, bool with_aux) {
  if (steps < 1 || steps > model.max_steps()) throw ConfigError("unroll: steps must lie in [1, T]");
  const std::size_t n = images.size();
  Unroll out;
  source.reset(n);
  EncodeResult enc = model.encode(model.glance_batch(images), EncoderKind::Global);
  ClassifyResult cls = model.classify_step(enc.pooled, model.initial_classifier_state(n));
  out.logits.push_back(cls.logits);
  if (with_aux) out.aux_logits.push_back(model.aux_logits(enc.pooled, 1));
  for (std::size_t t = 2; t <= steps; ++t) {
    std::vector<Location> locations = source.next(enc);
    enc = model.encode(model.patch_batch(images, locations), EncoderKind::Local);
    cls = model.classify_step(enc.pooled, cls.state);
    out.logits.push_back(cls.logits);
    if (with_aux) out.aux_logits.push_back(model.aux_logits(enc.pooled, t));
    out.locations.push_back(std::move(locations));
  }
  return out;
}

Tensor compute_cls_loss(const Unroll& forward, const std::vector<int>& labels, double lambda) {
  if (lambda < 0) throw ConfigError("compute_cls_loss: lambda must be non-negative");
  if (forward.logits.empty()) throw ConfigError("compute_cls_loss: empty unroll");
  const bool use_aux = lambda != 0.0;
  if (use_aux && forward.aux_logits.size() != forward.logits.size()) {
    throw ConfigError("compute_cls_loss: lambda > 0 needs the auxiliary logits");
  }
  Tensor total;
  for (std::size_t t = 0; t < forward.logits.size(); ++t) {
    Tensor term = softmax_cross_entropy(forward.logits[t], labels).loss;
    if (use_aux) {
      term = add(term, scale(softmax_cross_entropy(forward.aux_logits[t], labels).loss, static_cast<real>(lambda)));
    }
    total = t == 0 ? term : add(total, term);
  }
  return scale(total, real(1) / static_cast<real>(forward.logits.size()));
}

FloatImage load_image(const Dataset& ds, std::size_t i, Rng* augment_rng) {
  if (augment_rng) {
    const auto bytes = augment(ds.image(i), ds.c, ds.h, ds.w, *augment_rng);
    return to_float_image(bytes, ds.c, ds.h, ds.w);
  }
  return to_float_image(ds.image(i), ds.c, ds.h, ds.w);
}

std::vector<double> per_step_accuracy(const GfModel& model, const Dataset& ds, LocationSource& source,
                                      std::size_t batch_size) {
  NoGradGuard guard;
  const std::size_t steps = model.max_steps();
  std::vector<std::size_t> correct(steps, 0);
  for (std::size_t start = 0; start < ds.n; start += batch_size) {
    const std::size_t end = std::min<std::size_t>(ds.n, start + batch_size);
    std::vector<FloatImage> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(load_image(ds, i));
    std::vector<const FloatImage*> ptrs;
    for (const auto& im : images) ptrs.push_back(&im);
    const Unroll u = unroll(model, ptrs, source, steps, false);
    for (std::size_t t = 0; t < steps; ++t) {
      const auto logits = u.logits[t].data();
      const std::size_t c = u.logits[t].dim(1);
      for (std::size_t b = 0; b < ptrs.size(); ++b) {
        const auto row = logits.subspan(b * c, c);
        const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (pred == ds.labels[start + b]) ++correct[t];
      }
    }
  }
  std::vector<double> acc(steps);
  for (std::size_t t = 0; t < steps; ++t) acc[t] = ds.n ? static_cast<double>(correct[t]) / ds.n : 0.0;
  return acc;
}

}  // namespace gfnet
