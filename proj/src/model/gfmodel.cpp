#include "gfnet/model/gfmodel.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "gfnet/numcore/ops.hpp"
#include "gfnet/util/errors.hpp"
#include "gfnet/util/hash.hpp"

namespace gfnet {

namespace {

Tensor make_param(const Shape& shape) { return Tensor::zeros(shape, true); }

Tensor linear_weight(std::size_t out, std::size_t in, Rng& rng) {
  Tensor w = make_param({out, in});
  init_uniform(w, static_cast<real>(1.0 / std::sqrt(static_cast<double>(in))), rng);
  return w;
}

}  // namespace

std::string to_string(Component c) {
  switch (c) {
    case Component::GlobalEncoder: return "global_encoder";
    case Component::LocalEncoder: return "local_encoder";
    case Component::Classifier: return "classifier";
    case Component::Policy: return "policy";
  }
  return "unknown";
}

Tensor gaussian_log_prob(const Tensor& mean, std::span<const real> actions, const Tensor& log_std) {
  if (mean.rank() != 2 || actions.size() != mean.numel()) {
    throw ConfigError("gaussian_log_prob: actions do not match mean " + shape_str(mean.shape()));
  }
  const std::size_t n = mean.dim(0), d = mean.dim(1);
  const Tensor a = Tensor::from(mean.shape(), std::vector<real>(actions.begin(), actions.end()));
  const Tensor inv_var = broadcast(exp(scale(log_std, real(-2))), mean.shape());
  const Tensor quad = sum_rows(scale(mul(square(sub(a, mean)), inv_var), real(-0.5)));
  const Tensor log_norm = broadcast(scale(log_std, -static_cast<real>(d)), {n});
  return add_scalar(add(quad, log_norm), static_cast<real>(-0.5 * std::log(2.0 * std::numbers::pi) * d));
}

Tensor gaussian_log_prob(const Tensor& mean, std::span<const real> actions, double sd) {
  return gaussian_log_prob(mean, actions, Tensor::scalar(static_cast<real>(std::log(sd))));
}

double gaussian_entropy(double sd) { return 2.0 * 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sd * sd); }

Tensor gaussian_entropy(const Tensor& log_std, std::size_t dims) {
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return add_scalar(scale(reshape(log_std, {}), static_cast<real>(dims)), static_cast<real>(per_dim * dims));
}

GfModel GfModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  GfModel m;
  m.config_ = config;
  if (m.config_.norm.mean.empty()) {
    m.config_.norm.mean.assign(config.in_channels, 0.0);
    m.config_.norm.stddev.assign(config.in_channels, 1.0);
  }
  Rng rng(seed);
  auto build_encoder = [&](Encoder& enc) {
    std::size_t in = config.in_channels;
    for (std::size_t out : config.encoder.channels) {
      Tensor w = make_param({out, in, 3, 3});
      init_kaiming_uniform(w, in * 9, rng);
      enc.weights.push_back(w);
      enc.biases.push_back(make_param({out}));
      in = out;
    }
  };
  build_encoder(m.global_);
  build_encoder(m.local_);

  const std::size_t f = config.encoder.feature_dim(), c = config.num_classes, t_max = config.max_steps;
  auto& cls = m.classifier_;
  if (config.classifier == ClassifierVariant::Gru) {
    cls.gru = GruParams::create(f, config.classifier_hidden, rng);
    cls.out_w = linear_weight(c, config.classifier_hidden, rng);
    cls.out_b = make_param({c});
  } else {
    for (std::size_t t = 1; t <= t_max; ++t) {
      cls.cascade_w.push_back(linear_weight(c, t * f, rng));
      cls.cascade_b.push_back(make_param({c}));
    }
  }
  for (std::size_t t = 1; t <= t_max; ++t) {
    cls.aux_w.push_back(linear_weight(c, f, rng));
    cls.aux_b.push_back(make_param({c}));
  }

  auto& pol = m.policy_;
  const std::size_t side = config.encoder.output_side(config.patch.height);
  pol.reduce_w = make_param({config.policy_channels, f, 1, 1});
  init_kaiming_uniform(pol.reduce_w, f, rng);
  pol.reduce_b = make_param({config.policy_channels});
  pol.gru = GruParams::create(config.policy_channels * side * side, config.policy_hidden, rng);
  pol.mean_w = linear_weight(2, config.policy_hidden, rng);
  pol.mean_b = make_param({2});
  pol.value_w = linear_weight(1, config.policy_hidden, rng);
  pol.value_b = make_param({1});
  pol.log_std = make_param({1});
  pol.log_std.mutable_data()[0] = static_cast<real>(std::log(config.action_std));
  return m;
}

ParamList GfModel::parameters(Component component) const {
  ParamList out;
  auto add_encoder = [&](const Encoder& enc, const std::string& prefix) {
    for (std::size_t i = 0; i < enc.weights.size(); ++i) {
      out.emplace_back(prefix + ".conv" + std::to_string(i) + ".weight", enc.weights[i]);
      out.emplace_back(prefix + ".conv" + std::to_string(i) + ".bias", enc.biases[i]);
    }
  };
  switch (component) {
    case Component::GlobalEncoder: add_encoder(global_, "global"); break;
    case Component::LocalEncoder: add_encoder(local_, "local"); break;
    case Component::Classifier: {
      const auto& cls = classifier_;
      if (config_.classifier == ClassifierVariant::Gru) {
        cls.gru.append_to(out, "classifier.gru");
        out.emplace_back("classifier.out.weight", cls.out_w);
        out.emplace_back("classifier.out.bias", cls.out_b);
      } else {
        for (std::size_t t = 0; t < cls.cascade_w.size(); ++t) {
          out.emplace_back("classifier.cascade" + std::to_string(t + 1) + ".weight", cls.cascade_w[t]);
          out.emplace_back("classifier.cascade" + std::to_string(t + 1) + ".bias", cls.cascade_b[t]);
        }
      }
      for (std::size_t t = 0; t < cls.aux_w.size(); ++t) {
        out.emplace_back("classifier.aux" + std::to_string(t + 1) + ".weight", cls.aux_w[t]);
        out.emplace_back("classifier.aux" + std::to_string(t + 1) + ".bias", cls.aux_b[t]);
      }
      break;
    }
    case Component::Policy: {
      out.emplace_back("policy.reduce.weight", policy_.reduce_w);
      out.emplace_back("policy.reduce.bias", policy_.reduce_b);
      policy_.gru.append_to(out, "policy.gru");
      out.emplace_back("policy.mean.weight", policy_.mean_w);
      out.emplace_back("policy.mean.bias", policy_.mean_b);
      out.emplace_back("policy.value.weight", policy_.value_w);
      out.emplace_back("policy.value.bias", policy_.value_b);
      out.emplace_back("policy.log_std", policy_.log_std);
      break;
    }
  }
  return out;
}

ParamList GfModel::parameters() const {
  ParamList all;
  for (Component c : {Component::GlobalEncoder, Component::LocalEncoder, Component::Classifier, Component::Policy}) {
    auto part = parameters(c);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

std::vector<Tensor> GfModel::tensors(Component component) const {
  std::vector<Tensor> out;
  for (auto& [name, t] : parameters(component)) out.push_back(t);
  return out;
}

std::uint64_t GfModel::component_hash(Component component) const {
  Fnv1a hash;
  for (const auto& [name, t] : parameters(component)) {
    hash.update(name);
    auto d = t.data();
    hash.update(d.data(), d.size() * sizeof(real));
  }
  return hash.value();
}

Tensor GfModel::glance_batch(std::span<const FloatImage* const> images) const {
  const std::size_t n = images.size(), side = config_.patch.height;
  std::vector<real> data;
  data.reserve(n * config_.in_channels * side * side);
  for (const FloatImage* img : images) {
    FloatImage g = resize_glance(*img, config_.patch);
    normalize_in_place(g, config_.norm);
    data.insert(data.end(), g.values.begin(), g.values.end());
  }
  return Tensor::from({n, config_.in_channels, side, side}, std::move(data));
}

Tensor GfModel::patch_batch(std::span<const FloatImage* const> images, std::span<const Location> locations) const {
  if (images.size() != locations.size()) throw ConfigError("patch_batch: one location per image required");
  const std::size_t n = images.size(), side = config_.patch.height;
  std::vector<real> data;
  data.reserve(n * config_.in_channels * side * side);
  for (std::size_t i = 0; i < n; ++i) {
    FloatImage p = crop_patch(*images[i], locations[i], config_.patch);
    normalize_in_place(p, config_.norm);
    data.insert(data.end(), p.values.begin(), p.values.end());
  }
  return Tensor::from({n, config_.in_channels, side, side}, std::move(data));
}

EncodeResult GfModel::encode(const Tensor& input, EncoderKind which) const {
  if (input.rank() != 4 || input.dim(1) != config_.in_channels || input.dim(2) != config_.patch.height ||
      input.dim(3) != config_.patch.width) {
    throw ConfigError("encode: expected [N, " + std::to_string(config_.in_channels) + ", " +
                      std::to_string(config_.patch.height) + ", " + std::to_string(config_.patch.width) +
                      "], got " + shape_str(input.shape()));
  }
  const Encoder& enc = which == EncoderKind::Global ? global_ : local_;
  Tensor x = input;
  for (std::size_t i = 0; i < enc.weights.size(); ++i) {
    x = relu(conv2d(x, enc.weights[i], enc.biases[i], config_.encoder.strides[i], 1));
  }
  return {x, global_avg_pool(x)};
}

ClassifierState GfModel::initial_classifier_state(std::size_t batch) const {
  ClassifierState s;
  if (config_.classifier == ClassifierVariant::Gru) s.gru = GruState::zeros(batch, config_.classifier_hidden);
  return s;
}

ClassifyResult GfModel::classify_step(const Tensor& pooled, const ClassifierState& state) const {
  const std::size_t t = state.steps + 1;
  if (t > config_.max_steps) {
    throw UsageError("classify_step: step " + std::to_string(t) + " exceeds T = " + std::to_string(config_.max_steps));
  }
  ClassifyResult r;
  r.state = state;
  r.state.steps = t;
  if (config_.classifier == ClassifierVariant::Gru) {
    r.state.gru = gru_cell(pooled, state.gru, classifier_.gru);
    r.logits = linear(r.state.gru.hidden, classifier_.out_w, classifier_.out_b);
  } else {
    r.state.features.push_back(pooled);
    const Tensor joined = r.state.features.size() == 1 ? pooled : concat_cols(r.state.features);
    if (joined.dim(1) != t * config_.encoder.feature_dim()) {
      throw ConfigError("classify_step: cascaded head at step " + std::to_string(t) + " expects t*F features");
    }
    r.logits = linear(joined, classifier_.cascade_w[t - 1], classifier_.cascade_b[t - 1]);
  }
  r.probs = softmax(r.logits);
  return r;
}

Tensor GfModel::aux_logits(const Tensor& pooled, std::size_t step) const {
  if (step < 1 || step > config_.max_steps) throw UsageError("aux_logits: step outside [1, T]");
  return linear(pooled, classifier_.aux_w[step - 1], classifier_.aux_b[step - 1]);
}

PolicyState GfModel::initial_policy_state(std::size_t batch) const {
  return {GruState::zeros(batch, config_.policy_hidden), 0};
}

PolicyOutput GfModel::policy_forward(const Tensor& maps, const PolicyState& state) const {
  const Tensor reduced = relu(conv2d(maps, policy_.reduce_w, policy_.reduce_b, 1, 0));
  const std::size_t n = reduced.dim(0);
  const Tensor flat = reshape(reduced, {n, reduced.numel() / n});
  PolicyOutput out;
  out.state.gru = gru_cell(flat, state.gru, policy_.gru);
  out.state.steps = state.steps + 1;
  out.mean = sigmoid(linear(out.state.gru.hidden, policy_.mean_w, policy_.mean_b));
  out.value = column(linear(out.state.gru.hidden, policy_.value_w, policy_.value_b), 0);
  return out;
}

Proposal GfModel::propose_step(const Tensor& maps, const PolicyState& state, ActionMode mode, Rng* rng) const {
  if (state.steps + 1 >= config_.max_steps) {
    throw UsageError("propose_step: no patch to propose after step T");
  }
  PolicyOutput out = policy_forward(maps, state);
  const std::size_t n = out.mean.dim(0);
  Proposal p;
  p.actions.assign(out.mean.data().begin(), out.mean.data().end());
  if (mode == ActionMode::Stochastic) {
    if (!rng) throw UsageError("propose_step: stochastic mode requires an rng");
    std::normal_distribution<double> noise(0.0, action_std());
    for (auto& a : p.actions) a = static_cast<real>(static_cast<double>(a) + noise(*rng));
  }
  p.locations.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.locations[i] = {std::clamp(static_cast<double>(p.actions[2 * i]), 0.0, 1.0),
                      std::clamp(static_cast<double>(p.actions[2 * i + 1]), 0.0, 1.0)};
  }
  p.log_prob = gaussian_log_prob(out.mean, p.actions, policy_.log_std);
  p.value = out.value;
  p.mean = out.mean;
  p.state = out.state;
  return p;
}

double GfModel::action_std() const { return std::exp(static_cast<double>(policy_.log_std.data()[0])); }

void GfModel::copy_parameters_from(const GfModel& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw ConfigError("copy_parameters_from: parameter layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].second.shape() != src[i].second.shape()) throw ConfigError("copy_parameters_from: shape mismatch");
    auto d = dst[i].second.mutable_data();
    auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

GfModel GfModel::clone() const {
  GfModel copy = create(config_, 0);
  copy.copy_parameters_from(*this);
  return copy;
}

}  // namespace gfnet
