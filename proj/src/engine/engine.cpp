#include "gfnet/engine/engine.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"

#include "gfnet/train/unroll.hpp"
#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

constexpr std::uint64_t kRandomPolicyStream = 0x52414E44;

double step_cost(const CostModel* cost, std::size_t step) {
  return cost ? cost->cumulative.at(step - 1) : static_cast<double>(step);
}

}  // namespace

std::string to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::Budgeted: return "budgeted";
    case InferenceMode::Anytime: return "anytime";
    case InferenceMode::Full: return "full";
  }
  return "unknown";
}

std::string to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::Learned: return "learned";
    case PolicyKind::Random: return "random";
    case PolicyKind::CentreCorner: return "centre-corner";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(const std::string& text) {
  if (text == "learned") return PolicyKind::Learned;
  if (text == "random") return PolicyKind::Random;
  if (text == "centre-corner" || text == "centre_corner" || text == "center-corner") return PolicyKind::CentreCorner;
  throw ConfigError("unknown policy '" + text + "' (expected learned, random or centre-corner)");
}

void InferenceConfig::validate(std::size_t max_steps) const {
  switch (mode) {
    case InferenceMode::Budgeted:
      if (thresholds.size() != max_steps) {
        throw ConfigError("budgeted inference needs " + std::to_string(max_steps) + " thresholds, got " +
                          std::to_string(thresholds.size()));
      }
      break;
    case InferenceMode::Anytime:
      if (anytime_step < 1 || anytime_step > max_steps) {
        throw ConfigError("anytime step must lie in [1, " + std::to_string(max_steps) + "]");
      }
      break;
    case InferenceMode::Full: break;
  }
}

InferenceConfig InferenceConfig::budgeted(const BudgetSolution& solution, PolicyKind policy) {
  InferenceConfig c;
  c.mode = InferenceMode::Budgeted;
  c.thresholds = solution.thresholds;
  c.policy = policy;
  return c;
}

Location centre_corner_location(std::size_t step) {
  if (step < 2) throw UsageError("centre_corner_location: the glance step has no patch");
  if (step == 2) return {0.5, 0.5};
  static constexpr Location kCorners[4] = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}};
  return kCorners[(step - 3) % 4];
}

std::vector<double> softmax_double(std::span<const real> logits) {
  std::vector<double> p(logits.size());
  double peak = -INFINITY;
  for (real v : logits) peak = std::max(peak, static_cast<double>(v));
  double total = 0;
  for (std::size_t j = 0; j < p.size(); ++j) total += p[j] = std::exp(static_cast<double>(logits[j]) - peak);
  for (auto& v : p) v /= total;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

EpisodeTrace infer(const GfModel& model, const FloatImage& image, const InferenceConfig& config, std::size_t sample_id,
                   int label, const CostModel* cost) {
  const std::size_t steps = model.max_steps();
  config.validate(steps);
  if (cost && cost->steps() != steps) throw ConfigError("infer: cost model length differs from T");
  NoGradGuard guard;
  const std::size_t limit = config.mode == InferenceMode::Anytime ? config.anytime_step : steps;

  EpisodeTrace trace;
  trace.sample_id = sample_id;
  trace.label = label;
  const FloatImage* one[1] = {&image};
  Rng random_rng = derive_rng(config.random_seed, kRandomPolicyStream, sample_id);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  EncodeResult enc = model.encode(model.glance_batch(one), EncoderKind::Global);
  ClassifyResult cls = model.classify_step(enc.pooled, model.initial_classifier_state(1));
  PolicyState policy_state = model.initial_policy_state(1);
  for (std::size_t t = 1; t <= limit; ++t) {
    StepRecord rec;
    if (t > 1) {
      Location loc;
      switch (config.policy) {
        case PolicyKind::Learned: {
          Proposal p = model.propose_step(enc.maps, policy_state, ActionMode::Deterministic, nullptr);
          policy_state = p.state;
          loc = p.locations[0];
          break;
        }
        case PolicyKind::Random:
          loc.y = uniform(random_rng);
          loc.x = uniform(random_rng);
          break;
        case PolicyKind::CentreCorner: loc = centre_corner_location(t); break;
      }
      enc = model.encode(model.patch_batch(one, std::span<const Location>(&loc, 1)), EncoderKind::Local);
      cls = model.classify_step(enc.pooled, cls.state);
      rec.location = loc;
    }
    rec.probs = softmax_double(cls.logits.data());
    const std::size_t best = argmax(rec.probs);
    rec.confidence = rec.probs[best];
    rec.predicted = static_cast<int>(best);
    trace.steps.push_back(std::move(rec));
    if (config.mode == InferenceMode::Budgeted && t < steps && trace.steps.back().confidence > config.thresholds[t - 1])
      break;
  }
  trace.exit_step = trace.steps.size();
  trace.predicted = trace.steps.back().predicted;
  trace.cost = step_cost(cost, trace.exit_step);
  return trace;
}

InferenceSummary summarize(const std::vector<EpisodeTrace>& traces, std::size_t max_steps, const CostModel* cost) {
  InferenceSummary s;
  s.samples = traces.size();
  s.exit_counts.assign(max_steps, 0);
  for (const auto& tr : traces) {
    s.correct += tr.correct() ? 1 : 0;
    ++s.exit_counts.at(tr.exit_step - 1);
  }
  if (s.samples) {
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.samples);
    double total = 0;
    for (std::size_t t = 0; t < max_steps; ++t) total += static_cast<double>(s.exit_counts[t]) * step_cost(cost, t + 1);
    s.average_cost = total / static_cast<double>(s.samples);
  }
  return s;
}

BatchResult batch_infer(const GfModel& model, const Dataset& ds, const InferenceConfig& config, const CostModel* cost,
                        std::size_t concurrency) {
  config.validate(model.max_steps());
  BatchResult out;
  out.traces.resize(ds.n);
  const std::size_t lanes = std::max<std::size_t>(1, std::min<std::size_t>(concurrency, ds.n));
  auto work = [&](std::size_t lane) {
    for (std::size_t i = lane; i < ds.n; i += lanes) {
      out.traces[i] = infer(model, load_image(ds, i), config, i, ds.labels[i], cost);
    }
  };
  if (lanes == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      threads.emplace_back([&, lane] {
        try {
          work(lane);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
  }
  out.summary = summarize(out.traces, model.max_steps(), cost);
  return out;
}

ConfidenceTable confidence_table(const std::vector<EpisodeTrace>& full_traces) {
  ConfidenceTable table;
  table.reserve(full_traces.size());
  for (const auto& tr : full_traces) {
    std::vector<double> row;
    for (const auto& s : tr.steps) row.push_back(s.confidence);
    table.push_back(std::move(row));
  }
  return table;
}

std::vector<double> per_step_accuracy(const std::vector<EpisodeTrace>& full_traces) {
  if (full_traces.empty()) return {};
  const std::size_t steps = full_traces.front().steps.size();
  std::vector<double> acc(steps, 0.0);
  for (const auto& tr : full_traces) {
    if (tr.steps.size() != steps) throw InputError("per_step_accuracy: traces must all run the same number of steps");
    for (std::size_t t = 0; t < steps; ++t) acc[t] += tr.steps[t].predicted == tr.label ? 1.0 : 0.0;
  }
  for (auto& a : acc) a /= static_cast<double>(full_traces.size());
  return acc;
}

EpisodeTrace truncate_trace(const EpisodeTrace& full, const std::vector<double>& thresholds, const CostModel* cost) {
  std::vector<double> conf;
  for (const auto& s : full.steps) conf.push_back(s.confidence);
  EpisodeTrace out = full;
  out.exit_step = exit_step_for(conf, thresholds);
  out.steps.resize(out.exit_step);
  out.predicted = out.steps.back().predicted;
  out.cost = step_cost(cost, out.exit_step);
  return out;
}

void write_traces(std::ostream& out, const std::vector<EpisodeTrace>& traces, const GfModel& model) {
  const auto& cfg = model.config();
  for (const auto& tr : traces) {
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      const auto& s = tr.steps[t];
      nlohmann::json j{{"t", t + 1},
                       {"confidence", s.confidence},
                       {"predicted", s.predicted},
                       {"correct", s.predicted == tr.label},
                       {"probs", s.probs}};
      if (s.location) {
        const PixelWindow w = patch_window(cfg.image_h, cfg.image_w, *s.location, cfg.patch);
        j["location"] = {s.location->y, s.location->x};
        j["window"] = {{"top", w.top}, {"left", w.left}, {"height", w.height}, {"width", w.width}};
      } else {
        j["location"] = "glance";
      }
      steps.push_back(std::move(j));
    }
    const nlohmann::json record{{"id", tr.sample_id},     {"label", tr.label},         {"exit_step", tr.exit_step},
                                {"predicted", tr.predicted}, {"correct", tr.correct()}, {"cost", tr.cost},
                                {"steps", std::move(steps)}};
    out << record.dump() << "\n";
  }
}

std::vector<EpisodeTrace> read_traces(std::istream& in) {
  std::vector<EpisodeTrace> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EpisodeTrace tr;
    tr.sample_id = j.at("id").get<std::size_t>();
    tr.label = j.at("label").get<int>();
    tr.exit_step = j.at("exit_step").get<std::size_t>();
    tr.predicted = j.at("predicted").get<int>();
    tr.cost = j.at("cost").get<double>();
    for (const auto& s : j.at("steps")) {
      StepRecord rec;
      rec.confidence = s.at("confidence").get<double>();
      rec.predicted = s.at("predicted").get<int>();
      rec.probs = s.at("probs").get<std::vector<double>>();
      if (s.at("location").is_array()) rec.location = Location{s["location"][0].get<double>(), s["location"][1].get<double>()};
      tr.steps.push_back(std::move(rec));
    }
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace gfnet
