#include "gfnet/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "gfnet/util/errors.hpp"

namespace gfnet {

std::size_t conv_output_side(std::size_t side, const ConvSpec& conv) {
  if (side + 2 * conv.padding < conv.kernel) throw ConfigError("conv_output_side: kernel larger than padded input");
  return (side + 2 * conv.padding - conv.kernel) / conv.stride + 1;
}

std::uint64_t conv_macs(const ConvSpec& conv, std::size_t height, std::size_t width) {
  const std::uint64_t ho = conv_output_side(height, conv), wo = conv_output_side(width, conv);
  return std::uint64_t{conv.out_channels} * conv.in_channels * conv.kernel * conv.kernel * ho * wo;
}

std::uint64_t conv_stack_macs(const std::vector<ConvSpec>& stack, std::size_t side) {
  std::uint64_t total = 0;
  for (const auto& conv : stack) {
    total += conv_macs(conv, side, side);
    side = conv_output_side(side, conv);
  }
  return total;
}

std::vector<ConvSpec> encoder_convs(const EncoderConfig& encoder, std::size_t in_channels) {
  std::vector<ConvSpec> out;
  for (std::size_t i = 0; i < encoder.channels.size(); ++i) {
    out.push_back({in_channels, encoder.channels[i], 3, encoder.strides[i], 1});
    in_channels = encoder.channels[i];
  }
  return out;
}

std::uint64_t OpCount::total_per_component(const std::string& component) const {
  std::uint64_t total = 0;
  for (const auto& l : layers) total += l.component == component ? l.macs : 0;
  return total;
}

OpCount count_ops(const ModelConfig& config) {
  config.validate();
  OpCount ops;
  const std::size_t side = config.patch.height;
  const auto convs = encoder_convs(config.encoder, config.in_channels);
  for (const char* component : {"global_encoder", "local_encoder"}) {
    std::size_t s = side;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const std::uint64_t m = conv_macs(convs[i], s, s);
      ops.layers.push_back({component, "conv" + std::to_string(i), m});
      s = conv_output_side(s, convs[i]);
    }
  }
  ops.global_encoder = ops.total_per_component("global_encoder");
  ops.local_encoder = ops.total_per_component("local_encoder");

  const std::uint64_t f = config.encoder.feature_dim(), c = config.num_classes, t_max = config.max_steps;
  for (std::uint64_t t = 1; t <= t_max; ++t) {
    std::uint64_t cls;
    if (config.classifier == ClassifierVariant::Gru) {
      const std::uint64_t h = config.classifier_hidden;
      cls = 3 * h * f + 3 * h * h + c * h;
    } else {
      cls = c * t * f;
    }
    ops.classifier.push_back(cls);
    ops.layers.push_back({"classifier", "step" + std::to_string(t), cls});
    ops.aux_heads.push_back(c * f);
    ops.layers.push_back({"aux_heads", "fc" + std::to_string(t), c * f});
  }

  const std::uint64_t map_side = config.encoder.output_side(side), r = config.policy_channels,
                      hp = config.policy_hidden;
  const std::uint64_t reduce = r * f * map_side * map_side;
  const std::uint64_t gru = 3 * hp * (r * map_side * map_side) + 3 * hp * hp;
  const std::uint64_t heads = 2 * hp + hp;
  ops.layers.push_back({"policy", "reduce", reduce});
  ops.layers.push_back({"policy", "gru", gru});
  ops.layers.push_back({"policy", "heads", heads});
  ops.policy = reduce + gru + heads;

  double running = static_cast<double>(ops.global_encoder + ops.classifier[0] + ops.aux_heads[0]);
  ops.cumulative.push_back(running);
  for (std::size_t t = 1; t < t_max; ++t) {
    running += static_cast<double>(ops.policy + ops.local_encoder + ops.classifier[t] + ops.aux_heads[t]);
    ops.cumulative.push_back(running);
  }
  return ops;
}

std::vector<double> measure_latency(const GfModel& model, const FloatImage& image, std::size_t reps, std::size_t warmup,
                                    PolicyKind policy) {
  if (reps == 0) throw ConfigError("measure_latency: reps must be positive");
  using clock = std::chrono::steady_clock;
  const std::size_t steps = model.max_steps();
  std::vector<double> out;
  for (std::size_t t = 1; t <= steps; ++t) {
    InferenceConfig cfg;
    cfg.mode = InferenceMode::Anytime;
    cfg.anytime_step = t;
    cfg.policy = policy;
    for (std::size_t i = 0; i < warmup; ++i) infer(model, image, cfg);
    // Runs per timed sample grow until one sample spans well above the clock's resolution.
    std::size_t inner = 1;
    for (;;) {
      const auto start = clock::now();
      for (std::size_t i = 0; i < inner; ++i) infer(model, image, cfg);
      if (clock::now() - start >= std::chrono::microseconds(200) || inner >= (1u << 20)) break;
      inner *= 2;
    }
    std::vector<double> samples;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto start = clock::now();
      for (std::size_t i = 0; i < inner; ++i) infer(model, image, cfg);
      samples.push_back(std::chrono::duration<double, std::milli>(clock::now() - start).count() /
                        static_cast<double>(inner));
    }
    std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2), samples.end());
    out.push_back(samples[samples.size() / 2]);
  }
  return out;
}

std::vector<CurvePoint> sweep_budgets(const std::vector<EpisodeTrace>& calibration,
                                      const std::vector<EpisodeTrace>& evaluation, const CostModel& cost,
                                      const std::vector<double>& budgets,
                                      const std::function<void(const std::string&)>& notice) {
  cost.validate();
  const ConfidenceTable table = confidence_table(calibration);
  std::vector<double> sorted = budgets;
  std::sort(sorted.begin(), sorted.end());
  std::vector<CurvePoint> points;
  for (double b : sorted) {
    BudgetSolution solution;
    try {
      solution = solve_budget(b, cost, table);
    } catch (const InfeasibleBudget& e) {
      if (notice) notice(std::string("skipping budget: ") + e.what());
      continue;
    }
    std::vector<EpisodeTrace> replay;
    replay.reserve(evaluation.size());
    for (const auto& tr : evaluation) replay.push_back(truncate_trace(tr, solution.thresholds, &cost));
    const InferenceSummary s = summarize(replay, cost.steps(), &cost);
    points.push_back({b, s.average_cost, s.accuracy, solution.exit.q, solution.thresholds, s.exit_counts});
  }
  return points;
}

std::vector<double> auto_budgets(const CostModel& cost, std::size_t count) {
  cost.validate();
  if (count < 2) throw ConfigError("auto_budgets: need at least two points");
  const double lo = std::log(cost.cumulative.front()), hi = std::log(cost.cumulative.back());
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1)));
  }
  // Pin the endpoints exactly.
  out.front() = cost.cumulative.front();
  out.back() = cost.cumulative.back();
  return out;
}

std::vector<CurvePoint> anytime_curve(const std::vector<EpisodeTrace>& full_traces, const CostModel& cost) {
  const auto acc = per_step_accuracy(full_traces);
  std::vector<CurvePoint> out;
  for (std::size_t t = 0; t < acc.size(); ++t) {
    CurvePoint p;
    p.budget = p.realized_cost = cost.cumulative.at(t);
    p.accuracy = acc[t];
    p.q = std::nan("");
    p.exit_counts.assign(acc.size(), 0);
    p.exit_counts[t] = full_traces.size();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::string> curve_columns(std::size_t steps) {
  std::vector<std::string> cols{"budget", "realized_cost", "accuracy", "q"};
  for (std::size_t t = 1; t <= steps; ++t) cols.push_back("eta_" + std::to_string(t));
  for (std::size_t t = 1; t <= steps; ++t) cols.push_back("exit_" + std::to_string(t));
  return cols;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw InputError("curves: bad number '" + s + "'");
  return v;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void export_curves(std::ostream& out, const std::vector<CurvePoint>& points, const Provenance& provenance,
                   CurveFormat format) {
  if (points.empty()) throw InputError("export_curves: no points");
  const std::size_t steps = points.front().thresholds.empty() ? points.front().exit_counts.size()
                                                              : points.front().thresholds.size();
  if (format == CurveFormat::Jsonl) {
    out << nlohmann::json{{"provenance", provenance}}.dump() << "\n";
    for (const auto& p : points) {
      nlohmann::json eta = nlohmann::json::array();
      for (double e : p.thresholds) eta.push_back(e);
      out << nlohmann::json{{"budget", p.budget},
                            {"realized_cost", p.realized_cost},
                            {"accuracy", p.accuracy},
                            {"q", finite_or_null(p.q)},
                            {"eta", eta},
                            {"exit_counts", p.exit_counts}}
                 .dump()
          << "\n";
    }
  } else {
    for (const auto& [k, v] : provenance) out << "# " << k << ": " << v << "\n";
    const auto cols = curve_columns(steps);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const auto& p : points) {
      out << fmt(p.budget) << "," << fmt(p.realized_cost) << "," << fmt(p.accuracy) << "," << fmt(p.q);
      for (std::size_t t = 0; t < steps; ++t) out << "," << (t < p.thresholds.size() ? fmt(p.thresholds[t]) : "nan");
      for (std::size_t t = 0; t < steps; ++t) out << "," << p.exit_counts.at(t);
      out << "\n";
    }
  }
  if (!out) throw InputError("export_curves: write failed");
}

ParsedCurves parse_curves(std::istream& in, CurveFormat format) {
  ParsedCurves parsed;
  std::string line;
  if (format == CurveFormat::Jsonl) {
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (first && j.contains("provenance")) {
        parsed.provenance = j["provenance"].get<Provenance>();
        first = false;
        continue;
      }
      first = false;
      CurvePoint p;
      p.budget = j.at("budget").get<double>();
      p.realized_cost = j.at("realized_cost").get<double>();
      p.accuracy = j.at("accuracy").get<double>();
      p.q = j.at("q").is_null() ? std::nan("") : j["q"].get<double>();
      p.thresholds = j.at("eta").get<std::vector<double>>();
      p.exit_counts = j.at("exit_counts").get<std::vector<std::size_t>>();
      parsed.points.push_back(std::move(p));
    }
    return parsed;
  }
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon != std::string::npos) parsed.provenance[line.substr(2, colon - 2)] = line.substr(colon + 2);
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (header.empty()) {
      header = fields;
      if (header.size() < 4 || (header.size() - 4) % 2 != 0 || header != curve_columns((header.size() - 4) / 2)) {
        throw InputError("curves: unexpected CSV header");
      }
      continue;
    }
    if (fields.size() != header.size()) throw InputError("curves: row has " + std::to_string(fields.size()) + " fields");
    const std::size_t steps = (header.size() - 4) / 2;
    CurvePoint p;
    p.budget = parse_number(fields[0]);
    p.realized_cost = parse_number(fields[1]);
    p.accuracy = parse_number(fields[2]);
    p.q = parse_number(fields[3]);
    for (std::size_t t = 0; t < steps; ++t) p.thresholds.push_back(parse_number(fields[4 + t]));
    for (std::size_t t = 0; t < steps; ++t) p.exit_counts.push_back(std::stoull(fields[4 + steps + t]));
    parsed.points.push_back(std::move(p));
  }
  return parsed;
}

}  // namespace gfnet
