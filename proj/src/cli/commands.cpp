#include "gfnet/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gfnet/bench/bench.hpp"
#include "gfnet/config/run_config.hpp"
#include "gfnet/dataio/synthetic.hpp"
#include "gfnet/engine/engine.hpp"
#include "gfnet/model/checkpoint.hpp"
#include "gfnet/train/trainer.hpp"
#include "gfnet/train/unroll.hpp"
#include "gfnet/util/errors.hpp"
#include "gfnet/util/hash.hpp"

namespace fs = std::filesystem;

namespace gfnet {

OutputLock::OutputLock(const fs::path& dir) : path_(path_for(dir)) {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    throw ConfigError("output directory '" + dir.string() + "' is in use (lock file " + path_.string() +
                      "); remove the file if no other run is active");
  }
  std::fputs("gfnet\n", f);
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

constexpr const char* kStageNames[] = {"stage0", "stage1", "stage2", "stage3"};

/// Options every run-directory command shares.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string dataset, output_dir;
  bool quiet = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON config file (default: $GFNET_CONFIG)");
    cmd->add_option("--set", overrides, "override a config key, e.g. --set ppo.epochs=3")->take_all();
    cmd->add_option("--dataset", dataset, "dataset directory (overrides the config)");
    cmd->add_option("-o,--out", output_dir, "output directory (overrides the config)");
    cmd->add_flag("-q,--quiet", quiet, "no progress output");
  }

  /// Defaults < file < --set < named flags.
  RunConfig resolve(std::vector<std::string> extra) const {
    std::vector<std::string> all = overrides;
    if (!dataset.empty()) all.push_back("dataset=" + nlohmann::json(dataset).dump());
    if (!output_dir.empty()) all.push_back("output_dir=" + nlohmann::json(output_dir).dump());
    all.insert(all.end(), extra.begin(), extra.end());
    return resolve_config(config_path, all);
  }
};

/// Options selecting how inference runs.
struct InferOptions {
  std::string checkpoint;
  std::string mode = "full";
  std::size_t step = 0;
  double budget = 0;
  std::string policy = "learned";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  std::string split, cost;

  void add_to(CLI::App* cmd, bool with_mode) {
    cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default: latest under <out>/checkpoints)");
    if (with_mode) {
      cmd->add_option("--mode", mode, "full | anytime | budgeted")
          ->check(CLI::IsMember({"full", "anytime", "budgeted"}));
      cmd->add_option("--step", step, "anytime step t*");
      cmd->add_option("--budget", budget, "per-sample budget B for budgeted mode");
    }
    cmd->add_option("--policy", policy, "learned | random | centre-corner");
    cmd->add_option("--seed", seed, "random-policy seed");
    cmd->add_option("-j,--concurrency", concurrency, "inference lanes");
    cmd->add_option("--split", split, "evaluation split (train | val | test)");
    cmd->add_option("--cost", cost, "cost model: macs | latency | steps");
  }

  std::vector<std::string> overrides() const {
    std::vector<std::string> o;
    if (seed) o.push_back("eval.random_seed=" + std::to_string(*seed));
    if (concurrency) o.push_back("eval.concurrency=" + std::to_string(*concurrency));
    if (!split.empty()) o.push_back("eval.eval_split=" + nlohmann::json(split).dump());
    if (!cost.empty()) o.push_back("eval.cost=" + nlohmann::json(cost).dump());
    return o;
  }
};

struct Io {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;

  void progress(const std::string& msg) const {
    if (!quiet) err << msg << std::endl;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw ConfigError("write failed for '" + path.string() + "'");
}

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  return f;
}

Dataset load_split(const RunConfig& cfg, const std::string& split) {
  const fs::path path = cfg.dataset_path(split);
  if (!fs::exists(path)) {
    throw ConfigError("dataset split '" + split + "' not found at " + path.string() +
                      " (run convert-dataset first or set 'dataset')");
  }
  return load_dataset(path);
}

fs::path checkpoint_path(const RunConfig& cfg, int stage) {
  return fs::path(cfg.output_dir) / "checkpoints" / (std::string(kStageNames[stage]) + ".gfck");
}

/// Latest stage checkpoint in the run directory.
fs::path default_checkpoint(const RunConfig& cfg) {
  for (int s = 3; s >= 0; --s) {
    const fs::path p = checkpoint_path(cfg, s);
    if (fs::exists(p)) return p;
  }
  throw ConfigError("no checkpoint under " + (fs::path(cfg.output_dir) / "checkpoints").string() +
                    " (run train first or pass --checkpoint)");
}

LoadedCheckpoint load_model(const RunConfig& cfg, const std::string& explicit_path) {
  const fs::path path = explicit_path.empty() ? default_checkpoint(cfg) : fs::path(explicit_path);
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

void check_compatible(const ModelConfig& m, const Dataset& ds, const std::string& split) {
  if (ds.c != m.in_channels || ds.h != m.image_h || ds.w != m.image_w || ds.num_classes != m.num_classes) {
    throw ConfigError("dataset split '" + split + "' (" + std::to_string(ds.c) + "x" + std::to_string(ds.h) + "x" +
                      std::to_string(ds.w) + ", " + std::to_string(ds.num_classes) +
                      " classes) does not match the model");
  }
}

ModelConfig model_for(const RunConfig& cfg, const Dataset& train) {
  ModelConfig m = cfg.model;
  m.in_channels = train.c;
  m.image_h = train.h;
  m.image_w = train.w;
  m.num_classes = train.num_classes;
  m.norm = train.manifest.norm.mean.empty() ? compute_norm_stats(train) : train.manifest.norm;
  m.validate();
  return m;
}

CostModel make_cost(const RunConfig& cfg, const GfModel& model, const Dataset& probe) {
  if (cfg.eval.cost == "steps") {
    std::vector<double> c(model.max_steps());
    for (std::size_t t = 0; t < c.size(); ++t) c[t] = static_cast<double>(t + 1);
    return CostModel{c};
  }
  if (cfg.eval.cost == "latency") {
    return CostModel{measure_latency(model, load_image(probe, 0), cfg.eval.latency_reps)};
  }
  return count_ops(model.config()).cost_model();
}

std::string join(const std::vector<double>& v) {
  std::ostringstream s;
  s << std::setprecision(10);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

struct PreparedInference {
  InferenceConfig config;
  std::optional<BudgetSolution> solution;
};

/// Turns the --mode/--step/--budget flags into an engine config, calibrating thresholds when budgeted.
PreparedInference prepare(const RunConfig& cfg, const InferOptions& opt, const GfModel& model, const CostModel& cost,
                          const Io& io) {
  PreparedInference p;
  InferenceConfig& c = p.config;
  c.policy = parse_policy_kind(opt.policy);
  c.random_seed = cfg.eval.random_seed;
  const std::size_t T = model.max_steps();
  if (opt.mode == "full") {
    c.mode = InferenceMode::Full;
  } else if (opt.mode == "anytime") {
    c.mode = InferenceMode::Anytime;
    c.anytime_step = opt.step == 0 ? T : opt.step;
  } else {
    if (opt.budget <= 0) throw ConfigError("budgeted mode needs --budget B > 0");
    if (opt.budget < cost.cumulative.front() || opt.budget > cost.cumulative.back()) {
      std::ostringstream msg;
      msg << std::setprecision(10) << "budget " << opt.budget << " is infeasible: the feasible range is ["
          << cost.cumulative.front() << ", " << cost.cumulative.back() << "] (" << cfg.eval.cost << ")";
      throw InfeasibleBudget(msg.str(), cost.cumulative.front(), cost.cumulative.back());
    }
    io.progress("calibrating thresholds on split '" + cfg.eval.calibration_split + "'");
    const Dataset calib = load_split(cfg, cfg.eval.calibration_split);
    check_compatible(model.config(), calib, cfg.eval.calibration_split);
    InferenceConfig full = c;
    full.mode = InferenceMode::Full;
    const auto traces = batch_infer(model, calib, full, &cost, cfg.eval.concurrency).traces;
    p.solution = solve_budget(opt.budget, cost, confidence_table(traces));
    c = InferenceConfig::budgeted(*p.solution, c.policy);
    c.random_seed = cfg.eval.random_seed;
  }
  c.validate(T);
  return p;
}

nlohmann::json summary_json(const InferenceSummary& s) {
  return {{"samples", s.samples},
          {"correct", s.correct},
          {"accuracy", s.accuracy},
          {"average_cost", s.average_cost},
          {"exit_counts", s.exit_counts}};
}

void print_summary(std::ostream& out, const InferenceSummary& s) {
  out << std::setprecision(6) << "samples: " << s.samples << "\naccuracy: " << s.accuracy
      << "\naverage_cost: " << std::setprecision(10) << s.average_cost << "\nexit_histogram:";
  for (std::size_t t = 0; t < s.exit_counts.size(); ++t) out << " t" << t + 1 << "=" << s.exit_counts[t];
  out << "\n";
}

std::vector<std::size_t> parse_ids(const std::string& text) {
  std::vector<std::size_t> ids;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') throw ConfigError("bad sample id '" + item + "'");
    ids.push_back(static_cast<std::size_t>(v));
  }
  if (ids.empty()) throw ConfigError("no sample ids given");
  return ids;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> v;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("bad " + what + " value '" + item + "'");
    v.push_back(x);
  }
  if (v.empty()) throw ConfigError("no " + what + " values given");
  return v;
}

// ---- train ----

int cmd_train(const CommonOptions& common, const std::string& stage_arg, std::optional<std::uint64_t> seed,
              const Io& io) {
  RunConfig cfg = common.resolve(seed ? std::vector<std::string>{"seed=" + std::to_string(*seed)} : std::vector<std::string>{});
  std::vector<int> stages;
  if (stage_arg == "all") {
    stages = {0, 1, 2, 3};
  } else {
    stages = {std::stoi(stage_arg)};
  }
  OutputLock lock(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  write_text(out / "logs" / "train.config.json", cfg.to_json());

  const Dataset train = load_split(cfg, "train");
  std::optional<Dataset> val;
  std::optional<GfModel> model;
  for (int stage : stages) {
    if (stage == 0) {
      model = GfModel::create(model_for(cfg, train), cfg.seed);
    } else if (!model) {
      const fs::path prev = checkpoint_path(cfg, stage - 1);
      if (!fs::exists(prev)) {
        throw ConfigError("stage " + std::to_string(stage - 1) + " checkpoint required (expected " + prev.string() + ")");
      }
      model = load_checkpoint(prev).model;
      check_compatible(model->config(), train, "train");
    }
    std::ofstream metrics = open_output(out / "logs" / (std::string(kStageNames[stage]) + ".metrics.jsonl"));
    std::ofstream events = open_output(out / "logs" / (std::string(kStageNames[stage]) + ".events.jsonl"));
    TrainHooks hooks;
    hooks.metrics = &metrics;
    hooks.events = &events;
    hooks.progress = [&](const std::string& m) { io.progress(m); };
    hooks.warn = [&](const std::string& m) { io.err << "warning: " << m << std::endl; };
    io.progress("training " + std::string(kStageNames[stage]));
    switch (stage) {
      case 0: stage0_pretrain(*model, train, cfg.stage0, hooks); break;
      case 1: stage1_train(*model, train, cfg.stage1, hooks); break;
      case 2:
        if (!val) val = load_split(cfg, "val");
        stage2_train(*model, train, *val, cfg.ppo, hooks);
        break;
      case 3: stage3_finetune(*model, train, cfg.stage3, hooks); break;
    }
    metrics.close();
    events.close();
    const fs::path ckpt = checkpoint_path(cfg, stage);
    fs::create_directories(ckpt.parent_path());
    save_checkpoint(*model, CheckpointMeta{kStageNames[stage], ""}, ckpt);
    io.out << kStageNames[stage] << ": " << ckpt.string() << "\n";
  }
  return 0;
}

// ---- eval ----

int cmd_eval(const CommonOptions& common, const InferOptions& opt, const Io& io) {
  RunConfig cfg = common.resolve(opt.overrides());
  OutputLock lock(cfg.output_dir);
  const fs::path dir = fs::path(cfg.output_dir) / "traces";
  write_text(dir / "eval.config.json", cfg.to_json());
  const LoadedCheckpoint ck = load_model(cfg, opt.checkpoint);
  const Dataset ds = load_split(cfg, cfg.eval.eval_split);
  check_compatible(ck.model.config(), ds, cfg.eval.eval_split);
  const CostModel cost = make_cost(cfg, ck.model, ds);
  const PreparedInference p = prepare(cfg, opt, ck.model, cost, io);
  const BatchResult r = batch_infer(ck.model, ds, p.config, &cost, cfg.eval.concurrency);

  const std::string stem = "eval_" + to_string(p.config.mode) + "_" + to_string(p.config.policy);
  {
    std::ofstream f = open_output(dir / (stem + ".jsonl"));
    write_traces(f, r.traces, ck.model);
  }
  nlohmann::json summary = summary_json(r.summary);
  summary["mode"] = to_string(p.config.mode);
  summary["policy"] = to_string(p.config.policy);
  summary["split"] = cfg.eval.eval_split;
  summary["cost_model"] = cfg.eval.cost;
  summary["checkpoint_checksum"] = hex64(ck.checksum);
  if (p.config.mode == InferenceMode::Anytime) summary["anytime_step"] = p.config.anytime_step;
  if (p.solution) {
    summary["budget"] = p.solution->budget;
    summary["q"] = p.solution->exit.q;
    summary["thresholds"] = p.solution->thresholds;
  }
  write_text(dir / (stem + ".summary.json"), summary.dump(2) + "\n");

  io.out << "mode: " << to_string(p.config.mode) << "\npolicy: " << to_string(p.config.policy) << "\n";
  if (p.solution) io.out << "budget: " << p.solution->budget << "\nthresholds: " << join(p.solution->thresholds) << "\n";
  print_summary(io.out, r.summary);
  io.out << "traces: " << (dir / (stem + ".jsonl")).string() << "\n";
  return 0;
}

// ---- sweep ----

int cmd_sweep(const CommonOptions& common, const InferOptions& opt, const std::string& budgets_arg,
              const std::string& format_arg, const Io& io) {
  RunConfig cfg = common.resolve(opt.overrides());
  OutputLock lock(cfg.output_dir);
  const fs::path dir = fs::path(cfg.output_dir) / "curves";
  write_text(dir / "sweep.config.json", cfg.to_json());
  const LoadedCheckpoint ck = load_model(cfg, opt.checkpoint);
  const Dataset calib = load_split(cfg, cfg.eval.calibration_split);
  const Dataset eval = load_split(cfg, cfg.eval.eval_split);
  check_compatible(ck.model.config(), calib, cfg.eval.calibration_split);
  check_compatible(ck.model.config(), eval, cfg.eval.eval_split);
  const CostModel cost = make_cost(cfg, ck.model, eval);

  InferenceConfig full;
  full.policy = parse_policy_kind(opt.policy);
  full.random_seed = cfg.eval.random_seed;
  io.progress("full-length inference on '" + cfg.eval.calibration_split + "' and '" + cfg.eval.eval_split + "'");
  const auto calib_traces = batch_infer(ck.model, calib, full, &cost, cfg.eval.concurrency).traces;
  const auto eval_traces = batch_infer(ck.model, eval, full, &cost, cfg.eval.concurrency).traces;

  const std::vector<double> budgets =
      budgets_arg == "auto" ? auto_budgets(cost, 10) : parse_numbers(budgets_arg, "budget");
  const auto points = sweep_budgets(calib_traces, eval_traces, cost, budgets,
                                    [&](const std::string& m) { io.err << "notice: " << m << std::endl; });
  const auto anytime = anytime_curve(eval_traces, cost);

  const CurveFormat format = format_arg == "jsonl" ? CurveFormat::Jsonl : CurveFormat::Csv;
  const std::string ext = format == CurveFormat::Jsonl ? ".jsonl" : ".csv";
  Provenance prov{{"checkpoint", ck.meta.stage},
                  {"checkpoint_checksum", hex64(ck.checksum)},
                  {"calibration_split", cfg.eval.calibration_split},
                  {"eval_split", cfg.eval.eval_split},
                  {"policy", to_string(full.policy)},
                  {"random_seed", std::to_string(cfg.eval.random_seed)},
                  {"cost_model", cfg.eval.cost},
                  {"dataset", eval.manifest.source}};
  const fs::path budget_file = dir / ("budgeted_" + to_string(full.policy) + ext);
  const fs::path anytime_file = dir / ("anytime_" + to_string(full.policy) + ext);
  {
    std::ofstream f = open_output(budget_file);
    export_curves(f, points, prov, format);
  }
  {
    Provenance p = prov;
    p["curve"] = "anytime";
    std::ofstream f = open_output(anytime_file);
    export_curves(f, anytime, p, format);
  }
  io.out << std::setprecision(6) << "budget,realized_cost,accuracy\n";
  for (const auto& pt : points) io.out << pt.budget << "," << pt.realized_cost << "," << pt.accuracy << "\n";
  io.out << "curves: " << budget_file.string() << " " << anytime_file.string() << "\n";
  return 0;
}

// ---- trace ----

int cmd_trace(const CommonOptions& common, const InferOptions& opt, const std::string& ids_arg, const Io& io) {
  RunConfig cfg = common.resolve(opt.overrides());
  const std::vector<std::size_t> ids = parse_ids(ids_arg);
  OutputLock lock(cfg.output_dir);
  const fs::path dir = fs::path(cfg.output_dir) / "traces";
  write_text(dir / "trace.config.json", cfg.to_json());
  const LoadedCheckpoint ck = load_model(cfg, opt.checkpoint);
  const Dataset ds = load_split(cfg, cfg.eval.eval_split);
  check_compatible(ck.model.config(), ds, cfg.eval.eval_split);
  for (std::size_t id : ids) {
    if (id >= ds.n) {
      throw InputError("unknown sample id " + std::to_string(id) + " (split '" + cfg.eval.eval_split + "' has " +
                       std::to_string(ds.n) + " samples)");
    }
  }
  const CostModel cost = make_cost(cfg, ck.model, ds);
  const PreparedInference p = prepare(cfg, opt, ck.model, cost, io);
  std::vector<EpisodeTrace> traces;
  for (std::size_t id : ids) traces.push_back(infer(ck.model, load_image(ds, id), p.config, id, ds.labels[id], &cost));
  const fs::path file = dir / ("trace_" + cfg.eval.eval_split + ".jsonl");
  {
    std::ofstream f = open_output(file);
    write_traces(f, traces, ck.model);
  }
  write_traces(io.out, traces, ck.model);
  io.progress("wrote " + file.string());
  return 0;
}

// ---- convert-dataset ----

Dataset read_cifar_batches(const std::vector<fs::path>& files, Split split) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  Dataset ds;
  ds.c = 3;
  ds.h = ds.w = 32;
  ds.num_classes = 10;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("CIFAR-10 batch not found: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw ConfigError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                        std::to_string(kRecord));
    }
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      if (bytes[off] >= 10) throw ConfigError(path.string() + ": label out of range");
      ds.labels.push_back(bytes[off]);
      ds.pixels.insert(ds.pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off + 1),
                       bytes.begin() + static_cast<std::ptrdiff_t>(off + kRecord));
    }
  }
  ds.n = static_cast<std::uint32_t>(ds.labels.size());
  ds.manifest.split = split;
  return ds;
}

Dataset take(const Dataset& src, std::size_t begin, std::size_t end, Split split) {
  Dataset ds = src;
  ds.n = static_cast<std::uint32_t>(end - begin);
  ds.labels.assign(src.labels.begin() + static_cast<std::ptrdiff_t>(begin), src.labels.begin() + static_cast<std::ptrdiff_t>(end));
  const std::size_t sz = src.image_size();
  ds.pixels.assign(src.pixels.begin() + static_cast<std::ptrdiff_t>(begin * sz),
                   src.pixels.begin() + static_cast<std::ptrdiff_t>(end * sz));
  ds.manifest.split = split;
  return ds;
}

struct ConvertOptions {
  std::string out;
  bool synthetic = false;
  std::string cifar_dir;
  std::size_t n_train = 20000, n_val = 2000, n_test = 2000, val_count = 5000;
  std::uint64_t seed = 7;
};

int cmd_convert(const ConvertOptions& o, const Io& io) {
  if (o.synthetic == !o.cifar_dir.empty()) throw ConfigError("choose exactly one source: --synthetic or --cifar10 DIR");
  OutputLock lock(o.out);
  const fs::path dir(o.out);
  SyntheticCorpus c;
  nlohmann::json record;
  if (o.synthetic) {
    c = make_synthetic_corpus(o.n_train, o.n_val, o.n_test, o.seed);
    record = {{"source", "synthetic"}, {"train", o.n_train}, {"val", o.n_val}, {"test", o.n_test}, {"seed", o.seed}};
  } else {
    std::vector<fs::path> batches;
    for (int i = 1; i <= 5; ++i) batches.push_back(fs::path(o.cifar_dir) / ("data_batch_" + std::to_string(i) + ".bin"));
    const Dataset all = read_cifar_batches(batches, Split::Train);
    if (o.val_count >= all.n) throw ConfigError("--val-count must be below the training set size");
    c.train = take(all, 0, all.n - o.val_count, Split::Train);
    c.val = take(all, all.n - o.val_count, all.n, Split::Val);
    c.test = read_cifar_batches({fs::path(o.cifar_dir) / "test_batch.bin"}, Split::Test);
    const NormStats norm = compute_norm_stats(c.train);
    for (Dataset* d : {&c.train, &c.val, &c.test}) {
      d->manifest.source = "cifar10-binary:" + o.cifar_dir;
      d->manifest.norm = norm;
    }
    record = {{"source", "cifar10"}, {"input", o.cifar_dir}, {"val_count", o.val_count}};
  }
  for (const Dataset* d : {&c.train, &c.val, &c.test}) {
    const fs::path p = dir / (to_string(d->manifest.split) + ".gfds");
    save_dataset(*d, p);
    io.out << to_string(d->manifest.split) << ": " << d->n << " samples -> " << p.string() << "\n";
  }
  write_text(dir / "convert.config.json", record.dump(2) + "\n");
  return 0;
}

// ---- solve-budget ----

int cmd_solve_budget(const CommonOptions& common, const InferOptions& opt, double budget, const std::string& costs_arg,
                     bool calibrate, const Io& io) {
  RunConfig cfg = common.resolve(opt.overrides());
  CostModel cost;
  std::optional<LoadedCheckpoint> ck;
  if (!costs_arg.empty()) {
    cost = CostModel{parse_numbers(costs_arg, "cost")};
  } else {
    ck = load_model(cfg, opt.checkpoint);
    if (cfg.eval.cost == "latency") throw ConfigError("solve-budget with --cost latency needs explicit --costs");
    const Dataset none;
    cost = make_cost(cfg, ck->model, none);
  }
  cost.validate();
  if (!calibrate) {
    const ExitDistribution d = solve_q(budget, cost);
    io.out << std::setprecision(17) << "budget=" << budget << "\nq=" << d.q << "\nz=" << d.z
           << "\nq_t=" << join(d.probs) << "\nC_t=" << join(cost.cumulative) << "\nexpected_cost=" << expected_cost(d, cost)
           << "\n";
    return 0;
  }
  if (!ck) throw ConfigError("--calibrate needs a checkpoint, not --costs");
  const Dataset calib = load_split(cfg, cfg.eval.calibration_split);
  check_compatible(ck->model.config(), calib, cfg.eval.calibration_split);
  InferenceConfig full;
  full.policy = parse_policy_kind(opt.policy);
  full.random_seed = cfg.eval.random_seed;
  const auto traces = batch_infer(ck->model, calib, full, &cost, cfg.eval.concurrency).traces;
  io.out << solve_budget(budget, cost, confidence_table(traces)).to_text();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Glance-and-focus adaptive inference: training, budgeted evaluation and curve export", "gfnet"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  CommonOptions common;
  InferOptions infer_opts;
  ConvertOptions convert;
  std::string stage = "all", budgets = "auto", format = "csv", ids, costs;
  double budget = 0;
  bool calibrate = false;

  CLI::App* train = app.add_subcommand("train", "run training stages and write checkpoints and metrics");
  common.add_to(train);
  std::optional<std::uint64_t> train_seed;
  train->add_option("--seed", train_seed, "model initialisation seed");
  train->add_option("--stage", stage, "0 | 1 | 2 | 3 | all")->check(CLI::IsMember({"0", "1", "2", "3", "all"}));

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint and write traces");
  common.add_to(eval);
  infer_opts.add_to(eval, true);

  CLI::App* sweep = app.add_subcommand("sweep", "budgeted accuracy over a list of budgets");
  common.add_to(sweep);
  infer_opts.add_to(sweep, false);
  sweep->add_option("--budgets", budgets, "'auto' (10 log-spaced in [C_1, C_T]) or a comma list");
  sweep->add_option("--format", format, "csv | jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  CLI::App* trace = app.add_subcommand("trace", "per-sample step traces with patch windows");
  common.add_to(trace);
  infer_opts.add_to(trace, true);
  trace->add_option("--ids", ids, "comma-separated sample ids")->required();

  CLI::App* conv = app.add_subcommand("convert-dataset", "write train/val/test .gfds files");
  conv->add_option("-o,--out", convert.out, "dataset directory")->required();
  conv->add_flag("--synthetic", convert.synthetic, "generate the procedural 10-class corpus");
  conv->add_option("--cifar10", convert.cifar_dir, "directory with the CIFAR-10 binary batches");
  conv->add_option("--train", convert.n_train, "synthetic training samples");
  conv->add_option("--val", convert.n_val, "synthetic validation samples");
  conv->add_option("--test", convert.n_test, "synthetic test samples");
  conv->add_option("--val-count", convert.val_count, "CIFAR-10 training images held out for validation");
  conv->add_option("--seed", convert.seed, "synthetic corpus seed");

  CLI::App* solve = app.add_subcommand("solve-budget", "exit distribution (and thresholds) for a budget");
  common.add_to(solve);
  solve->add_option("--budget", budget, "per-sample budget B")->required();
  solve->add_option("--costs", costs, "comma list C_1..C_T (default: from the checkpoint)");
  solve->add_flag("--calibrate", calibrate, "also fit thresholds on the calibration split");
  solve->add_option("--checkpoint", infer_opts.checkpoint, "checkpoint file");
  solve->add_option("--policy", infer_opts.policy, "policy used for calibration");
  solve->add_option("--cost", infer_opts.cost, "cost model: macs | steps");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  Io io{out, err, common.quiet};
  try {
    if (*train) return cmd_train(common, stage, train_seed, io);
    if (*eval) return cmd_eval(common, infer_opts, io);
    if (*sweep) return cmd_sweep(common, infer_opts, budgets, format, io);
    if (*trace) return cmd_trace(common, infer_opts, ids, io);
    if (*conv) return cmd_convert(convert, io);
    if (*solve) return cmd_solve_budget(common, infer_opts, budget, costs, calibrate, io);
  } catch (const InfeasibleBudget& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace gfnet
