#include "gfnet/config/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gfnet/util/errors.hpp"

namespace gfnet {

using nlohmann::json;

namespace {

json stage_json(const StageConfig& s) {
  return {{"epochs", s.epochs},       {"batch_size", s.batch_size}, {"encoder_lr", s.encoder_lr},
          {"classifier_lr", s.classifier_lr}, {"momentum", s.momentum}, {"weight_decay", s.weight_decay},
          {"lambda", s.lambda},       {"augment", s.augment},       {"seed", s.seed}};
}

StageConfig stage_from(const json& j) {
  StageConfig s;
  s.epochs = j.at("epochs").get<std::size_t>();
  s.batch_size = j.at("batch_size").get<std::size_t>();
  s.encoder_lr = j.at("encoder_lr").get<double>();
  s.classifier_lr = j.at("classifier_lr").get<double>();
  s.momentum = j.at("momentum").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.lambda = j.at("lambda").get<double>();
  s.augment = j.at("augment").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json to_tree(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const PpoConfig& p = c.ppo;
  const EvalSettings& e = c.eval;
  return {
      {"dataset", c.dataset},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"model",
       {{"max_steps", m.max_steps},
        {"patch_size", m.patch.height},
        {"encoder_channels", m.encoder.channels},
        {"encoder_strides", m.encoder.strides},
        {"classifier", to_string(m.classifier)},
        {"classifier_hidden", m.classifier_hidden},
        {"policy_channels", m.policy_channels},
        {"policy_hidden", m.policy_hidden},
        {"action_std", m.action_std}}},
      {"stage0", stage_json(c.stage0)},
      {"stage1", stage_json(c.stage1)},
      {"stage3", stage_json(c.stage3)},
      {"ppo",
       {{"gamma", p.gamma},
        {"clip", p.clip},
        {"value_coef", p.value_coef},
        {"entropy_coef", p.entropy_coef},
        {"learning_rate", p.learning_rate},
        {"epochs", p.epochs},
        {"update_epochs", p.update_epochs},
        {"minibatch_size", p.minibatch_size},
        {"rollout_size", p.rollout_size},
        {"normalize_advantages", p.normalize_advantages},
        {"learn_action_std", p.learn_action_std},
        {"seed", p.seed}}},
      {"eval",
       {{"concurrency", e.concurrency},
        {"random_seed", e.random_seed},
        {"calibration_split", e.calibration_split},
        {"eval_split", e.eval_split},
        {"cost", e.cost},
        {"latency_reps", e.latency_reps}}},
  };
}

RunConfig from_tree(const json& j) {
  RunConfig c;
  c.dataset = j.at("dataset").get<std::string>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& m = j.at("model");
  c.model.max_steps = m.at("max_steps").get<std::size_t>();
  c.model.patch.height = c.model.patch.width = m.at("patch_size").get<std::size_t>();
  c.model.encoder.channels = m.at("encoder_channels").get<std::vector<std::size_t>>();
  c.model.encoder.strides = m.at("encoder_strides").get<std::vector<std::size_t>>();
  c.model.classifier = parse_classifier_variant(m.at("classifier").get<std::string>());
  c.model.classifier_hidden = m.at("classifier_hidden").get<std::size_t>();
  c.model.policy_channels = m.at("policy_channels").get<std::size_t>();
  c.model.policy_hidden = m.at("policy_hidden").get<std::size_t>();
  c.model.action_std = m.at("action_std").get<double>();
  c.stage0 = stage_from(j.at("stage0"));
  c.stage1 = stage_from(j.at("stage1"));
  c.stage3 = stage_from(j.at("stage3"));
  const json& p = j.at("ppo");
  c.ppo.gamma = p.at("gamma").get<double>();
  c.ppo.clip = p.at("clip").get<double>();
  c.ppo.value_coef = p.at("value_coef").get<double>();
  c.ppo.entropy_coef = p.at("entropy_coef").get<double>();
  c.ppo.learning_rate = p.at("learning_rate").get<double>();
  c.ppo.epochs = p.at("epochs").get<std::size_t>();
  c.ppo.update_epochs = p.at("update_epochs").get<std::size_t>();
  c.ppo.minibatch_size = p.at("minibatch_size").get<std::size_t>();
  c.ppo.rollout_size = p.at("rollout_size").get<std::size_t>();
  c.ppo.normalize_advantages = p.at("normalize_advantages").get<bool>();
  c.ppo.learn_action_std = p.at("learn_action_std").get<bool>();
  c.ppo.seed = p.at("seed").get<std::uint64_t>();
  const json& e = j.at("eval");
  c.eval.concurrency = e.at("concurrency").get<std::size_t>();
  c.eval.random_seed = e.at("random_seed").get<std::uint64_t>();
  c.eval.calibration_split = e.at("calibration_split").get<std::string>();
  c.eval.eval_split = e.at("eval_split").get<std::string>();
  c.eval.cost = e.at("cost").get<std::string>();
  c.eval.latency_reps = e.at("latency_reps").get<std::size_t>();
  return c;
}

// Overlays `patch` onto `base`, refusing keys that `base` does not have.
void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config: " + (where.empty() ? "top level" : where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else {
      const bool number_ok = slot.is_number() && value.is_number();
      if (!number_ok && slot.type() != value.type()) {
        throw ConfigError("config: key '" + path + "' expects " + std::string(slot.type_name()) + ", got " +
                          std::string(value.type_name()));
      }
      if (slot.is_number_integer() && !(value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0))) {
        throw ConfigError("config: key '" + path + "' expects a non-negative integer, got " + value.dump());
      }
      slot = value;
    }
  }
}

RunConfig rebuild(const json& tree) {
  try {
    RunConfig c = from_tree(tree);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

void EvalSettings::validate() const {
  if (concurrency == 0) throw ConfigError("eval.concurrency must be positive");
  for (const auto* s : {&calibration_split, &eval_split}) parse_split(*s);
  if (cost != "macs" && cost != "latency" && cost != "steps") {
    throw ConfigError("eval.cost must be macs, latency or steps, got '" + cost + "'");
  }
  if (latency_reps == 0) throw ConfigError("eval.latency_reps must be positive");
}

void RunConfig::validate() const {
  if (dataset.empty()) throw ConfigError("dataset path is empty");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  stage0.validate();
  stage1.validate();
  stage3.validate();
  ppo.validate();
  eval.validate();
}

std::string RunConfig::to_json() const { return to_tree(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_json(const std::string& text) {
  RunConfig c;
  c.merge_json(text);
  return c;
}

void RunConfig::merge_json(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json tree = to_tree(*this);
  overlay(tree, patch, "");
  // Norm stats are not part of the file; keep whatever the caller already had.
  NormStats norm = model.norm;
  *this = rebuild(tree);
  model.norm = std::move(norm);
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json patch = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    patch = json{{key.substr(begin, end - begin), patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_json(patch.dump());
}

std::filesystem::path RunConfig::dataset_path(const std::string& split) const {
  return std::filesystem::path(dataset) / (to_string(parse_split(split)) + ".gfds");
}

RunConfig resolve_config(const std::string& explicit_path, const std::vector<std::string>& overrides) {
  RunConfig c;
  std::string path = explicit_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    c.merge_json(text.str());
  }
  for (const auto& o : overrides) c.set(o);
  return c;
}

}  // namespace gfnet
