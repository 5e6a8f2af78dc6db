#include "gfnet/model/config.hpp"

#include <map>
#include <sstream>

#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

template <typename T>
std::vector<T> split_list(const std::string& text) {
  std::vector<T> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    std::istringstream cell(item);
    T v{};
    cell >> v;
    if (!cell) throw ConfigError("model config: bad list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("model config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

}  // namespace

std::string to_string(ClassifierVariant v) { return v == ClassifierVariant::Gru ? "gru" : "cascaded_fc"; }

ClassifierVariant parse_classifier_variant(const std::string& text) {
  if (text == "gru") return ClassifierVariant::Gru;
  if (text == "cascaded_fc") return ClassifierVariant::CascadedFc;
  throw ConfigError("unknown classifier variant '" + text + "'");
}

std::size_t EncoderConfig::output_side(std::size_t input) const {
  std::size_t side = input;
  for (std::size_t s : strides) side = (side + 2 - 3) / s + 1;
  return side;
}

void ModelConfig::validate() const {
  if (in_channels == 0 || num_classes < 2) throw ConfigError("model config: need channels and >= 2 classes");
  if (max_steps < 1) throw ConfigError("model config: T must be at least 1");
  patch.validate_for(image_h, image_w);
  if (encoder.channels.empty() || encoder.channels.size() != encoder.strides.size()) {
    throw ConfigError("model config: encoder channels and strides must be non-empty and equally long");
  }
  for (std::size_t s : encoder.strides)
    if (s == 0) throw ConfigError("model config: encoder stride must be positive");
  if (classifier_hidden == 0 || policy_hidden == 0 || policy_channels == 0) {
    throw ConfigError("model config: hidden sizes must be positive");
  }
  if (!(action_std > 0)) throw ConfigError("model config: action_std must be positive");
  if (!norm.mean.empty() && (norm.mean.size() != in_channels || norm.stddev.size() != in_channels)) {
    throw ConfigError("model config: normalization stats do not match in_channels");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "in_channels=" << in_channels << "\n";
  os << "image_h=" << image_h << "\n";
  os << "image_w=" << image_w << "\n";
  os << "num_classes=" << num_classes << "\n";
  os << "max_steps=" << max_steps << "\n";
  os << "patch=" << patch.height << "\n";
  os << "encoder_channels=" << join(encoder.channels) << "\n";
  os << "encoder_strides=" << join(encoder.strides) << "\n";
  os << "classifier=" << to_string(classifier) << "\n";
  os << "classifier_hidden=" << classifier_hidden << "\n";
  os << "policy_channels=" << policy_channels << "\n";
  os << "policy_hidden=" << policy_hidden << "\n";
  os << "action_std=" << action_std << "\n";
  os << "norm_mean=" << join(norm.mean) << "\n";
  os << "norm_std=" << join(norm.stddev) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
    if (key == "in_channels") c.in_channels = to_size(key, v);
    else if (key == "image_h") c.image_h = to_size(key, v);
    else if (key == "image_w") c.image_w = to_size(key, v);
    else if (key == "num_classes") c.num_classes = to_size(key, v);
    else if (key == "max_steps") c.max_steps = to_size(key, v);
    else if (key == "patch") c.patch.height = c.patch.width = to_size(key, v);
    else if (key == "encoder_channels") c.encoder.channels = split_list<std::size_t>(v);
    else if (key == "encoder_strides") c.encoder.strides = split_list<std::size_t>(v);
    else if (key == "classifier") c.classifier = parse_classifier_variant(v);
    else if (key == "classifier_hidden") c.classifier_hidden = to_size(key, v);
    else if (key == "policy_channels") c.policy_channels = to_size(key, v);
    else if (key == "policy_hidden") c.policy_hidden = to_size(key, v);
    else if (key == "action_std") c.action_std = std::stod(v);
    else if (key == "norm_mean") c.norm.mean = split_list<double>(v);
    else if (key == "norm_std") c.norm.stddev = split_list<double>(v);
    else throw ConfigError("model config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace gfnet
