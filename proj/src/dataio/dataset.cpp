#include "gfnet/dataio/dataset.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'F', 'D', 'S'};
constexpr std::size_t kHeaderBytes = 4 + 6 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::string join(const std::vector<double>& values) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? " " : "") << values[i];
  return os.str();
}

std::vector<double> split_doubles(const std::string& text) {
  std::istringstream is(text);
  std::vector<double> out;
  double v = 0;
  while (is >> v) out.push_back(v);
  return out;
}

void write_manifest(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw LoadError(LoadError::Kind::Io, "cannot write manifest " + path.string());
  out << "format: gfds\n";
  out << "version: " << kDatasetVersion << "\n";
  out << "source: " << ds.manifest.source << "\n";
  out << "split: " << to_string(ds.manifest.split) << "\n";
  out << "n: " << ds.n << "\nc: " << ds.c << "\nh: " << ds.h << "\nw: " << ds.w << "\n";
  out << "num_classes: " << ds.num_classes << "\n";
  out << "norm_mean: " << join(ds.manifest.norm.mean) << "\n";
  out << "norm_std: " << join(ds.manifest.norm.stddev) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  std::ifstream in(path);
  if (!in) return m;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    try {
      if (key == "source") m.source = value;
      else if (key == "split") m.split = parse_split(value);
      else if (key == "norm_mean") m.norm.mean = split_doubles(value);
      else if (key == "norm_std") m.norm.stddev = split_doubles(value);
    } catch (const std::exception& e) {
      throw LoadError(LoadError::Kind::BadManifest, path.string() + ": " + e.what());
    }
  }
  return m;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + text + "'");
}

std::span<const std::uint8_t> Dataset::image(std::size_t i) const {
  if (i >= n) throw InputError("dataset: sample " + std::to_string(i) + " out of range");
  return std::span<const std::uint8_t>(pixels).subspan(i * image_size(), image_size());
}

void Dataset::validate() const {
  if (pixels.size() != std::size_t{n} * image_size()) throw ConfigError("dataset: pixel buffer does not match N x C x H x W");
  if (labels.size() != n) throw ConfigError("dataset: label count does not match N");
  if (num_classes == 0) throw ConfigError("dataset: num_classes must be positive");
  for (int y : labels) {
    if (y < 0 || static_cast<std::uint32_t>(y) >= num_classes) throw ConfigError("dataset: label out of range");
  }
}

NormStats compute_norm_stats(const Dataset& train) {
  NormStats s;
  const std::size_t hw = std::size_t{train.h} * train.w;
  for (std::size_t ch = 0; ch < train.c; ++ch) {
    double total = 0, total_sq = 0;
    for (std::size_t i = 0; i < train.n; ++i) {
      const auto img = train.image(i);
      for (std::size_t k = 0; k < hw; ++k) {
        const double v = img[ch * hw + k] / 255.0;
        total += v;
        total_sq += v * v;
      }
    }
    const double count = static_cast<double>(train.n * hw);
    const double mean = total / count;
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(std::max(total_sq / count - mean * mean, 1e-12)));
  }
  return s;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  return std::filesystem::path(dataset_path.string() + ".manifest");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::vector<std::uint8_t> bytes(kMagic.begin(), kMagic.end());
  put_u32(bytes, kDatasetVersion);
  for (std::uint32_t v : {ds.n, ds.c, ds.h, ds.w, ds.num_classes}) put_u32(bytes, v);
  bytes.insert(bytes.end(), ds.pixels.begin(), ds.pixels.end());
  const bool wide = ds.num_classes > 256;
  for (int y : ds.labels) {
    bytes.push_back(static_cast<std::uint8_t>(y & 0xff));
    if (wide) bytes.push_back(static_cast<std::uint8_t>((y >> 8) & 0xff));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(LoadError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError(LoadError::Kind::Io, "write failed for " + path.string());
  write_manifest(ds, manifest_path(path));
}

Dataset load_dataset(const std::filesystem::path& path, const std::string& format) {
  if (format != "gfds") throw ConfigError("load_dataset: unsupported format '" + format + "'");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Kind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw LoadError(LoadError::Kind::BadMagic, path.string() + ": bad magic (expected GFDS)");
  }
  if (bytes.size() < kHeaderBytes) {
    throw LoadError(LoadError::Kind::Truncated,
                    path.string() + ": truncated header at byte offset " + std::to_string(bytes.size()));
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kDatasetVersion) {
    throw LoadError(LoadError::Kind::BadVersion, path.string() + ": unsupported version " + std::to_string(version));
  }
  Dataset ds;
  ds.n = get_u32(bytes, 8);
  ds.c = get_u32(bytes, 12);
  ds.h = get_u32(bytes, 16);
  ds.w = get_u32(bytes, 20);
  ds.num_classes = get_u32(bytes, 24);
  if (ds.c == 0 || ds.h == 0 || ds.w == 0 || ds.num_classes == 0 || ds.num_classes > 65536) {
    throw LoadError(LoadError::Kind::BadHeader, path.string() + ": invalid header dimensions");
  }
  const std::size_t pixel_bytes = std::size_t{ds.n} * ds.image_size();
  const std::size_t label_width = ds.num_classes > 256 ? 2 : 1;
  const std::size_t expected = kHeaderBytes + pixel_bytes + std::size_t{ds.n} * label_width;
  if (bytes.size() < expected) {
    throw LoadError(LoadError::Kind::Truncated, path.string() + ": truncated payload at byte offset " +
                                                    std::to_string(bytes.size()) + " (expected " +
                                                    std::to_string(expected) + " bytes)");
  }
  ds.pixels.assign(bytes.begin() + kHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + pixel_bytes));
  ds.labels.resize(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::size_t off = kHeaderBytes + pixel_bytes + i * label_width;
    int y = bytes[off];
    if (label_width == 2) y |= static_cast<int>(bytes[off + 1]) << 8;
    if (static_cast<std::uint32_t>(y) >= ds.num_classes) {
      throw LoadError(LoadError::Kind::LabelOutOfRange, path.string() + ": label " + std::to_string(y) +
                                                            " of sample " + std::to_string(i) + " >= num_classes " +
                                                            std::to_string(ds.num_classes));
    }
    ds.labels[i] = y;
  }
  ds.manifest = read_manifest(manifest_path(path));
  return ds;
}

}  // namespace gfnet
