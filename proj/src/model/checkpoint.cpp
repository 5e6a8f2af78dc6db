#include "gfnet/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "gfnet/util/hash.hpp"

namespace gfnet {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written little-endian");

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}
  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(&v, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > limit_) {
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "checkpoint: truncated at byte offset " + std::to_string(pos_));
    }
  }
  const std::string& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const GfModel& model, const CheckpointMeta& meta) {
  Writer w;
  w.raw("GFCK", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(sizeof(real)));
  w.str(model.config().to_text());
  w.str(meta.stage);
  w.str(meta.rng_state);
  const ParamList params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.raw(t.data().data(), t.numel() * sizeof(real));
  }
  Fnv1a hash;
  hash.update(w.bytes().data(), w.bytes().size());
  w.u64(hash.value());
  return std::move(w.bytes());
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "GFCK") != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, "checkpoint: bad magic (expected GFCK)");
  }
  if (bytes.size() < 4 + 4 + 8) throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: too short");
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, body);
  char magic[4];
  r.raw(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "checkpoint: version " + std::to_string(version) + " not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  Fnv1a hash;
  hash.update(bytes.data(), body);
  if (hash.value() != stored) {
    throw CheckpointError(CheckpointError::Kind::ChecksumMismatch, "checkpoint: checksum mismatch");
  }
  const std::uint32_t scalar_bytes = r.u32();
  if (scalar_bytes != sizeof(real)) {
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "checkpoint: stored with " + std::to_string(scalar_bytes) + "-byte scalars");
  }
  const ModelConfig config = ModelConfig::from_text(r.str());
  LoadedCheckpoint out{GfModel::create(config, 0), {}, stored};
  out.meta.stage = r.str();
  out.meta.rng_state = r.str();

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : out.model.parameters()) by_name.emplace(name, t);
  const std::uint32_t count = r.u32();
  if (count != by_name.size()) {
    throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: parameter count does not match the config");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: unknown parameter " + name);
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (shape != it->second.shape()) {
      throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: shape mismatch for " + name);
    }
    auto dst = it->second.mutable_data();
    r.raw(dst.data(), dst.size() * sizeof(real));
  }
  if (r.pos() != body) throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const GfModel& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace gfnet
