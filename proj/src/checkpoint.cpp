#include "iaf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iaf/fileutil.hpp"

namespace iaf {

namespace {

constexpr char kMagic[8] = {'I', 'A', 'F', 'C', 'K', 'P', 'T', '\n'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

void put_string(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& Checkpoint::require(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end()) throw CheckpointError("checkpoint: missing header field '" + key + "'");
  return it->second;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.header.size()));
  for (const auto& [k, v] : ckpt.header) {
    put_string(out, k);
    put_string(out, v);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(out, name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
  }
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointError("checkpoint: bad magic (not an iaf checkpoint)");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto n_header = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_header; ++i) {
    std::string k = r.str();
    ckpt.header[k] = r.str();
  }
  const auto n_tensors = r.le<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint64_t>();
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : manifest) {
    Tensor t(shape);
    for (double& v : t.data()) v = std::bit_cast<double>(r.le<std::uint64_t>());
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw CheckpointError("checkpoint: trailing bytes after payload");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(std::map<std::string, std::string> header, const nn::ConstParamList& params) {
  Checkpoint ckpt;
  ckpt.header = std::move(header);
  for (const nn::Param* p : params) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void load_params(const Checkpoint& ckpt, const nn::ParamList& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw CheckpointError("checkpoint: manifest lists " + std::to_string(ckpt.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    nn::Param& p = *params[i];
    if (name != p.name) {
      throw CheckpointError("checkpoint: tensor " + std::to_string(i) + " is '" + name +
                            "', model expects '" + p.name + "'");
    }
    if (t.shape() != p.value.shape()) {
      throw CheckpointError("checkpoint: '" + name + "' has shape " + shape_string(t.shape()) +
                            ", model expects " + shape_string(p.value.shape()));
    }
    p.value = t;
  }
}

}  // namespace iaf
