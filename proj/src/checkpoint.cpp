#include "hardbatch/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hardbatch {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'B', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagNormalize = 1u << 0;
constexpr std::uint32_t kFlagVelocity = 1u << 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_tensors(std::string& out, const ModelParams& p) {
  for (const auto& t : p.tensors()) {
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size_bytes());
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw std::runtime_error(std::string("checkpoint: truncated while reading ") + field);
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void read_tensors(ModelParams& p) {
    for (auto& t : p.tensors()) {
      if (bytes_.size() - pos_ < t.values.size_bytes()) {
        throw std::runtime_error("checkpoint: truncated in " + t.name);
      }
      std::memcpy(t.values.data(), bytes_.data() + pos_, t.values.size_bytes());
      pos_ += t.values.size_bytes();
    }
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  std::uint32_t flags = 0;
  if (ckpt.normalize_embeddings) flags |= kFlagNormalize;
  if (ckpt.velocity) flags |= kFlagVelocity;
  put<std::uint32_t>(out, flags);
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint64_t>(out, ckpt.epoch);
  put<std::uint64_t>(out, ckpt.step);
  put<std::uint64_t>(out, ckpt.params.layers.size());
  for (const auto& l : ckpt.params.layers) {
    put<std::uint64_t>(out, l.weight.rows());
    put<std::uint64_t>(out, l.weight.cols());
  }
  put<std::uint64_t>(out, ckpt.params.num_classes());
  put<std::uint64_t>(out, ckpt.params.num_scenes());
  put_tensors(out, ckpt.params);
  if (ckpt.velocity) {
    if (ckpt.velocity->parameter_count() != ckpt.params.parameter_count()) {
      throw std::invalid_argument("checkpoint: velocity shape differs from params");
    }
    put_tensors(out, *ckpt.velocity);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  }
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto flags = r.get<std::uint32_t>("flags");
  Checkpoint ckpt;
  ckpt.normalize_embeddings = (flags & kFlagNormalize) != 0;
  ckpt.config_hash = r.get<std::uint64_t>("config_hash");
  ckpt.epoch = r.get<std::uint64_t>("epoch");
  ckpt.step = r.get<std::uint64_t>("step");
  const auto n_layers = r.get<std::uint64_t>("layer count");
  if (n_layers == 0 || n_layers > 1024) throw std::runtime_error("checkpoint: bad layer count");
  ModelParams& p = ckpt.params;
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    const auto out_dim = r.get<std::uint64_t>("layer shape");
    const auto in_dim = r.get<std::uint64_t>("layer shape");
    if (out_dim == 0 || in_dim == 0 || out_dim > (1u << 24) || in_dim > (1u << 24)) {
      throw std::runtime_error("checkpoint: bad layer shape");
    }
    p.layers.push_back({Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)});
  }
  const auto classes = r.get<std::uint64_t>("class count");
  const auto scenes = r.get<std::uint64_t>("scene count");
  if (classes > (1u << 24) || scenes > (1u << 24)) throw std::runtime_error("checkpoint: bad head size");
  const std::size_t emb = p.embedding_dim();
  p.class_weights = Matrix(classes, emb);
  p.scene_weights = Matrix(scenes, emb);
  p.scene_bias.assign(scenes, 0.0);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
  r.read_tensors(p);
  if (flags & kFlagVelocity) {
    ckpt.velocity = p.zeros_like();
    r.read_tensors(*ckpt.velocity);
  }
  if (!r.at_end()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace hardbatch
