#include "cdpkit/weight_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>
#include <zlib.h>

#include "cdpkit/errors.hpp"

namespace cdpkit {

static_assert(std::endian::native == std::endian::little,
              "weight container I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t>& view() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw WeightMismatch("weight file truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

Tensor manifest_tensor(const WeightManifest& m) {
  nlohmann::json j;
  j["arch"] = m.arch_name;
  j["seed"] = std::to_string(m.seed);
  j["format_version"] = m.format_version;
  const std::string text = j.dump();
  std::vector<float> data(text.begin(), text.end());
  for (std::size_t i = 0; i < text.size(); ++i) data[i] = static_cast<unsigned char>(text[i]);
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

WeightManifest manifest_from_tensor(const Tensor& t) {
  std::string text;
  for (float v : t.data()) text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  WeightManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.arch_name = j.value("arch", std::string());
    m.seed = std::stoull(j.value("seed", std::string("0")));
    m.format_version = j.value("format_version", 1u);
  } catch (const std::exception& e) {
    throw WeightMismatch(std::string("unreadable weight manifest: ") + e.what());
  }
  return m;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::size_t layer) {
  // splitmix64 step so neighbouring layers get unrelated streams
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (layer + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

std::size_t fan_in(const std::string& role, const Shape& dims) {
  if (dims.size() == 4) return dims[0] * dims[1] * dims[2];
  if (dims.size() == 3) return dims[0] * dims[1];
  (void)role;
  return dims[0];
}

}  // namespace

std::string WeightStore::tensor_name(std::size_t layer, const std::string& role) {
  return "layer" + std::to_string(layer) + "/" + role;
}

LayerWeights WeightStore::layer(std::size_t index) const {
  const std::string prefix = "layer" + std::to_string(index) + "/";
  LayerWeights out;
  for (auto it = tensors.lower_bound(prefix); it != tensors.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.emplace(it->first.substr(prefix.size()), it->second);
  }
  return out;
}

void WeightStore::set_layer(std::size_t index, const LayerWeights& weights) {
  const std::string prefix = "layer" + std::to_string(index) + "/";
  for (auto it = tensors.lower_bound(prefix);
       it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;) {
    it = tensors.erase(it);
  }
  for (const auto& [role, t] : weights) tensors[prefix + role] = t;
}

std::vector<std::uint8_t> encode_weight_store(const WeightStore& store) {
  std::map<std::string, const Tensor*> entries;
  for (const auto& [name, t] : store.tensors) {
    if (name == kManifestTensor) continue;
    entries[name] = &t;
  }
  const Tensor manifest = manifest_tensor(store.manifest);
  entries[kManifestTensor] = &manifest;

  Writer w;
  w.bytes("CDPW", 4);
  w.pod<std::uint32_t>(1);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xFFFF) throw InvalidArgument("tensor name too long: " + name);
    w.pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(t->rank()));
    for (auto d : t->dims()) w.pod<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.bytes(t->data().data(), t->size() * sizeof(float));
  }
  const std::uint32_t crc = crc32_of(w.view());
  w.pod<std::uint32_t>(crc);
  return w.take();
}

WeightStore decode_weight_store(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw WeightMismatch("weight file truncated");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + body.size(), 4);
  if (crc32_of(body) != stored_crc) throw WeightMismatch("weight file CRC mismatch");

  Reader r(body);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "CDPW", 4) != 0) throw WeightMismatch("not a CDPW weight file");
  const auto version = r.pod<std::uint32_t>();
  if (version != 1) throw WeightMismatch("unsupported weight file version " + std::to_string(version));
  const auto count = r.pod<std::uint32_t>();

  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.pod<std::uint16_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto ndim = r.pod<std::uint8_t>();
    Shape dims(ndim);
    for (auto& d : dims) d = r.pod<std::uint32_t>();
    std::size_t elements = 1;
    for (auto d : dims) elements *= d;
    std::vector<float> data(elements);
    r.bytes(data.data(), elements * sizeof(float));
    Tensor t;
    try {
      t = Tensor(std::move(dims), std::move(data));
    } catch (const InvalidArgument& e) {
      throw WeightMismatch("tensor '" + name + "': " + e.what());
    }
    if (name == kManifestTensor) {
      store.manifest = manifest_from_tensor(t);
    } else if (!store.tensors.emplace(name, std::move(t)).second) {
      throw WeightMismatch("duplicate tensor name '" + name + "'");
    }
  }
  if (r.position() != body.size()) throw WeightMismatch("trailing bytes after tensor table");
  return store;
}

void write_weight_store(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_weight_store(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightMismatch("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WeightStore read_weight_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightMismatch("cannot open weight file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_weight_store(bytes);
}

LayerWeights random_layer_weights(const LayerSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LayerWeights w;
  for (const auto& [role, dims] : weight_shapes(spec)) {
    Tensor t(dims);
    std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(float(fan_in(role, dims))));
    for (auto& v : t.data()) v = dist(rng);
    w.emplace(role, std::move(t));
  }
  return w;
}

WeightStore random_weights(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  WeightStore store;
  store.manifest.arch_name = arch.name;
  store.manifest.seed = seed;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    store.set_layer(i + 1, random_layer_weights(arch.layers[i], derive_seed(seed, i + 1)));
  }
  return store;
}

void check_store(const ArchSpec& arch, const WeightStore& store) {
  std::size_t expected = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto shapes = weight_shapes(arch.layers[i]);
    for (const auto& [role, dims] : shapes) {
      const auto name = WeightStore::tensor_name(i + 1, role);
      auto it = store.tensors.find(name);
      if (it == store.tensors.end()) throw WeightMismatch("missing tensor '" + name + "'");
      if (it->second.dims() != dims) {
        std::string want;
        for (auto d : dims) want += (want.empty() ? "" : "x") + std::to_string(d);
        std::string got;
        for (auto d : it->second.dims()) got += (got.empty() ? "" : "x") + std::to_string(d);
        throw WeightMismatch("tensor '" + name + "' has shape " + got + ", expected " + want);
      }
    }
    expected += shapes.size();
  }
  if (store.tensors.size() != expected) {
    for (const auto& [name, t] : store.tensors) {
      bool known = false;
      for (std::size_t i = 0; i < arch.layers.size() && !known; ++i) {
        for (const auto& [role, dims] : weight_shapes(arch.layers[i])) {
          if (name == WeightStore::tensor_name(i + 1, role)) known = true;
        }
      }
      if (!known) throw WeightMismatch("unexpected tensor '" + name + "'");
    }
  }
}

std::vector<LayerWeights> layer_weights(const ArchSpec& arch, const WeightStore& store) {
  check_store(arch, store);
  std::vector<LayerWeights> out;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) out.push_back(store.layer(i + 1));
  return out;
}

}  // namespace cdpkit
