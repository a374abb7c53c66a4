#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdpkit/arch.hpp"
#include "cdpkit/layers.hpp"
#include "cdpkit/tensor.hpp"

namespace cdpkit {

struct WeightManifest {
  std::string arch_name;
  std::uint64_t seed = 0;
  std::uint32_t format_version = 1;
  friend bool operator==(const WeightManifest&, const WeightManifest&) = default;
};

/// Named tensors for a whole network. Layer tensors are named
/// "layer<i>/<role>" with a 1-based layer index.
struct WeightStore {
  WeightManifest manifest;
  std::map<std::string, Tensor> tensors;

  static std::string tensor_name(std::size_t layer, const std::string& role);

  /// Roles stored for one layer (possibly empty).
  LayerWeights layer(std::size_t index) const;
  /// Replaces every tensor of one layer.
  void set_layer(std::size_t index, const LayerWeights& weights);

  friend bool operator==(const WeightStore&, const WeightStore&) = default;
};

/// Reserved tensor name carrying the manifest as UTF-8 bytes in a 1-D tensor.
inline constexpr const char* kManifestTensor = "__manifest__";

/// Binary container, little-endian:
///   "CDPW" | u32 version=1 | u32 count |
///   count x (u16 name_len | name | u8 ndim | ndim x u32 dim | f32 data...) |
///   u32 CRC-32 over every preceding byte.
/// Tensors are written in name order, so encoding is canonical.
std::vector<std::uint8_t> encode_weight_store(const WeightStore& store);
/// Throws WeightMismatch on a bad magic, version, truncation or CRC.
WeightStore decode_weight_store(std::span<const std::uint8_t> bytes);

void write_weight_store(const WeightStore& store, const std::filesystem::path& path);
WeightStore read_weight_store(const std::filesystem::path& path);

/// Independent per-layer stream derived from a store seed.
std::uint64_t derive_seed(std::uint64_t seed, std::size_t layer);

/// Seeded N(0, 1/fan_in) initialisation of every layer.
WeightStore random_weights(const ArchSpec& arch, std::uint64_t seed);
/// Seeded initialisation of a single layer.
LayerWeights random_layer_weights(const LayerSpec& spec, std::uint64_t seed);

/// Every layer's roles present and correctly shaped, no stray tensors.
/// Throws WeightMismatch naming the offending tensor.
void check_store(const ArchSpec& arch, const WeightStore& store);

std::vector<LayerWeights> layer_weights(const ArchSpec& arch, const WeightStore& store);

}  // namespace cdpkit
