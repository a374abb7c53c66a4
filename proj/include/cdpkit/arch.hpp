#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "cdpkit/layers.hpp"

namespace cdpkit {

struct InputShape {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

/// Ordered layer list plus input shape. `pools` holds 1-based layer indices
/// that are followed by a 2x2 stride-2 max pool.
struct ArchSpec {
  std::string name;
  InputShape input;
  std::vector<LayerSpec> layers;
  std::set<std::size_t> pools;

  /// Channel chaining, per-layer invariants and positive spatial extents.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct LayerGeometry {
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;
};

/// Spatial extents seen by every layer. Errors name the 1-based layer index.
std::vector<LayerGeometry> propagate_shapes(const ArchSpec& arch);

/// Final output shape as [H, W, C].
Shape output_shape(const ArchSpec& arch);

/// L2Net: 32x32x1 patch to a 1x1x128 descriptor; strides at layers 3 and 5.
ArchSpec l2net_spec();

/// SuperPoint shared encoder (layers 1-8) plus the detector head (9-10) at
/// 240x320x3. The descriptor head is not modelled.
ArchSpec superpoint_spec();

/// Looks up a built-in architecture by name ("l2net", "superpoint").
ArchSpec builtin_arch(const std::string& name);
bool is_builtin_arch(const std::string& name);

/// Sequential application of every layer (and pooling marker).
FeatureMap model_forward(const FeatureMap& x, const ArchSpec& arch,
                         const std::vector<LayerWeights>& weights);

}  // namespace cdpkit
