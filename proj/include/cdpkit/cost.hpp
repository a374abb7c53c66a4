#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdpkit/arch.hpp"
#include "cdpkit/layers.hpp"

namespace cdpkit {

/// Parameter and multiplication counts for one layer. FLOPs count
/// multiplications at output resolution (the Tucker input projection runs at
/// input resolution). `activation_flops` is the CDP ReLU element count; it only
/// enters `flops` under CostPolicy::include_activations.
struct LayerCost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t activation_flops = 0;
  friend bool operator==(const LayerCost&, const LayerCost&) = default;
};

struct CostPolicy {
  bool include_activations = false;
};

LayerCost conv_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h);
LayerCost depthsep_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h);
LayerCost tucker2_cost(const LayerSpec& spec, std::size_t in_w, std::size_t in_h,
                       std::size_t out_w, std::size_t out_h);

struct TdwCost {
  LayerCost cost;
  bool compresses = false;  ///< C*t*N > C*t*R + R*N
};
TdwCost tdw_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h);

LayerCost cdp_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h,
                   const CostPolicy& policy = {});

/// Cost of any layer kind given its geometry.
LayerCost layer_cost(const LayerSpec& spec, const LayerGeometry& geometry,
                     const CostPolicy& policy = {});

/// Pointwise bottleneck condition: in*out > in*rank + rank*out.
bool bottleneck_compresses(std::uint64_t in, std::uint64_t out, std::uint64_t rank);

/// Offsets for which a CDP layer has fewer parameters than the full conv.
///
/// Compression holds for integer alpha strictly below
///   exact = C - N^2 / (K^2 (N - 1) - N),
/// and the large-N simplification is C - N / (K^2 - 1). When the denominator
/// K^2 (N - 1) - N is not positive (K = 1, for instance) no offset compresses
/// and `feasible` is false.
struct AlphaBound {
  bool feasible = false;
  double exact = 0.0;
  double simplified = 0.0;
  std::optional<std::size_t> max_alpha;  ///< largest compressing offset in [0, C]
};
AlphaBound alpha_bound(std::size_t K, std::size_t C, std::size_t N);

struct LayerCostEntry {
  std::size_t index = 0;  // 1-based
  LayerKind kind = LayerKind::Standard;
  LayerGeometry geometry;
  LayerCost cost;
  std::string group;
};

struct CostReport {
  std::vector<LayerCostEntry> per_layer;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
  std::map<std::string, std::uint64_t> group_flops;  ///< keyed by LayerSpec::group
  double compression_ratio = 1.0;  ///< baseline params / total params
  double speedup = 1.0;            ///< baseline flops / total flops
};

/// Propagates shapes through the network (pooling halves the extent and
/// costs nothing) and sums per-layer costs. Ratios are against `baseline`
/// when given, 1 otherwise.
CostReport model_cost(const ArchSpec& arch, const std::optional<ArchSpec>& baseline = std::nullopt,
                      const CostPolicy& policy = {});

}  // namespace cdpkit
