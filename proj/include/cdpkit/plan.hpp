#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cdpkit/arch.hpp"
#include "cdpkit/weight_store.hpp"

namespace cdpkit {

/// A per-layer integer parameter inside a directive: one value for every
/// layer, a list aligned with the directive's range, or `value@i,j` scoping a
/// value to the listed layers (others fall back to the default).
struct PlanValue {
  std::optional<std::size_t> uniform;
  std::vector<std::size_t> per_layer;
  std::optional<std::size_t> scoped_value;
  std::set<std::size_t> scoped_layers;

  bool empty() const {
    return !uniform && per_layer.empty() && !scoped_value;
  }
  std::optional<std::size_t> resolve(std::size_t layer, std::size_t first) const;
};

struct Directive {
  LayerKind kind = LayerKind::DepthSep;
  std::size_t first = 0;  // 1-based, inclusive
  std::size_t last = 0;
  PlanValue t;
  PlanValue alpha;
  PlanValue bottleneck;  // Tdw R
  bool bottleneck_vbmf = false;
  std::optional<std::pair<std::size_t, std::size_t>> ranks;  // Tucker (R1, R2)
  bool ranks_vbmf = false;
  std::optional<Activation> inner;
  std::string text;
};

/// Grammar: comma-separated directives `kind:range [key=value ...]`, range
/// `i` or `i-j` (1-based, inclusive). Keys: t, alpha, r (Tdw bottleneck, or
/// `vbmf`), ranks (Tucker `R1,R2` or `vbmf`), inner (`relu`/`none`).
/// Integer values may be lists (`alpha=2,4,4,8,8,16`) or scoped (`t=2@3,5`).
struct ReplacementPlan {
  std::vector<Directive> directives;
};

/// Throws ParseError.
ReplacementPlan parse_plan(const std::string& text);

struct Provenance {
  std::size_t layer = 0;
  std::size_t directive = 0;  // index into plan.directives
  LayerKind from = LayerKind::Standard;
  LayerKind to = LayerKind::Standard;
  std::string note;
  std::optional<std::pair<std::size_t, std::size_t>> ranks;
  std::optional<std::size_t> bottleneck_rank;
  std::optional<bool> compresses;
  std::optional<double> reconstruction_error;
};

struct PlanResult {
  ArchSpec arch;
  std::optional<WeightStore> weights;
  std::vector<Provenance> provenance;
};

/// Rewrites the targeted layers. Throws InvalidArgument for malformed
/// directives (bad range, overlap, rank out of range) and DirectiveRejected
/// for DepthSep/Tucker/Tdw on layer 1 or for a layer that is already rewritten
/// (Tdw may rewrite a DepthSep layer).
///
/// With weights: Tucker targets are decomposed, Tdw targets over a DepthSep
/// layer keep the depthwise kernel and split the pointwise kernel by
/// truncated SVD, and DepthSep/Cdp targets get fresh seeded weights.
PlanResult apply_plan(const ArchSpec& arch, const ReplacementPlan& plan,
                      const std::optional<WeightStore>& weights = std::nullopt);

}  // namespace cdpkit
