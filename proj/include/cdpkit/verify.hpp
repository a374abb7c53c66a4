#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdpkit/arch.hpp"
#include "cdpkit/weight_store.hpp"

namespace cdpkit {

struct VerifyOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  /// Spatial extent cap for the probe inputs (never below the kernel size).
  std::size_t max_extent = 12;
};

struct CheckResult {
  std::size_t layer = 0;  // 1-based
  std::string name;
  double error = 0.0;  ///< relative Frobenius error, inf when non-finite
  bool passed = false;
  std::string detail;
};

/// Equivalence battery over every layer of a network with its weights, on
/// seeded random probe inputs:
///   finite       all weight tensors finite
///   merge        DepthSep (t = 1): conv with the merged kernel vs the layer
///   equivalent   other factorized kinds: conv with the equivalent full kernel
///   cdp-alpha0 / cdp-alphaC   degenerate offsets of a CDP layer's shape
///   tucker-full  Standard: full-rank Tucker-2 of the kernel, tucker2_forward vs conv
/// Junction activations are disabled; the checks concern the linear maps.
/// Throws WeightMismatch when the store does not fit the architecture.
std::vector<CheckResult> verify_equivalences(const ArchSpec& arch, const WeightStore& weights,
                                             const VerifyOptions& options = {});

}  // namespace cdpkit
