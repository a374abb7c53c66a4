#include "cdpkit/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cdpkit/errors.hpp"

namespace cdpkit {

namespace {

using u64 = std::uint64_t;

void require(const LayerSpec& spec, LayerKind kind) {
  if (spec.kind != kind) {
    throw InvalidArgument("cost function for " + std::string(to_string(kind)) +
                          " called with a " + std::string(to_string(spec.kind)) + " layer");
  }
}

}  // namespace

LayerCost conv_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h) {
  require(spec, LayerKind::Standard);
  const u64 k2 = u64(spec.kernel) * spec.kernel;
  const u64 params = k2 * spec.in_channels * spec.out_channels;
  return {params, u64(out_w) * out_h * params, 0};
}

LayerCost depthsep_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h) {
  require(spec, LayerKind::DepthSep);
  const u64 k2 = u64(spec.kernel) * spec.kernel;
  const u64 ct = spec.expanded_channels();
  const u64 depthwise = k2 * ct;
  const u64 pointwise = ct * spec.out_channels;
  const u64 area = u64(out_w) * out_h;
  return {depthwise + pointwise, area * depthwise + area * pointwise, 0};
}

LayerCost tucker2_cost(const LayerSpec& spec, std::size_t in_w, std::size_t in_h,
                       std::size_t out_w, std::size_t out_h) {
  require(spec, LayerKind::Tucker2);
  spec.validate();
  const u64 k2 = u64(spec.kernel) * spec.kernel;
  const u64 proj_in = u64(spec.in_channels) * spec.rank_in;
  const u64 core = k2 * spec.rank_in * spec.rank_out;
  const u64 proj_out = u64(spec.rank_out) * spec.out_channels;
  const u64 out_area = u64(out_w) * out_h;
  return {proj_in + core + proj_out,
          u64(in_w) * in_h * proj_in + out_area * core + out_area * proj_out, 0};
}

bool bottleneck_compresses(u64 in, u64 out, u64 rank) { return in * out > in * rank + rank * out; }

TdwCost tdw_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h) {
  require(spec, LayerKind::Tdw);
  spec.validate();
  const u64 k2 = u64(spec.kernel) * spec.kernel;
  const u64 ct = spec.expanded_channels();
  const u64 R = spec.bottleneck_rank;
  const u64 N = spec.out_channels;
  const u64 params = k2 * ct + ct * R + R * N;
  const u64 area = u64(out_w) * out_h;
  return {{params, area * params, 0}, bottleneck_compresses(ct, N, R)};
}

LayerCost cdp_cost(const LayerSpec& spec, std::size_t out_w, std::size_t out_h,
                   const CostPolicy& policy) {
  require(spec, LayerKind::Cdp);
  if (spec.alpha > spec.in_channels) {
    throw InvalidArgument("cdp offset alpha=" + std::to_string(spec.alpha) + " exceeds C=" +
                          std::to_string(spec.in_channels));
  }
  const u64 k2 = u64(spec.kernel) * spec.kernel;
  const u64 a = spec.alpha;
  const u64 C = spec.in_channels;
  const u64 N = spec.out_channels;
  const u64 joined = N + (C - a);
  const u64 params = k2 * a * N + k2 * (C - a) + joined * N;
  const u64 area = u64(out_w) * out_h;
  LayerCost cost{params, area * params, area * joined};
  if (policy.include_activations) cost.flops += cost.activation_flops;
  return cost;
}

LayerCost layer_cost(const LayerSpec& spec, const LayerGeometry& g, const CostPolicy& policy) {
  switch (spec.kind) {
    case LayerKind::Standard: return conv_cost(spec, g.out_width, g.out_height);
    case LayerKind::DepthSep: return depthsep_cost(spec, g.out_width, g.out_height);
    case LayerKind::Tucker2:
      return tucker2_cost(spec, g.in_width, g.in_height, g.out_width, g.out_height);
    case LayerKind::Tdw: return tdw_cost(spec, g.out_width, g.out_height).cost;
    case LayerKind::Cdp: return cdp_cost(spec, g.out_width, g.out_height, policy);
  }
  throw InvalidArgument("unknown layer kind");
}

AlphaBound alpha_bound(std::size_t K, std::size_t C, std::size_t N) {
  AlphaBound b;
  const double k2 = double(K) * double(K);
  const double n = double(N);
  const double c = double(C);
  // alpha * D < C * D - N^2 with D = K^2 (N - 1) - N.
  const long long D = static_cast<long long>(K * K) * (static_cast<long long>(N) - 1) -
                      static_cast<long long>(N);
  b.simplified = K > 1 ? c - n / (k2 - 1.0) : -std::numeric_limits<double>::infinity();
  if (D <= 0) {
    b.exact = -std::numeric_limits<double>::infinity();
    b.feasible = false;
    return b;
  }
  b.exact = c - (n * n) / double(D);
  const long long rhs = static_cast<long long>(C) * D - static_cast<long long>(N) * N;
  if (rhs <= 0) {
    b.feasible = false;
    return b;
  }
  // Largest alpha with alpha * D < rhs.
  const long long best = (rhs - 1) / D;
  b.max_alpha = static_cast<std::size_t>(std::min<long long>(best, static_cast<long long>(C)));
  b.feasible = true;
  return b;
}

CostReport model_cost(const ArchSpec& arch, const std::optional<ArchSpec>& baseline,
                      const CostPolicy& policy) {
  arch.validate();
  const auto geometry = propagate_shapes(arch);
  CostReport report;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    LayerCostEntry entry;
    entry.index = i + 1;
    entry.kind = arch.layers[i].kind;
    entry.geometry = geometry[i];
    entry.group = arch.layers[i].group;
    try {
      entry.cost = layer_cost(arch.layers[i], geometry[i], policy);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("layer " + std::to_string(i + 1) + ": " + e.what());
    }
    report.total_params += entry.cost.params;
    report.total_flops += entry.cost.flops;
    if (!entry.group.empty()) report.group_flops[entry.group] += entry.cost.flops;
    report.per_layer.push_back(std::move(entry));
  }
  if (baseline) {
    const auto base = model_cost(*baseline, std::nullopt, policy);
    report.compression_ratio = double(base.total_params) / double(report.total_params);
    report.speedup = double(base.total_flops) / double(report.total_flops);
  }
  return report;
}

}  // namespace cdpkit
