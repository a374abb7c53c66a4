#include "cdpkit/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cdpkit/factorize.hpp"

namespace cdpkit {

namespace {

FeatureMap probe_input(std::size_t height, std::size_t width, std::size_t channels,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  FeatureMap x(height, width, channels);
  for (auto& v : x.tensor().data()) v = dist(rng);
  return x;
}

CheckResult compare(std::size_t layer, std::string name, const FeatureMap& actual,
                    const FeatureMap& expected, double tolerance) {
  CheckResult r;
  r.layer = layer;
  r.name = std::move(name);
  r.error = relative_error(actual.tensor().data(), expected.tensor().data());
  r.passed = std::isfinite(r.error) && r.error <= tolerance;
  return r;
}

CheckResult failed(std::size_t layer, std::string name, std::string detail) {
  CheckResult r;
  r.layer = layer;
  r.name = std::move(name);
  r.error = std::numeric_limits<double>::infinity();
  r.detail = std::move(detail);
  return r;
}

LayerSpec linear(LayerSpec spec) {
  spec.activation = Activation::None;
  spec.inner_activation = Activation::None;
  return spec;
}

LayerSpec as_standard(const LayerSpec& spec) {
  LayerSpec s;
  s.kernel = spec.kernel;
  s.in_channels = spec.in_channels;
  s.out_channels = spec.out_channels;
  s.stride = spec.stride;
  s.padding = spec.padding;
  return s;
}

Tensor pointwise_rows(const Tensor& pw, std::size_t first, std::size_t count) {
  const std::size_t n = pw.dim(1);
  Tensor out({count, n});
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) = pw.at(first + r, c);
  return out;
}

void cdp_degenerate_checks(std::size_t layer, const LayerSpec& spec, const FeatureMap& x,
                           std::uint64_t seed, double tolerance,
                           std::vector<CheckResult>& out) {
  const std::size_t c = spec.in_channels;
  const std::size_t n = spec.out_channels;

  LayerSpec zero = linear(spec);
  zero.alpha = 0;
  const auto wz = random_layer_weights(zero, seed);
  LayerSpec ds = as_standard(spec);
  ds.kind = LayerKind::DepthSep;
  const auto ref0 = depthsep_forward(
      x, ds, {{"depthwise", wz.at("depthwise")}, {"pointwise", pointwise_rows(wz.at("pointwise"), n, c)}});
  out.push_back(compare(layer, "cdp-alpha0", cdp_forward(x, zero, wz), ref0, tolerance));

  LayerSpec full = linear(spec);
  full.alpha = c;
  const auto wf = random_layer_weights(full, seed + 1);
  const auto refc = kernels::pointwise(
      kernels::conv(x, wf.at("conv"), spec.stride, spec.padding), wf.at("pointwise"));
  out.push_back(compare(layer, "cdp-alphaC", cdp_forward(x, full, wf), refc, tolerance));
}

void layer_checks(std::size_t layer, const LayerSpec& spec, const LayerWeights& w,
                  const FeatureMap& x, std::uint64_t seed, double tolerance,
                  std::vector<CheckResult>& out) {
  bool finite = true;
  std::string bad;
  for (const auto& [role, t] : w) {
    if (!t.all_finite()) {
      finite = false;
      bad = role;
      break;
    }
  }
  if (finite) {
    CheckResult r;
    r.layer = layer;
    r.name = "finite";
    r.passed = true;
    out.push_back(r);
  } else {
    out.push_back(failed(layer, "finite", "non-finite values in '" + bad + "'"));
  }

  const LayerSpec lin = linear(spec);
  const LayerSpec conv = as_standard(spec);
  switch (spec.kind) {
    case LayerKind::Standard: {
      const Tensor& kernel = w.at("kernel");
      if (!finite) {
        out.push_back(failed(layer, "tucker-full", "skipped: non-finite kernel"));
        break;
      }
      const auto f = hooi_tucker2(kernel, spec.in_channels, spec.out_channels);
      LayerSpec tk = conv;
      tk.kind = LayerKind::Tucker2;
      tk.rank_in = spec.in_channels;
      tk.rank_out = spec.out_channels;
      const LayerWeights tw{{"proj_in", f.proj_in.to_tensor()},
                            {"core", f.core},
                            {"proj_out", f.proj_out.to_tensor()}};
      out.push_back(compare(layer, "tucker-full", tucker2_forward(x, tk, tw),
                            conv2d_forward(x, conv, {{"kernel", kernel}}), tolerance));
      break;
    }
    case LayerKind::DepthSep:
      if (spec.width_multiplier == 1) {
        out.push_back(compare(layer, "merge", layer_forward(x, lin, w),
                              conv2d_forward(x, conv, {{"kernel", merge_depthsep(lin, w)}}),
                              tolerance));
        break;
      }
      [[fallthrough]];
    case LayerKind::Tucker2:
    case LayerKind::Tdw:
    case LayerKind::Cdp:
      out.push_back(compare(layer, "equivalent", layer_forward(x, lin, w),
                            conv2d_forward(x, conv, {{"kernel", equivalent_kernel(lin, w)}}),
                            tolerance));
      if (spec.kind == LayerKind::Cdp) cdp_degenerate_checks(layer, spec, x, seed, tolerance, out);
      break;
  }
}

}  // namespace

std::vector<CheckResult> verify_equivalences(const ArchSpec& arch, const WeightStore& weights,
                                             const VerifyOptions& options) {
  const auto per_layer = layer_weights(arch, weights);
  const auto geometry = propagate_shapes(arch);
  std::vector<CheckResult> results;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& spec = arch.layers[i];
    const std::size_t cap = std::max(options.max_extent, spec.kernel);
    const std::size_t h = std::min(geometry[i].in_height, cap);
    const std::size_t w = std::min(geometry[i].in_width, cap);
    const std::uint64_t seed = derive_seed(options.seed, i + 1);
    const auto x = probe_input(h, w, spec.in_channels, seed);
    layer_checks(i + 1, spec, per_layer[i], x, seed, options.tolerance, results);
  }
  return results;
}

}  // namespace cdpkit
