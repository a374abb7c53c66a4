#include "cdpkit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdpkit/errors.hpp"

namespace cdpkit {

namespace {

std::string dims_string(const Shape& dims) {
  std::string out = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

void require_kind(const LayerSpec& spec, LayerKind kind, const char* op) {
  if (spec.kind != kind) {
    throw InvalidArgument(std::string(op) + ": layer kind is " + std::string(to_string(spec.kind)));
  }
}

void require_channels(const FeatureMap& x, const LayerSpec& spec) {
  if (x.channels() != spec.in_channels) {
    throw InvalidArgument("input has " + std::to_string(x.channels()) +
                          " channels, layer expects " + std::to_string(spec.in_channels));
  }
}

const Tensor& role(const LayerWeights& w, const std::string& name) {
  auto it = w.find(name);
  if (it == w.end()) throw WeightMismatch("missing weight role '" + name + "'");
  return it->second;
}

void finish(const LayerSpec& spec, FeatureMap& y) { kernels::apply(spec.activation, y); }

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Standard: return "standard";
    case LayerKind::DepthSep: return "depthsep";
    case LayerKind::Tucker2: return "tucker";
    case LayerKind::Tdw: return "tdw";
    case LayerKind::Cdp: return "cdp";
  }
  return "unknown";
}

std::string_view to_string(Activation act) {
  return act == Activation::ReLU ? "relu" : "none";
}

LayerKind parse_layer_kind(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "standard" || t == "conv") return LayerKind::Standard;
  if (t == "depthsep") return LayerKind::DepthSep;
  if (t == "tucker" || t == "tucker2") return LayerKind::Tucker2;
  if (t == "tdw") return LayerKind::Tdw;
  if (t == "cdp") return LayerKind::Cdp;
  throw InvalidArgument("unknown layer kind '" + std::string(text) + "'");
}

Activation parse_activation(std::string_view text) {
  if (text == "none" || text.empty()) return Activation::None;
  if (text == "relu") return Activation::ReLU;
  throw InvalidArgument("unknown activation '" + std::string(text) + "'");
}

void LayerSpec::validate() const {
  if (kernel == 0 || in_channels == 0 || out_channels == 0 || stride == 0) {
    throw InvalidArgument("kernel size, channels and stride must be positive");
  }
  if (width_multiplier == 0) throw InvalidArgument("width multiplier must be positive");
  switch (kind) {
    case LayerKind::Standard:
      break;
    case LayerKind::DepthSep:
      break;
    case LayerKind::Tucker2:
      if (rank_in < 1 || rank_in > in_channels) {
        throw InvalidArgument("tucker rank R1=" + std::to_string(rank_in) + " outside [1, " +
                              std::to_string(in_channels) + "]");
      }
      if (rank_out < 1 || rank_out > out_channels) {
        throw InvalidArgument("tucker rank R2=" + std::to_string(rank_out) + " outside [1, " +
                              std::to_string(out_channels) + "]");
      }
      break;
    case LayerKind::Tdw: {
      const auto limit = std::max(expanded_channels(), out_channels);
      if (bottleneck_rank < 1 || bottleneck_rank > limit) {
        throw InvalidArgument("bottleneck rank R=" + std::to_string(bottleneck_rank) +
                              " outside [1, " + std::to_string(limit) + "]");
      }
      break;
    }
    case LayerKind::Cdp:
      if (alpha > in_channels) {
        throw InvalidArgument("cdp offset alpha=" + std::to_string(alpha) + " exceeds C=" +
                              std::to_string(in_channels));
      }
      break;
  }
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  const auto padded = static_cast<long long>(in + 2 * padding);
  const auto span = padded - static_cast<long long>(kernel);
  if (span < 0 || stride == 0) {
    throw InvalidArgument("kernel " + std::to_string(kernel) + " does not fit input extent " +
                          std::to_string(in) + " with padding " + std::to_string(padding));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

std::map<std::string, Shape> weight_shapes(const LayerSpec& spec) {
  spec.validate();
  const auto K = spec.kernel;
  const auto C = spec.in_channels;
  const auto N = spec.out_channels;
  std::map<std::string, Shape> shapes;
  switch (spec.kind) {
    case LayerKind::Standard:
      shapes["kernel"] = {K, K, C, N};
      break;
    case LayerKind::DepthSep:
      shapes["depthwise"] = {K, K, spec.expanded_channels()};
      shapes["pointwise"] = {spec.expanded_channels(), N};
      break;
    case LayerKind::Tucker2:
      shapes["proj_in"] = {C, spec.rank_in};
      shapes["core"] = {K, K, spec.rank_in, spec.rank_out};
      shapes["proj_out"] = {spec.rank_out, N};
      break;
    case LayerKind::Tdw:
      shapes["depthwise"] = {K, K, spec.expanded_channels()};
      shapes["bottleneck_in"] = {spec.expanded_channels(), spec.bottleneck_rank};
      shapes["bottleneck_out"] = {spec.bottleneck_rank, N};
      break;
    case LayerKind::Cdp:
      if (spec.alpha > 0) shapes["conv"] = {K, K, spec.alpha, N};
      if (spec.alpha < C) shapes["depthwise"] = {K, K, C - spec.alpha};
      shapes["pointwise"] = {N + (C - spec.alpha), N};
      break;
  }
  return shapes;
}

std::size_t weight_element_count(const LayerWeights& weights) {
  std::size_t total = 0;
  for (const auto& [name, t] : weights) total += t.size();
  return total;
}

LayerWeights zero_weights(const LayerSpec& spec) {
  LayerWeights w;
  for (const auto& [name, dims] : weight_shapes(spec)) w.emplace(name, Tensor(dims));
  return w;
}

void check_weights(const LayerSpec& spec, const LayerWeights& weights) {
  const auto shapes = weight_shapes(spec);
  for (const auto& [name, dims] : shapes) {
    auto it = weights.find(name);
    if (it == weights.end()) throw WeightMismatch("missing weight role '" + name + "'");
    if (it->second.dims() != dims) {
      throw WeightMismatch("weight '" + name + "' has dims " + dims_string(it->second.dims()) +
                           ", expected " + dims_string(dims));
    }
  }
  for (const auto& [name, t] : weights) {
    if (!shapes.contains(name)) throw WeightMismatch("unexpected weight role '" + name + "'");
  }
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels)
    : data_({height, width, channels}) {}

FeatureMap::FeatureMap(Tensor data) : data_(std::move(data)) {
  if (data_.rank() != 3) throw InvalidArgument("feature map tensor must be [H, W, C]");
}

namespace kernels {

FeatureMap conv(const FeatureMap& x, const Tensor& kernel, std::size_t stride,
                std::size_t padding, std::size_t first_channel) {
  const std::size_t K = kernel.dim(0);
  const std::size_t C = kernel.dim(2);
  const std::size_t N = kernel.dim(3);
  if (first_channel + C > x.channels()) throw InvalidArgument("conv: channel range exceeds input");
  const std::size_t oh = conv_output_extent(x.height(), K, stride, padding);
  const std::size_t ow = conv_output_extent(x.width(), K, stride, padding);
  FeatureMap y(oh, ow, N);
  const auto k = kernel.data();
  std::vector<double> acc(N);
  for (std::size_t h = 0; h < oh; ++h) {
    for (std::size_t w = 0; w < ow; ++w) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t k1 = 0; k1 < K; ++k1) {
        const auto ih = static_cast<long long>(h * stride + k1) - static_cast<long long>(padding);
        if (ih < 0 || ih >= static_cast<long long>(x.height())) continue;
        for (std::size_t k2 = 0; k2 < K; ++k2) {
          const auto iw = static_cast<long long>(w * stride + k2) - static_cast<long long>(padding);
          if (iw < 0 || iw >= static_cast<long long>(x.width())) continue;
          for (std::size_t c = 0; c < C; ++c) {
            const double xv = x(std::size_t(ih), std::size_t(iw), first_channel + c);
            if (xv == 0.0) continue;
            const float* row = &k[((k1 * K + k2) * C + c) * N];
            for (std::size_t n = 0; n < N; ++n) acc[n] += xv * row[n];
          }
        }
      }
      for (std::size_t n = 0; n < N; ++n) y(h, w, n) = static_cast<float>(acc[n]);
    }
  }
  return y;
}

FeatureMap depthwise(const FeatureMap& x, const Tensor& kernel, std::size_t multiplier,
                     std::size_t stride, std::size_t padding, std::size_t first_channel) {
  const std::size_t K = kernel.dim(0);
  const std::size_t maps = kernel.dim(2);
  if (multiplier == 0 || maps % multiplier != 0) {
    throw InvalidArgument("depthwise: map count not divisible by width multiplier");
  }
  const std::size_t C = maps / multiplier;
  if (first_channel + C > x.channels()) {
    throw InvalidArgument("depthwise: channel range exceeds input");
  }
  const std::size_t oh = conv_output_extent(x.height(), K, stride, padding);
  const std::size_t ow = conv_output_extent(x.width(), K, stride, padding);
  FeatureMap y(oh, ow, maps);
  for (std::size_t h = 0; h < oh; ++h) {
    for (std::size_t w = 0; w < ow; ++w) {
      for (std::size_t m = 0; m < maps; ++m) {
        const std::size_t c = first_channel + m / multiplier;
        double acc = 0.0;
        for (std::size_t k1 = 0; k1 < K; ++k1) {
          const auto ih = static_cast<long long>(h * stride + k1) - static_cast<long long>(padding);
          if (ih < 0 || ih >= static_cast<long long>(x.height())) continue;
          for (std::size_t k2 = 0; k2 < K; ++k2) {
            const auto iw =
                static_cast<long long>(w * stride + k2) - static_cast<long long>(padding);
            if (iw < 0 || iw >= static_cast<long long>(x.width())) continue;
            acc += double(x(std::size_t(ih), std::size_t(iw), c)) * kernel.at(k1, k2, m);
          }
        }
        y(h, w, m) = static_cast<float>(acc);
      }
    }
  }
  return y;
}

FeatureMap pointwise(const FeatureMap& x, const Tensor& matrix) {
  const std::size_t C = matrix.dim(0);
  const std::size_t N = matrix.dim(1);
  if (x.channels() != C) {
    throw InvalidArgument("pointwise: input has " + std::to_string(x.channels()) +
                          " channels, matrix expects " + std::to_string(C));
  }
  FeatureMap y(x.height(), x.width(), N);
  const auto m = matrix.data();
  std::vector<double> acc(N);
  for (std::size_t h = 0; h < x.height(); ++h) {
    for (std::size_t w = 0; w < x.width(); ++w) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        const double xv = x(h, w, c);
        if (xv == 0.0) continue;
        for (std::size_t n = 0; n < N; ++n) acc[n] += xv * m[c * N + n];
      }
      for (std::size_t n = 0; n < N; ++n) y(h, w, n) = static_cast<float>(acc[n]);
    }
  }
  return y;
}

void apply(Activation act, FeatureMap& x) {
  if (act != Activation::ReLU) return;
  for (auto& v : x.tensor().data()) v = std::max(v, 0.0f);
}

}  // namespace kernels

FeatureMap conv2d_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  require_kind(spec, LayerKind::Standard, "conv2d_forward");
  require_channels(x, spec);
  check_weights(spec, w);
  auto y = kernels::conv(x, role(w, "kernel"), spec.stride, spec.padding);
  finish(spec, y);
  return y;
}

FeatureMap depthsep_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  require_kind(spec, LayerKind::DepthSep, "depthsep_forward");
  require_channels(x, spec);
  check_weights(spec, w);
  auto d = kernels::depthwise(x, role(w, "depthwise"), spec.width_multiplier, spec.stride,
                              spec.padding);
  kernels::apply(spec.inner_activation, d);
  auto y = kernels::pointwise(d, role(w, "pointwise"));
  finish(spec, y);
  return y;
}

FeatureMap tucker2_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  require_kind(spec, LayerKind::Tucker2, "tucker2_forward");
  require_channels(x, spec);
  check_weights(spec, w);
  auto projected = kernels::pointwise(x, role(w, "proj_in"));
  auto core = kernels::conv(projected, role(w, "core"), spec.stride, spec.padding);
  auto y = kernels::pointwise(core, role(w, "proj_out"));
  finish(spec, y);
  return y;
}

FeatureMap tdw_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  require_kind(spec, LayerKind::Tdw, "tdw_forward");
  require_channels(x, spec);
  check_weights(spec, w);
  auto d = kernels::depthwise(x, role(w, "depthwise"), spec.width_multiplier, spec.stride,
                              spec.padding);
  kernels::apply(spec.inner_activation, d);
  auto bottleneck = kernels::pointwise(d, role(w, "bottleneck_in"));
  auto y = kernels::pointwise(bottleneck, role(w, "bottleneck_out"));
  finish(spec, y);
  return y;
}

FeatureMap cdp_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  require_kind(spec, LayerKind::Cdp, "cdp_forward");
  spec.validate();
  require_channels(x, spec);
  check_weights(spec, w);
  const std::size_t C = spec.in_channels;
  const std::size_t N = spec.out_channels;
  const std::size_t alpha = spec.alpha;
  const std::size_t oh = conv_output_extent(x.height(), spec.kernel, spec.stride, spec.padding);
  const std::size_t ow = conv_output_extent(x.width(), spec.kernel, spec.stride, spec.padding);

  // Concatenation: conv branch maps [0, N), depthwise branch maps [N, N + C - alpha).
  FeatureMap joined(oh, ow, N + (C - alpha));
  if (alpha > 0) {
    const auto conv = kernels::conv(x, role(w, "conv"), spec.stride, spec.padding, 0);
    for (std::size_t h = 0; h < oh; ++h)
      for (std::size_t v = 0; v < ow; ++v)
        for (std::size_t n = 0; n < N; ++n) joined(h, v, n) = conv(h, v, n);
  }
  if (alpha < C) {
    const auto dw =
        kernels::depthwise(x, role(w, "depthwise"), 1, spec.stride, spec.padding, alpha);
    for (std::size_t h = 0; h < oh; ++h)
      for (std::size_t v = 0; v < ow; ++v)
        for (std::size_t m = 0; m < C - alpha; ++m) joined(h, v, N + m) = dw(h, v, m);
  }
  kernels::apply(spec.inner_activation, joined);
  auto y = kernels::pointwise(joined, role(w, "pointwise"));
  finish(spec, y);
  return y;
}

FeatureMap layer_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  switch (spec.kind) {
    case LayerKind::Standard: return conv2d_forward(x, spec, w);
    case LayerKind::DepthSep: return depthsep_forward(x, spec, w);
    case LayerKind::Tucker2: return tucker2_forward(x, spec, w);
    case LayerKind::Tdw: return tdw_forward(x, spec, w);
    case LayerKind::Cdp: return cdp_forward(x, spec, w);
  }
  throw InvalidArgument("unknown layer kind");
}

FeatureMap max_pool2x2(const FeatureMap& x) {
  if (x.height() < 2 || x.width() < 2) throw InvalidArgument("max_pool2x2: input smaller than 2x2");
  FeatureMap y(x.height() / 2, x.width() / 2, x.channels());
  for (std::size_t h = 0; h < y.height(); ++h)
    for (std::size_t w = 0; w < y.width(); ++w)
      for (std::size_t c = 0; c < x.channels(); ++c) {
        y(h, w, c) = std::max({x(2 * h, 2 * w, c), x(2 * h + 1, 2 * w, c), x(2 * h, 2 * w + 1, c),
                               x(2 * h + 1, 2 * w + 1, c)});
      }
  return y;
}

FeatureMap batch_norm(const FeatureMap& x, std::span<const float> mean,
                      std::span<const float> variance, float epsilon) {
  if (mean.size() != x.channels() || variance.size() != x.channels()) {
    throw InvalidArgument("batch_norm: statistics length differs from channel count");
  }
  FeatureMap y = x;
  for (std::size_t h = 0; h < x.height(); ++h)
    for (std::size_t w = 0; w < x.width(); ++w)
      for (std::size_t c = 0; c < x.channels(); ++c)
        y(h, w, c) = (x(h, w, c) - mean[c]) / std::sqrt(variance[c] + epsilon);
  return y;
}

}  // namespace cdpkit
