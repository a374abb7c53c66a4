#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cdpkit/factorize.hpp"
#include "cdpkit/layers.hpp"
#include "cdpkit/tensor.hpp"

namespace cdpkit::fixtures {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  float normal(float sigma = 1.0f) { return std::normal_distribution<float>(0.0f, sigma)(engine_); }
  bool coin() { return integer(0, 1) == 1; }

  Tensor tensor(Shape dims, float sigma = 1.0f) {
    Tensor t(std::move(dims));
    for (auto& v : t.data()) v = normal(sigma);
    return t;
  }
  Matrix matrix(std::size_t rows, std::size_t cols, float sigma = 1.0f) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = normal(sigma);
    return m;
  }
  Matrix orthonormal_columns(std::size_t rows, std::size_t cols);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Modified Gram-Schmidt on a random Gaussian matrix, in double.
inline Matrix Rng::orthonormal_columns(std::size_t rows, std::size_t cols) {
  std::vector<std::vector<double>> q(cols, std::vector<double>(rows));
  for (auto& col : q)
    for (auto& v : col) v = normal();
  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double dot = 0.0;
        for (std::size_t r = 0; r < rows; ++r) dot += q[i][r] * q[j][r];
        for (std::size_t r = 0; r < rows; ++r) q[j][r] -= dot * q[i][r];
      }
    }
    double norm = 0.0;
    for (double v : q[j]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : q[j]) v /= norm;
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<float>(q[c][r]);
  return m;
}

inline FeatureMap random_map(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  return FeatureMap(rng.tensor({h, w, c}));
}

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (float v : t.data()) m = std::max(m, double(std::fabs(v)));
  return m;
}

/// Largest elementwise deviation scaled by the reference's largest magnitude.
inline double max_relative_error(const Tensor& actual, const Tensor& expected) {
  const double scale = std::max(max_abs(expected), 1e-30);
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double d = std::fabs(double(actual[i]) - double(expected[i]));
    if (!std::isfinite(d)) return INFINITY;
    worst = std::max(worst, d / scale);
  }
  return worst;
}

/// Direct summation references. Each output element is evaluated from its
/// defining sum with explicit zero padding; nothing is shared with the
/// library kernels.
namespace oracle {

inline double padded(const FeatureMap& x, long long h, long long w, std::size_t c) {
  if (h < 0 || w < 0 || h >= static_cast<long long>(x.height()) ||
      w >= static_cast<long long>(x.width()))
    return 0.0;
  return x(std::size_t(h), std::size_t(w), c);
}

inline std::size_t extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

inline double relu(double v, Activation act) {
  return act == Activation::ReLU ? std::max(v, 0.0) : v;
}

inline long long tap(std::size_t out, std::size_t k, const LayerSpec& spec) {
  return static_cast<long long>(out * spec.stride + k) - static_cast<long long>(spec.padding);
}

// Depthwise response of input channel c under filter map m at output (h, w).
inline double depthwise_at(const FeatureMap& x, const Tensor& dw, std::size_t c, std::size_t m,
                           std::size_t h, std::size_t w, const LayerSpec& spec) {
  double acc = 0.0;
  for (std::size_t a = 0; a < spec.kernel; ++a)
    for (std::size_t b = 0; b < spec.kernel; ++b)
      acc += padded(x, tap(h, a, spec), tap(w, b, spec), c) * dw.at(a, b, m);
  return acc;
}

inline double conv_at(const FeatureMap& x, const Tensor& kernel, std::size_t c0, std::size_t cn,
                      std::size_t n, std::size_t h, std::size_t w, const LayerSpec& spec) {
  double acc = 0.0;
  for (std::size_t a = 0; a < spec.kernel; ++a)
    for (std::size_t b = 0; b < spec.kernel; ++b)
      for (std::size_t c = 0; c < cn; ++c)
        acc += padded(x, tap(h, a, spec), tap(w, b, spec), c0 + c) * kernel.at(a, b, c, n);
  return acc;
}

inline FeatureMap output_for(const FeatureMap& x, const LayerSpec& spec) {
  return FeatureMap(extent(x.height(), spec.kernel, spec.stride, spec.padding),
                    extent(x.width(), spec.kernel, spec.stride, spec.padding), spec.out_channels);
}

inline FeatureMap conv(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  auto y = output_for(x, spec);
  const auto& k = w.at("kernel");
  for (std::size_t h = 0; h < y.height(); ++h)
    for (std::size_t v = 0; v < y.width(); ++v)
      for (std::size_t n = 0; n < spec.out_channels; ++n)
        y(h, v, n) = float(relu(conv_at(x, k, 0, spec.in_channels, n, h, v, spec), spec.activation));
  return y;
}

inline FeatureMap depthsep(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  auto y = output_for(x, spec);
  const auto& dw = w.at("depthwise");
  const auto& pw = w.at("pointwise");
  const std::size_t t = spec.width_multiplier;
  for (std::size_t h = 0; h < y.height(); ++h)
    for (std::size_t v = 0; v < y.width(); ++v)
      for (std::size_t n = 0; n < spec.out_channels; ++n) {
        double acc = 0.0;
        for (std::size_t m = 0; m < spec.in_channels * t; ++m)
          acc += relu(depthwise_at(x, dw, m / t, m, h, v, spec), spec.inner_activation) *
                 pw.at(m, n);
        y(h, v, n) = float(relu(acc, spec.activation));
      }
  return y;
}

inline FeatureMap tucker2(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  auto y = output_for(x, spec);
  const auto& pin = w.at("proj_in");
  const auto& core = w.at("core");
  const auto& pout = w.at("proj_out");
  for (std::size_t h = 0; h < y.height(); ++h)
    for (std::size_t v = 0; v < y.width(); ++v)
      for (std::size_t n = 0; n < spec.out_channels; ++n) {
        double acc = 0.0;
        for (std::size_t a = 0; a < spec.kernel; ++a)
          for (std::size_t b = 0; b < spec.kernel; ++b)
            for (std::size_t c = 0; c < spec.in_channels; ++c) {
              const double xv = padded(x, tap(h, a, spec), tap(v, b, spec), c);
              if (xv == 0.0) continue;
              for (std::size_t r1 = 0; r1 < spec.rank_in; ++r1)
                for (std::size_t r2 = 0; r2 < spec.rank_out; ++r2)
                  acc += xv * pin.at(c, r1) * core.at(a, b, r1, r2) * pout.at(r2, n);
            }
        y(h, v, n) = float(relu(acc, spec.activation));
      }
  return y;
}

inline FeatureMap tdw(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  auto y = output_for(x, spec);
  const auto& dw = w.at("depthwise");
  const auto& b1 = w.at("bottleneck_in");
  const auto& b2 = w.at("bottleneck_out");
  const std::size_t t = spec.width_multiplier;
  for (std::size_t h = 0; h < y.height(); ++h)
    for (std::size_t v = 0; v < y.width(); ++v)
      for (std::size_t n = 0; n < spec.out_channels; ++n) {
        double acc = 0.0;
        for (std::size_t m = 0; m < spec.in_channels * t; ++m) {
          const double d = relu(depthwise_at(x, dw, m / t, m, h, v, spec), spec.inner_activation);
          for (std::size_t r = 0; r < spec.bottleneck_rank; ++r) acc += d * b1.at(m, r) * b2.at(r, n);
        }
        y(h, v, n) = float(relu(acc, spec.activation));
      }
  return y;
}

inline FeatureMap cdp(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  auto y = output_for(x, spec);
  const auto& pw = w.at("pointwise");
  const std::size_t N = spec.out_channels;
  const std::size_t a = spec.alpha;
  for (std::size_t h = 0; h < y.height(); ++h)
    for (std::size_t v = 0; v < y.width(); ++v)
      for (std::size_t n = 0; n < N; ++n) {
        double acc = 0.0;
        if (a > 0) {
          for (std::size_t j = 0; j < N; ++j)
            acc += relu(conv_at(x, w.at("conv"), 0, a, j, h, v, spec), spec.inner_activation) *
                   pw.at(j, n);
        }
        for (std::size_t c = a; c < spec.in_channels; ++c)
          acc += relu(depthwise_at(x, w.at("depthwise"), c, c - a, h, v, spec),
                      spec.inner_activation) *
                 pw.at(N + c - a, n);
        y(h, v, n) = float(relu(acc, spec.activation));
      }
  return y;
}

inline FeatureMap forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w) {
  switch (spec.kind) {
    case LayerKind::Standard: return conv(x, spec, w);
    case LayerKind::DepthSep: return depthsep(x, spec, w);
    case LayerKind::Tucker2: return tucker2(x, spec, w);
    case LayerKind::Tdw: return tdw(x, spec, w);
    case LayerKind::Cdp: return cdp(x, spec, w);
  }
  return x;
}

}  // namespace oracle

/// Random layer of the given kind small enough for the direct-summation
/// oracles (spatial <= 12, channels <= 16).
struct SmallCase {
  LayerSpec spec;
  LayerWeights weights;
  FeatureMap input;
};

inline SmallCase small_case(Rng& rng, LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  s.kernel = rng.integer(1, 4);
  s.in_channels = rng.integer(1, 16);
  s.out_channels = rng.integer(1, 16);
  s.stride = rng.integer(1, 2);
  s.padding = rng.integer(0, s.kernel / 2 + 1);
  s.activation = rng.coin() ? Activation::ReLU : Activation::None;
  switch (kind) {
    case LayerKind::Standard: break;
    case LayerKind::DepthSep:
      s.width_multiplier = rng.integer(1, 3);
      s.inner_activation = rng.coin() ? Activation::ReLU : Activation::None;
      break;
    case LayerKind::Tucker2:
      s.rank_in = rng.integer(1, s.in_channels);
      s.rank_out = rng.integer(1, s.out_channels);
      break;
    case LayerKind::Tdw:
      s.width_multiplier = rng.integer(1, 2);
      s.bottleneck_rank = rng.integer(1, std::max(s.in_channels * s.width_multiplier, s.out_channels));
      s.inner_activation = rng.coin() ? Activation::ReLU : Activation::None;
      break;
    case LayerKind::Cdp:
      s.alpha = rng.integer(0, s.in_channels);
      s.inner_activation = rng.coin() ? Activation::ReLU : Activation::None;
      break;
  }
  LayerWeights w;
  for (const auto& [role, shape] : weight_shapes(s)) w[role] = rng.tensor(shape);
  const std::size_t size = rng.integer(std::max<std::size_t>(s.kernel, 1), 12);
  const std::size_t width = rng.integer(std::max<std::size_t>(s.kernel, 1), 12);
  return {s, w, random_map(rng, size, width, s.in_channels)};
}

}  // namespace cdpkit::fixtures
