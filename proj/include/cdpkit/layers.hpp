#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cdpkit/tensor.hpp"

namespace cdpkit {

enum class LayerKind { Standard, DepthSep, Tucker2, Tdw, Cdp };
enum class Activation { None, ReLU };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);
LayerKind parse_layer_kind(std::string_view text);
Activation parse_activation(std::string_view text);

/// Structural description of one convolutional layer.
///
/// `activation` is applied to the layer output. `inner_activation` is the
/// non-linearity at the internal junction of factorized layers: after the
/// depthwise stage (DepthSep, Tdw) or after each CDP branch before the
/// concatenation. Tucker2 has no junction; its stages stay linear.
struct LayerSpec {
  LayerKind kind = LayerKind::Standard;
  std::size_t kernel = 3;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t alpha = 0;             // Cdp: input channels routed to the full conv
  std::size_t width_multiplier = 1;  // DepthSep/Tdw: depthwise maps per input channel
  std::size_t rank_in = 0;           // Tucker2 R1
  std::size_t rank_out = 0;          // Tucker2 R2
  std::size_t bottleneck_rank = 0;   // Tdw R
  Activation activation = Activation::None;
  Activation inner_activation = Activation::None;
  std::string group;  // free-form tag, e.g. "backbone" / "head"

  /// Channels produced by the depthwise stage (C * t).
  std::size_t expanded_channels() const { return in_channels * width_multiplier; }

  /// Throws InvalidArgument when the kind-specific invariants do not hold.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output extent along one spatial axis: floor((in + 2p - K) / s) + 1.
/// Throws InvalidArgument when the result would be < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

/// Weight tensors keyed by role. Roles per kind:
///   Standard: kernel [K,K,C,N]
///   DepthSep: depthwise [K,K,C*t], pointwise [C*t,N]
///   Tucker2:  proj_in [C,R1], core [K,K,R1,R2], proj_out [R2,N]
///   Tdw:      depthwise [K,K,C*t], bottleneck_in [C*t,R], bottleneck_out [R,N]
///   Cdp:      conv [K,K,alpha,N], depthwise [K,K,C-alpha], pointwise [N+C-alpha,N]
/// Cdp roles whose channel count is zero (conv at alpha=0, depthwise at
/// alpha=C) are absent.
using LayerWeights = std::map<std::string, Tensor>;

std::map<std::string, Shape> weight_shapes(const LayerSpec& spec);
std::size_t weight_element_count(const LayerWeights& weights);
LayerWeights zero_weights(const LayerSpec& spec);
/// Throws WeightMismatch naming the first role that is missing or mis-shaped.
void check_weights(const LayerSpec& spec, const LayerWeights& weights);

/// Feature map stored as a [H, W, C] tensor.
class FeatureMap {
 public:
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels);
  explicit FeatureMap(Tensor data);

  std::size_t height() const { return data_.dim(0); }
  std::size_t width() const { return data_.dim(1); }
  std::size_t channels() const { return data_.dim(2); }

  const Tensor& tensor() const noexcept { return data_; }
  Tensor& tensor() noexcept { return data_; }

  float operator()(std::size_t h, std::size_t w, std::size_t c) const { return data_.at(h, w, c); }
  float& operator()(std::size_t h, std::size_t w, std::size_t c) { return data_.at(h, w, c); }

 private:
  Tensor data_;
};

FeatureMap conv2d_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w);
FeatureMap depthsep_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w);
FeatureMap tucker2_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w);
FeatureMap tdw_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w);
FeatureMap cdp_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w);

/// Dispatches on spec.kind.
FeatureMap layer_forward(const FeatureMap& x, const LayerSpec& spec, const LayerWeights& w);

/// 2x2 stride-2 max pooling (odd trailing rows/columns dropped).
FeatureMap max_pool2x2(const FeatureMap& x);

/// Inference-mode per-channel normalization with caller statistics.
/// Not part of any parameter or FLOP count.
FeatureMap batch_norm(const FeatureMap& x, std::span<const float> mean,
                      std::span<const float> variance, float epsilon = 1e-5f);

namespace kernels {

// Stage primitives shared by the layer forwards and the factorization code.
FeatureMap conv(const FeatureMap& x, const Tensor& kernel, std::size_t stride,
                std::size_t padding, std::size_t first_channel = 0);
FeatureMap depthwise(const FeatureMap& x, const Tensor& kernel, std::size_t multiplier,
                     std::size_t stride, std::size_t padding, std::size_t first_channel = 0);
FeatureMap pointwise(const FeatureMap& x, const Tensor& matrix);
void apply(Activation act, FeatureMap& x);

}  // namespace kernels

}  // namespace cdpkit
