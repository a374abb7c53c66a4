#include "cdpkit/arch.hpp"

#include <string>

#include "cdpkit/errors.hpp"

namespace cdpkit {

namespace {

LayerSpec conv(std::size_t k, std::size_t c, std::size_t n, std::size_t stride, std::size_t pad,
               Activation act, std::string group = {}) {
  LayerSpec s;
  s.kind = LayerKind::Standard;
  s.kernel = k;
  s.in_channels = c;
  s.out_channels = n;
  s.stride = stride;
  s.padding = pad;
  s.activation = act;
  s.group = std::move(group);
  return s;
}

std::string at_layer(std::size_t index, const std::string& what) {
  return "layer " + std::to_string(index) + ": " + what;
}

}  // namespace

void ArchSpec::validate() const {
  if (layers.empty()) throw InvalidArgument("architecture '" + name + "' has no layers");
  if (input.width == 0 || input.height == 0 || input.channels == 0) {
    throw InvalidArgument("architecture input dimensions must be positive");
  }
  for (auto p : pools) {
    if (p < 1 || p > layers.size()) {
      throw InvalidArgument("pool marker " + std::to_string(p) + " does not name a layer");
    }
  }
  std::size_t channels = input.channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    try {
      layer.validate();
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(at_layer(i + 1, e.what()));
    }
    if (layer.in_channels != channels) {
      throw InvalidArgument(at_layer(i + 1, "expects " + std::to_string(layer.in_channels) +
                                                " input channels, previous layer produces " +
                                                std::to_string(channels)));
    }
    channels = layer.out_channels;
  }
  propagate_shapes(*this);
}

std::vector<LayerGeometry> propagate_shapes(const ArchSpec& arch) {
  std::vector<LayerGeometry> out;
  std::size_t h = arch.input.height;
  std::size_t w = arch.input.width;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& layer = arch.layers[i];
    LayerGeometry g;
    g.in_height = h;
    g.in_width = w;
    try {
      g.out_height = conv_output_extent(h, layer.kernel, layer.stride, layer.padding);
      g.out_width = conv_output_extent(w, layer.kernel, layer.stride, layer.padding);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(at_layer(i + 1, e.what()));
    }
    out.push_back(g);
    h = g.out_height;
    w = g.out_width;
    if (arch.pools.contains(i + 1)) {
      if (h < 2 || w < 2) throw InvalidArgument(at_layer(i + 1, "pooling a map smaller than 2x2"));
      h /= 2;
      w /= 2;
    }
  }
  return out;
}

Shape output_shape(const ArchSpec& arch) {
  arch.validate();
  const auto geometry = propagate_shapes(arch);
  std::size_t h = geometry.back().out_height;
  std::size_t w = geometry.back().out_width;
  if (arch.pools.contains(arch.layers.size())) {
    h /= 2;
    w /= 2;
  }
  return {h, w, arch.layers.back().out_channels};
}

ArchSpec l2net_spec() {
  ArchSpec a;
  a.name = "l2net";
  a.input = {32, 32, 1};
  const auto relu = Activation::ReLU;
  a.layers = {
      conv(3, 1, 32, 1, 1, relu),    conv(3, 32, 32, 1, 1, relu),
      conv(3, 32, 64, 2, 1, relu),   conv(3, 64, 64, 1, 1, relu),
      conv(3, 64, 128, 2, 1, relu),  conv(3, 128, 128, 1, 1, relu),
      conv(8, 128, 128, 1, 0, Activation::None),
  };
  return a;
}

ArchSpec superpoint_spec() {
  ArchSpec a;
  a.name = "superpoint";
  a.input = {320, 240, 3};
  const auto relu = Activation::ReLU;
  const std::string bb = "backbone";
  const std::string head = "head";
  a.layers = {
      conv(3, 3, 64, 1, 1, relu, bb),      conv(3, 64, 64, 1, 1, relu, bb),
      conv(3, 64, 64, 1, 1, relu, bb),     conv(3, 64, 64, 1, 1, relu, bb),
      conv(3, 64, 128, 1, 1, relu, bb),    conv(3, 128, 128, 1, 1, relu, bb),
      conv(3, 128, 128, 1, 1, relu, bb),   conv(3, 128, 128, 1, 1, relu, bb),
      conv(3, 128, 256, 1, 1, relu, head), conv(1, 256, 65, 1, 0, Activation::None, head),
  };
  a.pools = {2, 4, 6};
  return a;
}

bool is_builtin_arch(const std::string& name) { return name == "l2net" || name == "superpoint"; }

ArchSpec builtin_arch(const std::string& name) {
  if (name == "l2net") return l2net_spec();
  if (name == "superpoint") return superpoint_spec();
  throw InvalidArgument("no built-in architecture named '" + name + "'");
}

FeatureMap model_forward(const FeatureMap& x, const ArchSpec& arch,
                         const std::vector<LayerWeights>& weights) {
  arch.validate();
  if (weights.size() != arch.layers.size()) {
    throw InvalidArgument("model_forward: " + std::to_string(weights.size()) +
                          " weight sets for " + std::to_string(arch.layers.size()) + " layers");
  }
  if (x.channels() != arch.input.channels) {
    throw InvalidArgument("model_forward: input has " + std::to_string(x.channels()) +
                          " channels, architecture expects " +
                          std::to_string(arch.input.channels));
  }
  FeatureMap y = x;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    try {
      y = layer_forward(y, arch.layers[i], weights[i]);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(at_layer(i + 1, e.what()));
    } catch (const WeightMismatch& e) {
      throw WeightMismatch(at_layer(i + 1, e.what()));
    }
    if (arch.pools.contains(i + 1)) y = max_pool2x2(y);
  }
  return y;
}

}  // namespace cdpkit
