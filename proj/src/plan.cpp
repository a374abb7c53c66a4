#include "cdpkit/plan.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "cdpkit/cost.hpp"
#include "cdpkit/errors.hpp"
#include "cdpkit/factorize.hpp"

namespace cdpkit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_uint(const std::string& s, const std::string& context) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ParseError("expected a non-negative integer in '" + context + "', got '" + s + "'");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

std::vector<std::size_t> parse_list(const std::string& s, const std::string& context) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(trim(item), context));
  if (out.empty()) throw ParseError("empty value in '" + context + "'");
  return out;
}

PlanValue parse_value(const std::string& value, const std::string& context) {
  PlanValue v;
  const auto at = value.find('@');
  if (at != std::string::npos) {
    v.scoped_value = parse_uint(value.substr(0, at), context);
    for (auto l : parse_list(value.substr(at + 1), context)) v.scoped_layers.insert(l);
    return v;
  }
  auto list = parse_list(value, context);
  if (list.size() == 1) {
    v.uniform = list.front();
  } else {
    v.per_layer = std::move(list);
  }
  return v;
}

// Splits at commas that start a new `kind:` directive.
std::vector<std::string> split_directives(const std::string& text) {
  static const std::regex next_directive(R"(^\s*[A-Za-z][A-Za-z0-9_]*\s*:)");
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != ',') continue;
    if (std::regex_search(text.begin() + static_cast<std::ptrdiff_t>(i) + 1, text.end(),
                          next_directive)) {
      out.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(text.substr(start));
  return out;
}

Directive parse_directive(const std::string& chunk) {
  Directive d;
  d.text = trim(chunk);
  const auto colon = d.text.find(':');
  if (colon == std::string::npos) {
    throw ParseError("directive '" + d.text + "' is missing 'kind:range'");
  }
  const std::string kind = trim(d.text.substr(0, colon));
  try {
    d.kind = parse_layer_kind(kind);
  } catch (const InvalidArgument&) {
    throw ParseError("unknown directive kind '" + kind + "'");
  }
  if (d.kind == LayerKind::Standard) throw ParseError("'standard' is not a replacement kind");

  std::stringstream rest(d.text.substr(colon + 1));
  std::string range;
  rest >> range;
  if (!range.empty() && range.back() == ',') range.pop_back();
  if (range.empty()) throw ParseError("directive '" + d.text + "' has no layer range");
  const auto dash = range.find('-');
  if (dash == std::string::npos) {
    d.first = d.last = parse_uint(range, d.text);
  } else {
    d.first = parse_uint(range.substr(0, dash), d.text);
    d.last = parse_uint(range.substr(dash + 1), d.text);
  }

  std::string token;
  while (rest >> token) {
    if (!token.empty() && token.back() == ',') token.pop_back();
    if (token.empty()) continue;
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + token + "'");
    std::string key = token.substr(0, eq);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    const std::string value = token.substr(eq + 1);
    if (key == "\xce\xb1") key = "alpha";
    if (key == "t") {
      d.t = parse_value(value, token);
    } else if (key == "alpha") {
      d.alpha = parse_value(value, token);
    } else if (key == "r") {
      if (value == "vbmf") {
        d.bottleneck_vbmf = true;
      } else {
        d.bottleneck = parse_value(value, token);
      }
    } else if (key == "ranks") {
      if (value == "vbmf") {
        d.ranks_vbmf = true;
      } else {
        const auto list = parse_list(value, token);
        if (list.size() != 2) throw ParseError("ranks takes 'R1,R2' or 'vbmf', got '" + value + "'");
        d.ranks = std::make_pair(list[0], list[1]);
      }
    } else if (key == "inner") {
      try {
        d.inner = parse_activation(value);
      } catch (const InvalidArgument& e) {
        throw ParseError(e.what());
      }
    } else {
      throw ParseError("unknown directive key '" + key + "'");
    }
  }
  return d;
}

std::size_t required(const PlanValue& v, std::size_t layer, std::size_t first, const char* what) {
  auto r = v.resolve(layer, first);
  if (!r) {
    throw InvalidArgument(std::string("directive needs ") + what + " for layer " +
                          std::to_string(layer));
  }
  return *r;
}

void check_value_shape(const PlanValue& v, const Directive& d, const char* key) {
  const std::size_t span = d.last - d.first + 1;
  if (!v.per_layer.empty() && v.per_layer.size() != span) {
    throw InvalidArgument(std::string("'") + key + "' lists " + std::to_string(v.per_layer.size()) +
                          " values for " + std::to_string(span) + " layers in '" + d.text + "'");
  }
  for (auto l : v.scoped_layers) {
    if (l < d.first || l > d.last) {
      throw InvalidArgument(std::string("'") + key + "' scopes layer " + std::to_string(l) +
                            " outside the range of '" + d.text + "'");
    }
  }
}

}  // namespace

std::optional<std::size_t> PlanValue::resolve(std::size_t layer, std::size_t first) const {
  if (uniform) return uniform;
  if (!per_layer.empty()) {
    const std::size_t i = layer - first;
    if (i < per_layer.size()) return per_layer[i];
    return std::nullopt;
  }
  if (scoped_value && scoped_layers.contains(layer)) return scoped_value;
  return std::nullopt;
}

ReplacementPlan parse_plan(const std::string& text) {
  ReplacementPlan plan;
  if (trim(text).empty()) return plan;
  for (const auto& chunk : split_directives(text)) {
    if (trim(chunk).empty()) throw ParseError("empty directive in plan '" + text + "'");
    plan.directives.push_back(parse_directive(chunk));
  }
  return plan;
}

PlanResult apply_plan(const ArchSpec& arch, const ReplacementPlan& plan,
                      const std::optional<WeightStore>& weights) {
  arch.validate();
  if (weights) check_store(arch, *weights);

  PlanResult result;
  result.arch = arch;
  result.weights = weights;
  const std::size_t n = arch.layers.size();
  std::set<std::size_t> claimed;

  for (std::size_t di = 0; di < plan.directives.size(); ++di) {
    const auto& d = plan.directives[di];
    if (d.first < 1 || d.last > n || d.first > d.last) {
      throw InvalidArgument("directive '" + d.text + "' range is outside layers 1-" +
                            std::to_string(n));
    }
    check_value_shape(d.t, d, "t");
    check_value_shape(d.alpha, d, "alpha");
    check_value_shape(d.bottleneck, d, "r");

    for (std::size_t layer = d.first; layer <= d.last; ++layer) {
      if (!claimed.insert(layer).second) {
        throw InvalidArgument("more than one directive targets layer " + std::to_string(layer));
      }
      const LayerSpec& src = arch.layers[layer - 1];
      if (layer == 1 && d.kind != LayerKind::Cdp) {
        throw DirectiveRejected("layer 1 is never factorized with " +
                                std::string(to_string(d.kind)) + " (single input stage)");
      }
      const bool tdw_over_depthsep = d.kind == LayerKind::Tdw && src.kind == LayerKind::DepthSep;
      if (src.kind != LayerKind::Standard && !tdw_over_depthsep) {
        throw DirectiveRejected("layer " + std::to_string(layer) + " is already " +
                                std::string(to_string(src.kind)) + "; '" + d.text +
                                "' cannot be applied again");
      }

      LayerSpec out;
      out.kind = d.kind;
      out.kernel = src.kernel;
      out.in_channels = src.in_channels;
      out.out_channels = src.out_channels;
      out.stride = src.stride;
      out.padding = src.padding;
      out.activation = src.activation;
      out.group = src.group;

      Provenance prov;
      prov.layer = layer;
      prov.directive = di;
      prov.from = src.kind;
      prov.to = d.kind;

      std::optional<LayerWeights> new_weights;
      const std::uint64_t seed = weights ? derive_seed(weights->manifest.seed ^ 0xC0DEull, layer) : 0;

      switch (d.kind) {
        case LayerKind::DepthSep: {
          out.width_multiplier = d.t.resolve(layer, d.first).value_or(1);
          out.inner_activation = d.inner.value_or(Activation::None);
          out.validate();
          if (weights) {
            prov.note = "fresh depthwise/pointwise weights";
            new_weights = random_layer_weights(out, seed);
          }
          break;
        }
        case LayerKind::Cdp: {
          out.alpha = required(d.alpha, layer, d.first, "alpha");
          out.inner_activation = d.inner.value_or(Activation::ReLU);
          if (out.alpha > out.in_channels) {
            throw InvalidArgument("layer " + std::to_string(layer) + ": alpha=" +
                                  std::to_string(out.alpha) + " exceeds C=" +
                                  std::to_string(out.in_channels));
          }
          out.validate();
          if (weights) {
            prov.note = "fresh conv/depthwise/pointwise weights";
            new_weights = random_layer_weights(out, seed);
          }
          break;
        }
        case LayerKind::Tucker2: {
          if (d.ranks) {
            out.rank_in = d.ranks->first;
            out.rank_out = d.ranks->second;
            try {
              out.validate();
            } catch (const InvalidArgument& e) {
              throw InvalidArgument("layer " + std::to_string(layer) + ": " + e.what());
            }
            if (weights) {
              auto f = decompose_layer(weights->layer(layer).at("kernel"),
                                       std::make_pair(out.rank_in, out.rank_out));
              prov.reconstruction_error = f.reconstruction_error;
              new_weights = LayerWeights{{"proj_in", f.proj_in.to_tensor()},
                                         {"core", f.core},
                                         {"proj_out", f.proj_out.to_tensor()}};
            }
          } else if (d.ranks_vbmf) {
            if (!weights) throw InvalidArgument("ranks=vbmf needs trained weights");
            auto f = decompose_layer(weights->layer(layer).at("kernel"));
            out.rank_in = f.rank_in();
            out.rank_out = f.rank_out();
            prov.reconstruction_error = f.reconstruction_error;
            new_weights = LayerWeights{{"proj_in", f.proj_in.to_tensor()},
                                       {"core", f.core},
                                       {"proj_out", f.proj_out.to_tensor()}};
          } else {
            throw InvalidArgument("tucker directive '" + d.text + "' needs ranks=R1,R2 or ranks=vbmf");
          }
          prov.ranks = std::make_pair(out.rank_in, out.rank_out);
          prov.note = "Tucker-2 decomposition over channel modes";
          break;
        }
        case LayerKind::Tdw: {
          if (tdw_over_depthsep) {
            out.width_multiplier = src.width_multiplier;
            out.inner_activation = d.inner.value_or(src.inner_activation);
            if (auto t = d.t.resolve(layer, d.first); t && *t != src.width_multiplier) {
              throw InvalidArgument("layer " + std::to_string(layer) +
                                    ": t differs from the existing depthwise stage");
            }
          } else {
            out.width_multiplier = d.t.resolve(layer, d.first).value_or(1);
            out.inner_activation = d.inner.value_or(Activation::None);
          }
          std::optional<Matrix> pointwise;
          if (weights && tdw_over_depthsep) {
            pointwise = Matrix::from_tensor(weights->layer(layer).at("pointwise"));
          }
          if (d.bottleneck_vbmf) {
            if (!pointwise) {
              throw InvalidArgument("r=vbmf needs weights of an existing depthsep layer");
            }
            const auto choice = select_bottleneck_rank(*pointwise);
            out.bottleneck_rank = choice.rank;
          } else {
            out.bottleneck_rank = required(d.bottleneck, layer, d.first, "r");
          }
          try {
            out.validate();
          } catch (const InvalidArgument& e) {
            throw InvalidArgument("layer " + std::to_string(layer) + ": " + e.what());
          }
          prov.bottleneck_rank = out.bottleneck_rank;
          prov.compresses =
              bottleneck_compresses(out.expanded_channels(), out.out_channels, out.bottleneck_rank);
          if (pointwise) {
            auto [first, second] = split_pointwise(*pointwise, out.bottleneck_rank);
            const auto product = matmul(first, second);
            prov.reconstruction_error = relative_error(product.data(), pointwise->data());
            new_weights = LayerWeights{{"depthwise", weights->layer(layer).at("depthwise")},
                                       {"bottleneck_in", first.to_tensor()},
                                       {"bottleneck_out", second.to_tensor()}};
            prov.note = "depthwise kept, pointwise split through a rank-" +
                        std::to_string(out.bottleneck_rank) + " bottleneck";
          } else {
            if (weights) {
              prov.note = "fresh depthwise/bottleneck weights";
              new_weights = random_layer_weights(out, seed);
            }
          }
          break;
        }
        case LayerKind::Standard:
          throw InvalidArgument("'standard' is not a replacement kind");
      }

      result.arch.layers[layer - 1] = out;
      if (new_weights) result.weights->set_layer(layer, *new_weights);
      result.provenance.push_back(std::move(prov));
    }
  }
  result.arch.validate();
  return result;
}

}  // namespace cdpkit
