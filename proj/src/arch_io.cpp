#include "cdpkit/arch_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdpkit/errors.hpp"

namespace cdpkit {

namespace {

using nlohmann::json;

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1;
  int column = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback, bool required) {
  if (!j.contains(key)) {
    if (required) throw ParseError(std::string("missing required field '") + key + "'");
    return fallback;
  }
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParseError(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

LayerSpec layer_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("layer entry must be an object");
  LayerSpec s;
  s.kind = parse_layer_kind(j.value("kind", std::string("standard")));
  s.kernel = get_size(j, "k", 0, true);
  s.in_channels = get_size(j, "c", 0, true);
  s.out_channels = get_size(j, "n", 0, true);
  s.stride = get_size(j, "stride", 1, false);
  s.padding = get_size(j, "pad", 0, false);
  s.width_multiplier = get_size(j, "t", 1, false);
  s.alpha = get_size(j, "alpha", 0, false);
  s.rank_in = get_size(j, "r1", 0, false);
  s.rank_out = get_size(j, "r2", 0, false);
  s.bottleneck_rank = get_size(j, "r", 0, false);
  s.activation = parse_activation(j.value("act", std::string("none")));
  s.inner_activation = parse_activation(j.value("inner_act", std::string("none")));
  s.group = j.value("group", std::string());
  return s;
}

json layer_to_json(const LayerSpec& s) {
  json j;
  j["kind"] = std::string(to_string(s.kind));
  j["k"] = s.kernel;
  j["c"] = s.in_channels;
  j["n"] = s.out_channels;
  j["stride"] = s.stride;
  j["pad"] = s.padding;
  switch (s.kind) {
    case LayerKind::DepthSep: j["t"] = s.width_multiplier; break;
    case LayerKind::Tdw:
      j["t"] = s.width_multiplier;
      j["r"] = s.bottleneck_rank;
      break;
    case LayerKind::Tucker2:
      j["r1"] = s.rank_in;
      j["r2"] = s.rank_out;
      break;
    case LayerKind::Cdp: j["alpha"] = s.alpha; break;
    case LayerKind::Standard: break;
  }
  if (s.activation != Activation::None) j["act"] = std::string(to_string(s.activation));
  if (s.inner_activation != Activation::None) {
    j["inner_act"] = std::string(to_string(s.inner_activation));
  }
  if (!s.group.empty()) j["group"] = s.group;
  return j;
}

}  // namespace

ArchSpec arch_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    throw ParseError("architecture JSON syntax error at line " + std::to_string(line) +
                         ", column " + std::to_string(column) + ": " + e.what(),
                     line, column);
  }
  if (!j.is_object()) throw ParseError("architecture must be a JSON object", 1, 1);
  ArchSpec a;
  try {
    a.name = j.value("name", std::string("custom"));
    const auto& input = j.at("input");
    if (!input.is_array() || input.size() != 3) {
      throw ParseError("'input' must be [width, height, channels]");
    }
    a.input = {input[0].get<std::size_t>(), input[1].get<std::size_t>(),
               input[2].get<std::size_t>()};
    const auto& layers = j.at("layers");
    if (!layers.is_array()) throw ParseError("'layers' must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      try {
        a.layers.push_back(layer_from_json(layers[i]));
      } catch (const ParseError& e) {
        throw ParseError("layer " + std::to_string(i + 1) + ": " + e.what());
      } catch (const InvalidArgument& e) {
        throw ParseError("layer " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    if (j.contains("pools")) {
      for (const auto& p : j.at("pools")) a.pools.insert(p.get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("architecture JSON: ") + e.what());
  }
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("architecture is inconsistent: ") + e.what());
  }
  return a;
}

std::string arch_to_json(const ArchSpec& arch) {
  json j;
  j["name"] = arch.name;
  j["input"] = {arch.input.width, arch.input.height, arch.input.channels};
  j["layers"] = json::array();
  for (const auto& l : arch.layers) j["layers"].push_back(layer_to_json(l));
  j["pools"] = json::array();
  for (auto p : arch.pools) j["pools"].push_back(p);
  return j.dump(2);
}

ArchSpec load_arch(const std::string& name_or_path) {
  if (is_builtin_arch(name_or_path)) return builtin_arch(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ParseError("cannot open architecture file '" + name_or_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return arch_from_json(buf.str());
}

}  // namespace cdpkit
