#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdpkit/arch_io.hpp"
#include "cdpkit/cost.hpp"
#include "cdpkit/errors.hpp"
#include "cdpkit/factorize.hpp"
#include "cdpkit/plan.hpp"
#include "cdpkit/synthetic.hpp"
#include "cdpkit/verify.hpp"
#include "cdpkit/weight_store.hpp"

namespace cdpkit::cli {

namespace {

using json = nlohmann::ordered_json;

struct Report {
  json data;
  int exit_code = kOk;
};

// ---------------------------------------------------------------------------
// Text helpers

std::string grouped(std::uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string fixed(double v, int precision) {
  if (!std::isfinite(v)) return "inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string scientific(double v) {
  if (!std::isfinite(v)) return "inf";
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string error_text(const json& j) { return j.is_null() ? "inf" : scientific(j.get<double>()); }

/// Plain aligned table: first column left-aligned, the rest right-aligned.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : rows_{std::move(header)} {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  void render(std::ostream& out) const {
    std::vector<std::size_t> width;
    for (const auto& row : rows_) {
      width.resize(std::max(width.size(), row.size()));
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    for (const auto& row : rows_) {
      std::string line;
      for (std::size_t c = 0; c < row.size(); ++c) {
        const std::string pad(width[c] - row[c].size(), ' ');
        line += c == 0 ? row[c] + pad : "  " + pad + row[c];
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out << line << '\n';
    }
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

json input_json(const ArchSpec& arch) {
  return json::array({arch.input.width, arch.input.height, arch.input.channels});
}

json cost_json(std::uint64_t params, std::uint64_t flops) {
  return {{"params", params}, {"flops", flops}};
}

std::string layer_label(const LayerSpec& s) {
  std::string label(to_string(s.kind));
  switch (s.kind) {
    case LayerKind::Standard:
      break;
    case LayerKind::DepthSep:
      label += " t=" + std::to_string(s.width_multiplier);
      break;
    case LayerKind::Tucker2:
      label += " " + std::to_string(s.rank_in) + "," + std::to_string(s.rank_out);
      break;
    case LayerKind::Tdw:
      label += " t=" + std::to_string(s.width_multiplier) + " r=" + std::to_string(s.bottleneck_rank);
      break;
    case LayerKind::Cdp:
      label += " a=" + std::to_string(s.alpha);
      break;
  }
  return label;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOptions {
  std::string arch;
  std::string variant = "standard";
  std::size_t t = 1;
  std::vector<std::size_t> ranks;
  std::size_t r = 0;
  std::optional<std::size_t> alpha;
  bool include_activations = false;
  std::uint64_t seed = 0;
};

LayerSpec variant_layer(const LayerSpec& base, LayerKind kind, const AnalyzeOptions& o) {
  if (base.kind != LayerKind::Standard || kind == LayerKind::Standard) return base;
  LayerSpec s = base;
  s.kind = kind;
  switch (kind) {
    case LayerKind::DepthSep:
      s.width_multiplier = o.t;
      break;
    case LayerKind::Tucker2:
      s.rank_in = std::min(o.ranks.at(0), base.in_channels);
      s.rank_out = std::min(o.ranks.at(1), base.out_channels);
      break;
    case LayerKind::Tdw:
      s.width_multiplier = o.t;
      s.bottleneck_rank = o.r;
      break;
    case LayerKind::Cdp:
      s.alpha = std::min(*o.alpha, base.in_channels);
      break;
    case LayerKind::Standard:
      break;
  }
  s.validate();
  return s;
}

Report cmd_analyze(const AnalyzeOptions& o) {
  const ArchSpec arch = load_arch(o.arch);
  const LayerKind kind = parse_layer_kind(o.variant);
  if (o.t == 0) throw InvalidArgument("--t must be positive");
  if (kind == LayerKind::Tucker2 && o.ranks.size() != 2) {
    throw InvalidArgument("--variant tucker needs --ranks R1,R2");
  }
  if (kind == LayerKind::Tdw && o.r == 0) throw InvalidArgument("--variant tdw needs --r R");
  if (kind == LayerKind::Cdp && !o.alpha) throw InvalidArgument("--variant cdp needs --alpha A");

  const CostPolicy policy{o.include_activations};
  const auto geometry = propagate_shapes(arch);
  const auto base = model_cost(arch, std::nullopt, policy);

  ArchSpec var = arch;
  for (auto& layer : var.layers) layer = variant_layer(layer, kind, o);
  const bool with_variant = kind != LayerKind::Standard;

  json d;
  d["command"] = "analyze";
  d["arch"] = arch.name;
  d["input"] = input_json(arch);
  d["seed"] = o.seed;
  d["include_activations"] = o.include_activations;
  json variant = nullptr;
  if (with_variant) {
    variant = {{"kind", to_string(kind)}};
    if (kind == LayerKind::DepthSep || kind == LayerKind::Tdw) variant["t"] = o.t;
    if (kind == LayerKind::Tucker2) variant["ranks"] = o.ranks;
    if (kind == LayerKind::Tdw) variant["r"] = o.r;
    if (kind == LayerKind::Cdp) variant["alpha"] = *o.alpha;
  }
  d["variant"] = variant;

  json layers = json::array();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& s = arch.layers[i];
    const auto& c = base.per_layer[i].cost;
    json row = {{"index", i + 1},
                {"kind", to_string(s.kind)},
                {"label", layer_label(s)},
                {"k", s.kernel},
                {"c", s.in_channels},
                {"n", s.out_channels},
                {"stride", s.stride},
                {"out", json::array({geometry[i].out_height, geometry[i].out_width})},
                {"params", c.params},
                {"flops", c.flops}};
    if (with_variant) {
      const auto vc = layer_cost(var.layers[i], geometry[i], policy);
      row["variant"] = {{"label", layer_label(var.layers[i])}, {"params", vc.params}, {"flops", vc.flops}};
    }
    layers.push_back(row);
  }
  d["layers"] = layers;
  d["total"] = cost_json(base.total_params, base.total_flops);
  json groups = json::object();
  for (const auto& [g, f] : base.group_flops) {
    if (!g.empty()) groups[g] = f;
  }
  d["group_flops"] = groups;
  if (with_variant) {
    const auto vr = model_cost(var, arch, policy);
    d["variant_total"] = cost_json(vr.total_params, vr.total_flops);
    d["variant_compression_ratio"] = vr.compression_ratio;
    d["variant_flop_ratio"] = vr.speedup;
  }
  return {d, kOk};
}

void render_analyze(const json& d, std::ostream& out) {
  const bool with_variant = !d["variant"].is_null();
  const auto& in = d["input"];
  out << "arch " << d["arch"].get<std::string>() << "  input " << in[0] << "x" << in[1] << "x"
      << in[2] << "  seed " << d["seed"] << "\n\n";
  std::vector<std::string> header{"layer", "kind", "k", "c->n", "s", "out", "params", "flops"};
  if (with_variant) {
    header.push_back("variant");
    header.push_back("v.params");
    header.push_back("v.flops");
  }
  Table t(header);
  for (const auto& l : d["layers"]) {
    std::vector<std::string> row{std::to_string(l["index"].get<std::size_t>()),
                                 l["label"].get<std::string>(),
                                 std::to_string(l["k"].get<std::size_t>()),
                                 std::to_string(l["c"].get<std::size_t>()) + "->" +
                                     std::to_string(l["n"].get<std::size_t>()),
                                 std::to_string(l["stride"].get<std::size_t>()),
                                 std::to_string(l["out"][0].get<std::size_t>()) + "x" +
                                     std::to_string(l["out"][1].get<std::size_t>()),
                                 grouped(l["params"]),
                                 grouped(l["flops"])};
    if (with_variant) {
      row.push_back(l["variant"]["label"].get<std::string>());
      row.push_back(grouped(l["variant"]["params"]));
      row.push_back(grouped(l["variant"]["flops"]));
    }
    t.add(row);
  }
  std::vector<std::string> total{"total", "", "", "", "", "", grouped(d["total"]["params"]),
                                 grouped(d["total"]["flops"])};
  if (with_variant) {
    total.push_back("");
    total.push_back(grouped(d["variant_total"]["params"]));
    total.push_back(grouped(d["variant_total"]["flops"]));
  }
  t.add(total);
  t.render(out);
  for (const auto& [g, f] : d["group_flops"].items()) {
    out << "flops[" << g << "] " << grouped(f.get<std::uint64_t>()) << '\n';
  }
  if (with_variant) {
    out << "\nvariant compression " << fixed(d["variant_compression_ratio"], 2) << "x, flop ratio "
        << fixed(d["variant_flop_ratio"], 2) << "x\n";
  }
}

// ---------------------------------------------------------------------------
// plan

struct PlanOptions {
  std::string arch;
  std::string plan;
  std::string arch_out;
  bool include_activations = false;
  std::uint64_t seed = 0;
};

json provenance_json(const Provenance& p) {
  json j = {{"layer", p.layer}, {"from", to_string(p.from)}, {"to", to_string(p.to)}};
  if (!p.note.empty()) j["note"] = p.note;
  if (p.ranks) j["ranks"] = json::array({p.ranks->first, p.ranks->second});
  if (p.bottleneck_rank) j["bottleneck_rank"] = *p.bottleneck_rank;
  if (p.compresses) j["compresses"] = *p.compresses;
  if (p.reconstruction_error) {
    j["reconstruction_error"] =
        std::isfinite(*p.reconstruction_error) ? json(*p.reconstruction_error) : json(nullptr);
  }
  return j;
}

json plan_summary(const ArchSpec& arch, const ArchSpec& compressed, const CostPolicy& policy) {
  const auto before = model_cost(arch, std::nullopt, policy);
  const auto after = model_cost(compressed, arch, policy);
  json d;
  d["baseline"] = cost_json(before.total_params, before.total_flops);
  d["compressed"] = cost_json(after.total_params, after.total_flops);
  d["compression_ratio"] = after.compression_ratio;
  d["flop_ratio"] = after.speedup;
  json layers = json::array();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& b = before.per_layer[i].cost;
    const auto& a = after.per_layer[i].cost;
    layers.push_back({{"index", i + 1},
                      {"from", layer_label(arch.layers[i])},
                      {"to", layer_label(compressed.layers[i])},
                      {"params_before", b.params},
                      {"params_after", a.params},
                      {"params_delta", std::int64_t(a.params) - std::int64_t(b.params)},
                      {"flops_before", b.flops},
                      {"flops_after", a.flops},
                      {"flops_delta", std::int64_t(a.flops) - std::int64_t(b.flops)}});
  }
  d["layers"] = layers;
  return d;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write '" + path + "'");
  f << text << '\n';
}

Report cmd_plan(const PlanOptions& o) {
  const ArchSpec arch = load_arch(o.arch);
  const auto plan = parse_plan(o.plan);
  const auto result = apply_plan(arch, plan);
  if (!o.arch_out.empty()) write_text_file(o.arch_out, arch_to_json(result.arch));

  json d;
  d["command"] = "plan";
  d["arch"] = arch.name;
  d["plan"] = o.plan;
  d["seed"] = o.seed;
  d["include_activations"] = o.include_activations;
  d.update(plan_summary(arch, result.arch, CostPolicy{o.include_activations}));
  json prov = json::array();
  for (const auto& p : result.provenance) prov.push_back(provenance_json(p));
  d["provenance"] = prov;
  if (!o.arch_out.empty()) d["arch_out"] = o.arch_out;
  return {d, kOk};
}

std::string signed_grouped(std::int64_t v) {
  if (v == 0) return "0";
  return (v < 0 ? "-" : "+") + grouped(std::uint64_t(v < 0 ? -v : v));
}

void render_plan_layers(const json& d, std::ostream& out) {
  Table t({"layer", "from", "to", "params", "->", "delta", "flops", "->", "delta"});
  for (const auto& l : d["layers"]) {
    t.add({std::to_string(l["index"].get<std::size_t>()), l["from"].get<std::string>(),
           l["to"].get<std::string>(), grouped(l["params_before"]), grouped(l["params_after"]),
           signed_grouped(l["params_delta"]), grouped(l["flops_before"]),
           grouped(l["flops_after"]), signed_grouped(l["flops_delta"])});
  }
  t.render(out);
  out << "\nparams " << grouped(d["baseline"]["params"]) << " -> "
      << grouped(d["compressed"]["params"]) << "  compression ratio "
      << fixed(d["compression_ratio"], 2) << "x\n";
  out << "flops  " << grouped(d["baseline"]["flops"]) << " -> "
      << grouped(d["compressed"]["flops"]) << "  flop ratio " << fixed(d["flop_ratio"], 2)
      << "x\n";
}

void render_plan(const json& d, std::ostream& out) {
  out << "arch " << d["arch"].get<std::string>() << "  plan \"" << d["plan"].get<std::string>()
      << "\"  seed " << d["seed"] << "\n\n";
  render_plan_layers(d, out);
  for (const auto& p : d["provenance"]) {
    if (p.contains("note")) {
      out << "layer " << p["layer"] << ": " << p["note"].get<std::string>() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// decompose

struct DecomposeOptions {
  std::string arch;
  std::string weights;
  std::string plan;
  std::string out;
  std::string arch_out;
};

Report cmd_decompose(const DecomposeOptions& o) {
  const ArchSpec arch = load_arch(o.arch);
  const auto plan = parse_plan(o.plan);
  const WeightStore store = read_weight_store(o.weights);
  check_store(arch, store);
  const auto result = apply_plan(arch, plan, store);
  WeightStore written = *result.weights;
  written.manifest.arch_name = result.arch.name;
  write_weight_store(written, o.out);
  if (!o.arch_out.empty()) write_text_file(o.arch_out, arch_to_json(result.arch));

  json d;
  d["command"] = "decompose";
  d["arch"] = arch.name;
  d["weights"] = o.weights;
  d["plan"] = o.plan;
  d["seed"] = store.manifest.seed;
  d["out"] = o.out;
  if (!o.arch_out.empty()) d["arch_out"] = o.arch_out;
  json prov = json::array();
  for (const auto& p : result.provenance) prov.push_back(provenance_json(p));
  d["decomposed"] = prov;
  d.update(plan_summary(arch, result.arch, {}));
  return {d, kOk};
}

void render_decompose(const json& d, std::ostream& out) {
  out << "arch " << d["arch"].get<std::string>() << "  plan \"" << d["plan"].get<std::string>()
      << "\"  seed " << d["seed"] << "\n\n";
  Table t({"layer", "from", "to", "ranks", "bottleneck", "rel.error"});
  for (const auto& p : d["decomposed"]) {
    const std::string ranks = p.contains("ranks") ? std::to_string(p["ranks"][0].get<std::size_t>()) +
                                                        "," +
                                                        std::to_string(p["ranks"][1].get<std::size_t>())
                                                  : "-";
    const std::string bottleneck =
        p.contains("bottleneck_rank") ? std::to_string(p["bottleneck_rank"].get<std::size_t>()) : "-";
    const std::string error =
        p.contains("reconstruction_error") ? error_text(p["reconstruction_error"]) : "-";
    t.add({std::to_string(p["layer"].get<std::size_t>()), p["from"].get<std::string>(),
           p["to"].get<std::string>(), ranks, bottleneck, error});
  }
  t.render(out);
  out << "\ncompression ratio " << fixed(d["compression_ratio"], 2) << "x, flop ratio "
      << fixed(d["flop_ratio"], 2) << "x\nwrote " << d["out"].get<std::string>() << '\n';
}

// ---------------------------------------------------------------------------
// verify

struct VerifyCliOptions {
  std::string arch;
  std::string weights;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

Report cmd_verify(const VerifyCliOptions& o) {
  if (!(o.tolerance >= 0.0)) throw InvalidArgument("--tolerance must be non-negative");
  const ArchSpec arch = load_arch(o.arch);
  const WeightStore store = read_weight_store(o.weights);
  check_store(arch, store);
  VerifyOptions vo;
  vo.seed = o.seed;
  vo.tolerance = o.tolerance;
  const auto checks = verify_equivalences(arch, store, vo);

  json d;
  d["command"] = "verify";
  d["arch"] = arch.name;
  d["weights"] = o.weights;
  d["seed"] = o.seed;
  d["tolerance"] = o.tolerance;
  json list = json::array();
  json failing = json::array();
  double worst = 0.0;
  for (const auto& c : checks) {
    worst = std::max(worst, c.error);
    json j = {{"layer", c.layer},
              {"check", c.name},
              {"error", std::isfinite(c.error) ? json(c.error) : json(nullptr)},
              {"passed", c.passed}};
    if (!c.detail.empty()) j["detail"] = c.detail;
    if (!c.passed) failing.push_back(j);
    list.push_back(std::move(j));
  }
  d["checks"] = list;
  d["max_error"] = std::isfinite(worst) ? json(worst) : json(nullptr);
  d["passed"] = failing.empty();
  d["failing"] = failing;
  return {d, failing.empty() ? kOk : kVerifyFailed};
}

void render_verify(const json& d, std::ostream& out) {
  out << "arch " << d["arch"].get<std::string>() << "  seed " << d["seed"] << "  tolerance "
      << scientific(d["tolerance"]) << "\n\n";
  Table t({"layer", "check", "rel.error", "status"});
  for (const auto& c : d["checks"]) {
    t.add({std::to_string(c["layer"].get<std::size_t>()), c["check"].get<std::string>(),
           error_text(c["error"]), c["passed"].get<bool>() ? "ok" : "FAIL"});
  }
  t.render(out);
  out << "\nmax error " << error_text(d["max_error"]) << "  "
      << (d["passed"].get<bool>() ? "all checks passed" : "verification FAILED") << '\n';
}

// ---------------------------------------------------------------------------
// rank

struct RankOptions {
  std::string file;
};

Report cmd_rank(const RankOptions& o) {
  const WeightStore store = read_weight_store(o.file);
  if (store.tensors.size() != 1) {
    throw InvalidArgument("'" + o.file + "' must hold exactly one tensor, found " +
                          std::to_string(store.tensors.size()));
  }
  const auto& [name, tensor] = *store.tensors.begin();
  if (tensor.rank() != 2) {
    throw InvalidArgument("tensor '" + name + "' is " + std::to_string(tensor.rank()) +
                          "-D; rank estimation needs a 2-D tensor");
  }
  const auto est = evbmf_rank(Matrix::from_tensor(tensor));
  json d;
  d["command"] = "rank";
  d["file"] = o.file;
  d["seed"] = store.manifest.seed;
  d["tensor"] = name;
  d["rows"] = tensor.dim(0);
  d["cols"] = tensor.dim(1);
  d["rank"] = est.rank;
  d["noise_variance"] = est.noise_variance;
  d["retained_singular_values"] = est.retained_singular_values;
  return {d, kOk};
}

void render_rank(const json& d, std::ostream& out) {
  out << "tensor " << d["tensor"].get<std::string>() << "  " << d["rows"] << "x" << d["cols"]
      << "  seed " << d["seed"] << '\n';
  out << "rank " << d["rank"] << '\n';
  out << "noise variance " << scientific(d["noise_variance"]) << '\n';
  out << "retained singular values";
  for (const auto& s : d["retained_singular_values"]) out << ' ' << fixed(s.get<double>(), 4);
  out << '\n';
}

// ---------------------------------------------------------------------------
// init / matrix

struct InitOptions {
  std::string arch;
  std::string out;
  std::uint64_t seed = 0;
  bool zero = false;
  std::vector<std::string> low_rank;
};

struct LowRankSpec {
  std::size_t layer = 0;
  std::size_t r1 = 0;
  std::size_t r2 = 0;
};

LowRankSpec parse_low_rank(const std::string& text) {
  LowRankSpec s;
  char colon = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> s.layer >> colon >> s.r1 >> comma >> s.r2) || colon != ':' || comma != ',' ||
      in.peek() != std::char_traits<char>::eof()) {
    throw InvalidArgument("--low-rank expects LAYER:R1,R2, got '" + text + "'");
  }
  return s;
}

Report cmd_init(const InitOptions& o) {
  const ArchSpec arch = load_arch(o.arch);
  WeightStore store = random_weights(arch, o.seed);
  if (o.zero) {
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
      store.set_layer(i + 1, zero_weights(arch.layers[i]));
    }
  }
  json planted = json::array();
  for (const auto& text : o.low_rank) {
    const auto lr = parse_low_rank(text);
    if (lr.layer == 0 || lr.layer > arch.layers.size()) {
      throw InvalidArgument("--low-rank layer " + std::to_string(lr.layer) + " out of range");
    }
    const auto& s = arch.layers[lr.layer - 1];
    if (s.kind != LayerKind::Standard) {
      throw InvalidArgument("--low-rank needs a standard layer, layer " +
                            std::to_string(lr.layer) + " is " + std::string(to_string(s.kind)));
    }
    store.set_layer(lr.layer, {{"kernel", synthetic_low_rank_kernel(
                                              s.kernel, s.in_channels, s.out_channels, lr.r1,
                                              lr.r2, derive_seed(o.seed, 1000 + lr.layer))}});
    planted.push_back({{"layer", lr.layer}, {"ranks", json::array({lr.r1, lr.r2})}});
  }
  write_weight_store(store, o.out);

  std::size_t elements = 0;
  for (const auto& [name, t] : store.tensors) elements += t.size();
  json d;
  d["command"] = "init";
  d["arch"] = arch.name;
  d["seed"] = o.seed;
  d["zero"] = o.zero;
  d["low_rank"] = planted;
  d["tensors"] = store.tensors.size();
  d["elements"] = elements;
  d["out"] = o.out;
  return {d, kOk};
}

void render_init(const json& d, std::ostream& out) {
  out << "arch " << d["arch"].get<std::string>() << "  seed " << d["seed"]
      << (d["zero"].get<bool>() ? "  zero" : "") << '\n';
  for (const auto& p : d["low_rank"]) {
    out << "layer " << p["layer"] << " multilinear rank (" << p["ranks"][0] << ","
        << p["ranks"][1] << ")\n";
  }
  out << "wrote " << d["tensors"] << " tensors (" << grouped(d["elements"]) << " values) to "
      << d["out"].get<std::string>() << '\n';
}

struct MatrixOptions {
  std::size_t rows = 100;
  std::size_t cols = 200;
  std::size_t rank = 5;
  double sigma = 0.01;
  std::uint64_t seed = 0;
  std::string out;
};

Report cmd_matrix(const MatrixOptions& o) {
  WeightStore store;
  store.manifest.arch_name = "matrix";
  store.manifest.seed = o.seed;
  store.tensors["matrix"] = synthetic_low_rank_matrix(o.rows, o.cols, o.rank, o.sigma, o.seed).to_tensor();
  write_weight_store(store, o.out);
  json d;
  d["command"] = "matrix";
  d["rows"] = o.rows;
  d["cols"] = o.cols;
  d["rank"] = o.rank;
  d["sigma"] = o.sigma;
  d["seed"] = o.seed;
  d["out"] = o.out;
  return {d, kOk};
}

void render_matrix(const json& d, std::ostream& out) {
  out << "wrote " << d["rows"] << "x" << d["cols"] << " matrix of rank " << d["rank"]
      << " + noise sigma " << d["sigma"].get<double>() << " (seed " << d["seed"] << ") to "
      << d["out"].get<std::string>() << '\n';
}

void render(const json& d, std::ostream& out) {
  const auto command = d["command"].get<std::string>();
  if (command == "analyze") render_analyze(d, out);
  else if (command == "plan") render_plan(d, out);
  else if (command == "decompose") render_decompose(d, out);
  else if (command == "verify") render_verify(d, out);
  else if (command == "rank") render_rank(d, out);
  else if (command == "init") render_init(d, out);
  else if (command == "matrix") render_matrix(d, out);
}

void emit(const Report& r, bool as_json, std::ostream& out) {
  if (as_json) out << r.data.dump(2) << '\n';
  else render(r.data, out);
}

void report_failures(const Report& r, std::ostream& err) {
  if (r.exit_code != kVerifyFailed) return;
  err << "error: verification failed:";
  for (const auto& f : r.data["failing"]) {
    err << " layer " << f["layer"] << " (" << f["check"].get<std::string>() << ")";
  }
  err << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cost analysis and factorization of convolutional layers"};
  app.name("cdpkit");
  app.require_subcommand(1, 1);

  bool as_json = false;
  auto json_flag = [&](CLI::App* sub) { sub->add_flag("--json", as_json, "Machine-readable report"); };

  AnalyzeOptions analyze;
  auto* a = app.add_subcommand("analyze", "Per-layer parameters and FLOPs");
  a->add_option("arch", analyze.arch, "Built-in name or architecture JSON file")->required();
  a->add_option("--variant", analyze.variant, "standard|depthsep|tucker|tdw|cdp column");
  a->add_option("--t", analyze.t, "Width multiplier for depthsep/tdw");
  a->add_option("--ranks", analyze.ranks, "Tucker ranks R1,R2")->delimiter(',')->expected(2);
  a->add_option("--r", analyze.r, "Tdw bottleneck rank");
  a->add_option("--alpha", analyze.alpha, "CDP offset");
  a->add_flag("--include-activations", analyze.include_activations, "Count CDP ReLU operations");
  a->add_option("--seed", analyze.seed, "Seed recorded in the report");
  json_flag(a);

  PlanOptions plan;
  auto* p = app.add_subcommand("plan", "Cost of a replacement plan");
  p->add_option("arch", plan.arch, "Built-in name or architecture JSON file")->required();
  p->add_option("plan", plan.plan, "Replacement plan, e.g. \"cdp:2-7 alpha=2\"")->required();
  p->add_option("--arch-out", plan.arch_out, "Write the rewritten architecture JSON");
  p->add_flag("--include-activations", plan.include_activations, "Count CDP ReLU operations");
  p->add_option("--seed", plan.seed, "Seed recorded in the report");
  json_flag(p);

  DecomposeOptions decompose;
  auto* dc = app.add_subcommand("decompose", "Apply a plan to a weight file");
  dc->add_option("arch", decompose.arch, "Built-in name or architecture JSON file")->required();
  dc->add_option("weights", decompose.weights, "Input weight container")->required();
  dc->add_option("plan", decompose.plan, "Replacement plan")->required();
  dc->add_option("out", decompose.out, "Output weight container")->required();
  dc->add_option("--arch-out", decompose.arch_out, "Write the rewritten architecture JSON");
  json_flag(dc);

  VerifyCliOptions verify;
  auto* v = app.add_subcommand("verify", "Numeric equivalence battery");
  v->add_option("arch", verify.arch, "Built-in name or architecture JSON file")->required();
  v->add_option("weights", verify.weights, "Weight container")->required();
  v->add_option("--tolerance", verify.tolerance, "Relative error bound");
  v->add_option("--seed", verify.seed, "Seed for the probe inputs");
  json_flag(v);

  RankOptions rank;
  auto* r = app.add_subcommand("rank", "EVBMF rank of a stored 2-D tensor");
  r->add_option("file", rank.file, "Weight container holding one 2-D tensor")->required();
  json_flag(r);

  InitOptions init;
  auto* i = app.add_subcommand("init", "Write seeded weights for an architecture");
  i->add_option("arch", init.arch, "Built-in name or architecture JSON file")->required();
  i->add_option("out", init.out, "Output weight container")->required();
  i->add_option("--seed", init.seed, "Initialisation seed");
  i->add_flag("--zero", init.zero, "All-zero weights");
  i->add_option("--low-rank", init.low_rank, "LAYER:R1,R2 plants an exact multilinear rank")
      ->take_all()
      ->allow_extra_args(false);
  json_flag(i);

  MatrixOptions matrix;
  auto* m = app.add_subcommand("matrix", "Write a seeded low-rank plus noise matrix");
  m->add_option("out", matrix.out, "Output weight container")->required();
  m->add_option("--rows", matrix.rows, "Rows");
  m->add_option("--cols", matrix.cols, "Columns");
  m->add_option("--rank", matrix.rank, "Planted rank");
  m->add_option("--sigma", matrix.sigma, "Noise standard deviation");
  m->add_option("--seed", matrix.seed, "Generator seed");
  json_flag(m);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    Report report;
    if (a->parsed()) report = cmd_analyze(analyze);
    else if (p->parsed()) report = cmd_plan(plan);
    else if (dc->parsed()) report = cmd_decompose(decompose);
    else if (v->parsed()) report = cmd_verify(verify);
    else if (r->parsed()) report = cmd_rank(rank);
    else if (i->parsed()) report = cmd_init(init);
    else report = cmd_matrix(matrix);
    emit(report, as_json, out);
    report_failures(report, err);
    return report.exit_code;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const DirectiveRejected& e) {
    err << "error: directive rejected: " << e.what() << '\n';
    return kRejected;
  } catch (const WeightMismatch& e) {
    err << "error: weight mismatch: " << e.what() << '\n';
    return kWeightMismatch;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const UnsupportedConfiguration& e) {
    err << "error: unsupported: " << e.what() << '\n';
    return kInvalid;
  }
}

}  // namespace cdpkit::cli
