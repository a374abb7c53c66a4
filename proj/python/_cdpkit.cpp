#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cdpkit/arch.hpp"
#include "cdpkit/arch_io.hpp"
#include "cdpkit/cost.hpp"
#include "cdpkit/errors.hpp"
#include "cdpkit/factorize.hpp"
#include "cdpkit/linalg.hpp"
#include "cdpkit/plan.hpp"
#include "cdpkit/verify.hpp"
#include "cdpkit/weight_store.hpp"
#include "cli.hpp"

namespace py = pybind11;
using namespace cdpkit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() < 1 || a.ndim() > 4) throw InvalidArgument("expected an array of rank 1..4");
  Shape dims(a.shape(), a.shape() + a.ndim());
  return Tensor(dims, std::vector<float>(a.data(), a.data() + a.size()));
}

Matrix to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array");
  return Matrix(a.shape(0), a.shape(1), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> dims(t.dims().begin(), t.dims().end());
  FloatArray out(dims);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

FloatArray to_array(const Matrix& m) { return to_array(m.to_tensor()); }

LayerWeights to_weights(const py::dict& d) {
  LayerWeights w;
  for (const auto& [k, v] : d) w[py::cast<std::string>(k)] = to_tensor(py::cast<FloatArray>(v));
  return w;
}

py::dict from_weights(const std::map<std::string, Tensor>& w) {
  py::dict d;
  for (const auto& [k, v] : w) d[py::str(k)] = to_array(v);
  return d;
}

WeightStore to_store(const py::dict& tensors, const std::string& arch_name, std::uint64_t seed) {
  WeightStore s;
  s.manifest.arch_name = arch_name;
  s.manifest.seed = seed;
  for (const auto& [k, v] : tensors) {
    s.tensors[py::cast<std::string>(k)] = to_tensor(py::cast<FloatArray>(v));
  }
  return s;
}

py::dict provenance_dict(const Provenance& p) {
  py::dict d;
  d["layer"] = p.layer;
  d["from"] = std::string(to_string(p.from));
  d["to"] = std::string(to_string(p.to));
  d["note"] = p.note;
  d["ranks"] = p.ranks;
  d["bottleneck_rank"] = p.bottleneck_rank;
  d["compresses"] = p.compresses;
  d["reconstruction_error"] = p.reconstruction_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cdpkit, m) {
  m.doc() = "Cost model, factorization and forward passes for convolutional layers";

  static py::exception<ParseError> parse_error(m, "ParseError", PyExc_ValueError);
  static py::exception<DirectiveRejected> rejected(m, "DirectiveRejected", PyExc_ValueError);
  static py::exception<WeightMismatch> mismatch(m, "WeightMismatch", PyExc_ValueError);
  static py::exception<UnsupportedConfiguration> unsupported(m, "UnsupportedConfiguration",
                                                             PyExc_NotImplementedError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      PyErr_SetString(parse_error.ptr(), e.what());
    } catch (const DirectiveRejected& e) {
      PyErr_SetString(rejected.ptr(), e.what());
    } catch (const WeightMismatch& e) {
      PyErr_SetString(mismatch.ptr(), e.what());
    } catch (const UnsupportedConfiguration& e) {
      PyErr_SetString(unsupported.ptr(), e.what());
    }
  });

  py::enum_<LayerKind>(m, "LayerKind")
      .value("Standard", LayerKind::Standard)
      .value("DepthSep", LayerKind::DepthSep)
      .value("Tucker2", LayerKind::Tucker2)
      .value("Tdw", LayerKind::Tdw)
      .value("Cdp", LayerKind::Cdp);
  py::enum_<Activation>(m, "Activation")
      .value("None_", Activation::None)
      .value("ReLU", Activation::ReLU);

  py::class_<LayerSpec>(m, "LayerSpec")
      .def(py::init<>())
      .def_readwrite("kind", &LayerSpec::kind)
      .def_readwrite("kernel", &LayerSpec::kernel)
      .def_readwrite("in_channels", &LayerSpec::in_channels)
      .def_readwrite("out_channels", &LayerSpec::out_channels)
      .def_readwrite("stride", &LayerSpec::stride)
      .def_readwrite("padding", &LayerSpec::padding)
      .def_readwrite("alpha", &LayerSpec::alpha)
      .def_readwrite("width_multiplier", &LayerSpec::width_multiplier)
      .def_readwrite("rank_in", &LayerSpec::rank_in)
      .def_readwrite("rank_out", &LayerSpec::rank_out)
      .def_readwrite("bottleneck_rank", &LayerSpec::bottleneck_rank)
      .def_readwrite("activation", &LayerSpec::activation)
      .def_readwrite("inner_activation", &LayerSpec::inner_activation)
      .def_readwrite("group", &LayerSpec::group)
      .def("validate", &LayerSpec::validate)
      .def("weight_shapes", [](const LayerSpec& s) { return weight_shapes(s); })
      .def("__repr__", [](const LayerSpec& s) {
        std::ostringstream o;
        o << "LayerSpec(" << to_string(s.kind) << ", k=" << s.kernel << ", c=" << s.in_channels
          << ", n=" << s.out_channels << ")";
        return o.str();
      });

  py::class_<ArchSpec>(m, "ArchSpec")
      .def(py::init<>())
      .def_readwrite("name", &ArchSpec::name)
      .def_property(
          "input",
          [](const ArchSpec& a) { return py::make_tuple(a.input.width, a.input.height, a.input.channels); },
          [](ArchSpec& a, std::tuple<std::size_t, std::size_t, std::size_t> v) {
            a.input = {std::get<0>(v), std::get<1>(v), std::get<2>(v)};
          })
      .def_readwrite("layers", &ArchSpec::layers)
      .def_readwrite("pools", &ArchSpec::pools)
      .def("validate", &ArchSpec::validate)
      .def("to_json", [](const ArchSpec& a) { return arch_to_json(a); })
      .def("output_shape", [](const ArchSpec& a) { return output_shape(a); });

  m.def("l2net", &l2net_spec, "Built-in L2Net architecture");
  m.def("superpoint", &superpoint_spec, "Built-in SuperPoint encoder and detector head");
  m.def("load_arch", &load_arch, py::arg("name_or_path"));
  m.def("arch_from_json", &arch_from_json, py::arg("text"));

  py::class_<LayerCost>(m, "LayerCost")
      .def_readonly("params", &LayerCost::params)
      .def_readonly("flops", &LayerCost::flops)
      .def_readonly("activation_flops", &LayerCost::activation_flops);
  py::class_<CostReport>(m, "CostReport")
      .def_readonly("total_params", &CostReport::total_params)
      .def_readonly("total_flops", &CostReport::total_flops)
      .def_readonly("group_flops", &CostReport::group_flops)
      .def_readonly("compression_ratio", &CostReport::compression_ratio)
      .def_readonly("speedup", &CostReport::speedup)
      .def_property_readonly("layers", [](const CostReport& r) {
        std::vector<LayerCost> out;
        for (const auto& e : r.per_layer) out.push_back(e.cost);
        return out;
      });

  m.def(
      "model_cost",
      [](const ArchSpec& arch, const std::optional<ArchSpec>& baseline, bool include_activations) {
        return model_cost(arch, baseline, CostPolicy{include_activations});
      },
      py::arg("arch"), py::arg("baseline") = py::none(), py::arg("include_activations") = false);

  py::class_<AlphaBound>(m, "AlphaBound")
      .def_readonly("feasible", &AlphaBound::feasible)
      .def_readonly("exact", &AlphaBound::exact)
      .def_readonly("simplified", &AlphaBound::simplified)
      .def_readonly("max_alpha", &AlphaBound::max_alpha);
  m.def("alpha_bound", &alpha_bound, py::arg("K"), py::arg("C"), py::arg("N"));

  m.def(
      "apply_plan",
      [](const ArchSpec& arch, const std::string& plan) {
        const auto r = apply_plan(arch, parse_plan(plan));
        py::list prov;
        for (const auto& p : r.provenance) prov.append(provenance_dict(p));
        return py::make_tuple(r.arch, prov);
      },
      py::arg("arch"), py::arg("plan"), "Rewritten architecture and per-layer provenance");

  m.def(
      "forward",
      [](const FloatArray& x, const LayerSpec& spec, const py::dict& weights) {
        return to_array(layer_forward(FeatureMap(to_tensor(x)), spec, to_weights(weights)).tensor());
      },
      py::arg("x"), py::arg("spec"), py::arg("weights"), "One layer on an [H, W, C] array");
  m.def(
      "model_forward",
      [](const FloatArray& x, const ArchSpec& arch, const py::dict& tensors) {
        const auto store = to_store(tensors, arch.name, 0);
        return to_array(model_forward(FeatureMap(to_tensor(x)), arch, layer_weights(arch, store)).tensor());
      },
      py::arg("x"), py::arg("arch"), py::arg("weights"));

  m.def(
      "svd",
      [](const FloatArray& a) {
        const auto r = svd(to_matrix(a));
        return py::make_tuple(to_array(r.u), r.s, to_array(r.v));
      },
      py::arg("m"), "Thin SVD: (u, s, v) with m = u diag(s) v^T");
  m.def(
      "evbmf_rank",
      [](const FloatArray& a) {
        const auto r = evbmf_rank(to_matrix(a));
        py::dict d;
        d["rank"] = r.rank;
        d["noise_variance"] = r.noise_variance;
        d["retained_singular_values"] = r.retained_singular_values;
        return d;
      },
      py::arg("m"));
  m.def(
      "hooi_tucker2",
      [](const FloatArray& kernel, std::size_t r1, std::size_t r2) {
        const auto f = hooi_tucker2(to_tensor(kernel), r1, r2);
        py::dict d;
        d["proj_in"] = to_array(f.proj_in);
        d["core"] = to_array(f.core);
        d["proj_out"] = to_array(f.proj_out);
        d["reconstruction_error"] = f.reconstruction_error;
        d["error_history"] = f.error_history;
        d["iterations"] = f.iterations;
        return d;
      },
      py::arg("kernel"), py::arg("rank_in"), py::arg("rank_out"));
  m.def(
      "merge_depthsep",
      [](const FloatArray& dw, const FloatArray& pw) {
        return to_array(merge_depthsep(to_tensor(dw), to_tensor(pw)));
      },
      py::arg("depthwise"), py::arg("pointwise"));
  m.def(
      "equivalent_kernel",
      [](const LayerSpec& spec, const py::dict& weights) {
        return to_array(equivalent_kernel(spec, to_weights(weights)));
      },
      py::arg("spec"), py::arg("weights"));

  m.def(
      "random_weights",
      [](const ArchSpec& arch, std::uint64_t seed) { return from_weights(random_weights(arch, seed).tensors); },
      py::arg("arch"), py::arg("seed") = 0);
  m.def(
      "read_weights",
      [](const std::string& path) {
        const auto s = read_weight_store(path);
        return py::make_tuple(from_weights(s.tensors), s.manifest.arch_name, s.manifest.seed);
      },
      py::arg("path"), "(tensors, arch_name, seed)");
  m.def(
      "write_weights",
      [](const std::string& path, const py::dict& tensors, const std::string& arch_name,
         std::uint64_t seed) { write_weight_store(to_store(tensors, arch_name, seed), path); },
      py::arg("path"), py::arg("tensors"), py::arg("arch_name") = "", py::arg("seed") = 0);

  m.def(
      "verify",
      [](const ArchSpec& arch, const py::dict& tensors, std::uint64_t seed, double tolerance) {
        VerifyOptions o;
        o.seed = seed;
        o.tolerance = tolerance;
        py::list out;
        for (const auto& c : verify_equivalences(arch, to_store(tensors, arch.name, seed), o)) {
          py::dict d;
          d["layer"] = c.layer;
          d["check"] = c.name;
          d["error"] = c.error;
          d["passed"] = c.passed;
          d["detail"] = c.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("arch"), py::arg("weights"), py::arg("seed") = 0, py::arg("tolerance") = 1e-4);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command line; returns (exit_code, stdout, stderr)");
}
