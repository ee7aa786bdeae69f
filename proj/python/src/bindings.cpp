#include "lrf/cli.hpp"
#include "lrf/cost.hpp"
#include "lrf/decompose.hpp"
#include "lrf/error.hpp"
#include "lrf/explorer.hpp"
#include "lrf/report.hpp"
#include "lrf/serialize.hpp"

#include <json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

namespace py = pybind11;
using namespace lrf;

namespace {

/// A single layer object in the descriptor format.
LayerDesc parse_layer(const std::string& text) {
  nlohmann::json layer;
  try {
    layer = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed layer JSON: ") + e.what());
  }
  const auto name = layer.value("name", std::string("layer"));
  layer["name"] = name;
  const nlohmann::json model{{"layers", {layer}}, {"input", name}, {"output", name}};
  auto m = model_from_json(model.dump());
  validate_layer(m.layers.front());
  return m.layers.front();
}

RankConfig make_config(const LayerDesc& layer, const std::string& method, std::vector<std::int64_t> ranks,
                       const std::optional<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>>& plan) {
  RankConfig cfg{parse_method(method), std::move(ranks), {}};
  if (plan) cfg.plan = T3FPlan{plan->first, plan->second};
  validate_rank_config(layer, cfg);
  return cfg;
}

std::vector<Method> parse_methods(const LayerDesc& layer, const std::vector<std::string>& names) {
  std::vector<Method> out;
  if (names.empty()) {
    for (auto m : {Method::Tucker, Method::CP, Method::TT, Method::SVD, Method::QR, Method::T3F})
      if (method_supports(m, layer)) out.push_back(m);
    return out;
  }
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

Solution evaluate(const LayerDesc& layer, const RankConfig& cfg) {
  const auto orig = cost_original(layer);
  Solution s;
  s.ranks = cfg;
  s.cost = cost_factorized(layer, cfg);
  s.valid = is_valid_cost(orig, s.cost);
  s.ratio_params = compression_ratio(orig, s.cost, Objective::Params);
  s.ratio_flops = compression_ratio(orig, s.cost, Objective::Flops);
  s.ratio_mem = compression_ratio(orig, s.cost, Objective::OverallMem);
  return s;
}

DenseTensor to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::int64_t> dims(a.shape(), a.shape() + a.ndim());
  return DenseTensor(TensorShape(dims), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const DenseTensor& t) {
  const auto& dims = t.shape().dims();
  py::array_t<float> out(std::vector<py::ssize_t>(dims.begin(), dims.end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Low-rank factorization cost model, exploration and decomposition";
  py::register_exception<Error>(m, "LrfError", PyExc_RuntimeError);

  m.def(
      "original_cost",
      [](const std::string& layer) {
        const auto c = cost_original(parse_layer(layer));
        return py::dict(py::arg("params") = c.params, py::arg("fm") = c.fm_elems, py::arg("flops") = c.flops,
                        py::arg("overall_mem") = c.overall_mem());
      },
      py::arg("layer"));

  m.def(
      "solution",
      [](const std::string& layer, const std::string& method, std::vector<std::int64_t> ranks,
         std::optional<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>> plan) {
        const auto l = parse_layer(layer);
        return solution_to_json(l, evaluate(l, make_config(l, method, std::move(ranks), plan)));
      },
      py::arg("layer"), py::arg("method"), py::arg("ranks"), py::arg("plan") = py::none(),
      "Cost, validity and reduction ratios of one rank configuration, as JSON text.");

  m.def(
      "space_size", [](const std::string& layer, const std::string& method) {
        return space_size(parse_layer(layer), parse_method(method));
      },
      py::arg("layer"), py::arg("method"));

  m.def(
      "census",
      [](const std::string& layer, const std::vector<std::string>& methods, const std::vector<double>& ratios,
         double tol) {
        const auto l = parse_layer(layer);
        std::vector<SpaceCensus> out;
        {
          py::gil_scoped_release release;
          for (auto method : parse_methods(l, methods)) out.push_back(census(l, method, ratios, tol));
        }
        return census_to_json(l, out, false);
      },
      py::arg("layer"), py::arg("methods") = std::vector<std::string>{},
      py::arg("ratios") = std::vector<double>{0.25, 0.6, 0.85}, py::arg("tol") = 0.005);

  m.def(
      "constrained_query",
      [](const std::string& layer, const std::vector<std::string>& methods, const std::string& fix, double value,
         double tol, const std::string& minimize) {
        const auto l = parse_layer(layer);
        const auto ms = parse_methods(l, methods);
        const auto res = constrained_query(l, ms, {parse_objective(fix), value, tol, parse_objective(minimize)});
        py::dict out;
        for (const auto& [method, sol] : res)
          out[py::str(std::string(to_string(method)))] =
              sol ? py::object(py::str(solution_to_json(l, *sol))) : py::object(py::none());
        return out;
      },
      py::arg("layer"), py::arg("methods") = std::vector<std::string>{}, py::arg("fix") = "params",
      py::arg("value") = 0.6, py::arg("tol") = 0.005, py::arg("minimize") = "flops",
      "Per method, the band solution minimizing `minimize` as JSON text, or None.");

  m.def(
      "decompose",
      [](const std::string& layer, const py::array_t<float, py::array::c_style | py::array::forcecast>& weight,
         const std::string& method, std::vector<std::int64_t> ranks,
         std::optional<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>> plan, std::uint64_t seed) {
        const auto l = parse_layer(layer);
        const auto w = to_tensor(weight);
        const auto cfg = make_config(l, method, std::move(ranks), plan);
        DecomposeOptions opt;
        opt.seed = seed;
        FactorizedLayer f;
        DenseTensor rec;
        {
          py::gil_scoped_release release;
          f = decompose(l, w, cfg, opt);
          rec = reconstruct(f, l);
        }
        double num = 0, den = 0;
        for (std::int64_t i = 0; i < w.size(); ++i) {
          num += (double(rec[i]) - w[i]) * (double(rec[i]) - w[i]);
          den += double(w[i]) * w[i];
        }
        py::list subs;
        for (const auto& s : f.sub_layers)
          subs.append(py::dict(py::arg("name") = s.desc.name, py::arg("kind") = std::string(to_string(s.desc.kind)),
                               py::arg("weight") = s.weight.size() ? py::object(to_array(s.weight)) : py::none()));
        return py::dict(py::arg("params") = f.parameter_count(), py::arg("fit") = f.fit,
                        py::arg("converged") = f.converged,
                        py::arg("relative_error") = den > 0 ? std::sqrt(num / den) : 0.0,
                        py::arg("reconstruction") = to_array(rec), py::arg("sub_layers") = subs);
      },
      py::arg("layer"), py::arg("weight"), py::arg("method"), py::arg("ranks"), py::arg("plan") = py::none(),
      py::arg("seed") = 0);

  m.def("score_level", [](const std::string& metric, double raw) {
    for (std::size_t i = 0; i < kScoreMetricCount; ++i) {
      const auto id = static_cast<ScoreMetric>(i);
      if (to_string(id) != metric) continue;
      return score_level(id, raw);
    }
    throw ParseError("unknown metric: " + metric);
  }, py::arg("metric"), py::arg("raw"));
  m.def(
      "flexibility_level", [](const std::string& cls) { return score_level(parse_flexibility(cls)); },
      py::arg("flexibility"));

  m.def(
      "scorecard",
      [](const std::vector<std::string>& layers, const std::string& method, double decomposition_time) {
        std::vector<LayerDesc> ls;
        for (const auto& l : layers) ls.push_back(parse_layer(l));
        const auto mth = parse_method(method);
        auto inputs = measure_method(ls, mth);
        inputs.decomposition_time = decomposition_time;
        return scorecard_to_json(mth, inputs, qualitative_score(inputs));
      },
      py::arg("layers"), py::arg("method"), py::arg("decomposition_time"));

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli_dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI invocation in-process; returns (exit_code, stdout, stderr).");
}
