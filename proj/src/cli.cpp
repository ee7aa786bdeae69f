#include "lrf/cli.hpp"

#include "lrf/dse.hpp"
#include "lrf/error.hpp"
#include "lrf/linalg.hpp"
#include "lrf/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace lrf {

namespace {

using nlohmann::ordered_json;

/// Argument combinations CLI11 cannot express; reported like parse errors.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::int64_t limit = -1;
  double tol = 0.5; // percent
  std::string out;
};

/// A single layer named on the command line, or one picked from a model.
struct LayerArgs {
  std::vector<std::int64_t> dims;
  std::vector<std::int64_t> input;
  std::vector<std::int64_t> stride;
  std::string padding = "same";
  std::string model;
  std::string name;

  void attach(CLI::App* cmd) {
    cmd->add_option("--layer", dims, "Weight shape: M,N for FC or K1..Kd,C,F for conv")->delimiter(',');
    cmd->add_option("--input", input, "Input spatial extent per axis (one value broadcasts)")->delimiter(',');
    cmd->add_option("--stride", stride, "Stride per axis (one value broadcasts)")->delimiter(',');
    cmd->add_option("--padding", padding, "same or valid");
    cmd->add_option("--model", model, "Model descriptor JSON");
    cmd->add_option("--name", name, "Layer name inside --model");
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Machine output goes to --out when given, otherwise to stdout.
void emit(const Globals& g, const std::string& text, std::ostream& out) {
  if (g.out.empty()) out << text;
  else write_text(g.out, text);
}

std::vector<std::int64_t> broadcast(std::vector<std::int64_t> v, std::size_t d, std::int64_t fallback,
                                    const char* flag) {
  if (v.empty()) return std::vector<std::int64_t>(d, fallback);
  if (v.size() == 1) return std::vector<std::int64_t>(d, v[0]);
  if (v.size() != d) throw UsageError(std::string(flag) + " needs 1 or " + std::to_string(d) + " values");
  return v;
}

LayerDesc layer_from_dims(const LayerArgs& a) {
  const auto n = a.dims.size();
  if (n < 2 || n > 5) throw UsageError("--layer needs 2 (FC) or 3 to 5 (conv) dimensions");
  LayerDesc l;
  l.name = "layer";
  l.weight_shape = TensorShape(a.dims);
  if (n == 2) {
    l.kind = LayerKind::FC;
  } else {
    const auto d = n - 2;
    l.kind = d == 1 ? LayerKind::Conv1D : d == 2 ? LayerKind::Conv2D : LayerKind::Conv3D;
    l.input_spatial = broadcast(a.input, d, 8, "--input");
    l.stride = broadcast(a.stride, d, 1, "--stride");
    l.padding = parse_padding(a.padding);
  }
  validate_layer(l);
  return l;
}

ModelDesc load_descriptor(const std::string& path) {
  auto m = model_from_json(read_text(path));
  m.validate();
  return m;
}

/// The layer selected by --layer or by --model/--name.
LayerDesc resolve_layer(const LayerArgs& a) {
  if (!a.dims.empty() && !a.model.empty()) throw UsageError("give either --layer or --model, not both");
  if (!a.dims.empty()) return layer_from_dims(a);
  if (a.model.empty()) throw UsageError("a layer is required: --layer or --model with --name");
  if (a.name.empty()) throw UsageError("--model needs --name to pick a layer");
  return load_descriptor(a.model).at(a.name);
}

/// Every decomposable layer of --model, or the single --layer.
std::vector<LayerDesc> resolve_layers(const LayerArgs& a) {
  if (!a.model.empty() && a.name.empty()) {
    std::vector<LayerDesc> out;
    for (const auto& l : load_descriptor(a.model).layers)
      if (is_decomposable(l.kind)) out.push_back(l);
    return out;
  }
  return {resolve_layer(a)};
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

std::vector<Method> supported_methods(const LayerDesc& layer) {
  std::vector<Method> out;
  for (auto m : {Method::Tucker, Method::CP, Method::TT, Method::SVD, Method::QR, Method::T3F})
    if (method_supports(m, layer)) out.push_back(m);
  return out;
}

std::vector<std::int64_t> parse_factors(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream s(text);
  std::string part;
  while (std::getline(s, part, 'x')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw UsageError("bad factor '" + part + "' in --plan");
    }
  }
  return out;
}

/// "2x200:10x12" gives m = (2, 200), n = (10, 12).
T3FPlan parse_plan(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("--plan must look like m1xm2:n1xn2");
  return {parse_factors(text.substr(0, colon)), parse_factors(text.substr(colon + 1))};
}

DenseTensor random_weight(const LayerDesc& layer, std::uint64_t seed) {
  DenseTensor w{layer.weight_shape};
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : w.data()) v = dist(rng);
  return w;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------- commands

int run_analyze(const Globals& g, const LayerArgs& la, const std::string& fix, double value,
                const std::string& minimize, std::ostream& out) {
  const auto layer = resolve_layer(la);
  ordered_json methods = ordered_json::array();
  for (auto m : supported_methods(layer)) {
    ordered_json j = {{"method", to_string(m)}, {"space_size", space_size(layer, m)}};
    if (m == Method::T3F) {
      j["plans"] = t3f_plans(layer.weight_shape[0], layer.weight_shape[1]).size();
    } else {
      ordered_json b = ordered_json::array();
      for (const auto& r : rank_bounds(layer, m)) b.push_back({r.lo, r.hi});
      j["rank_bounds"] = std::move(b);
    }
    methods.push_back(std::move(j));
  }
  const auto orig = cost_original(layer);
  ordered_json doc = {{"layer", layer.name},
                      {"kind", to_string(layer.kind)},
                      {"weight_shape", layer.weight_shape.dims()},
                      {"original",
                       {{"params", orig.params},
                        {"fm", orig.fm_elems},
                        {"overall_mem", orig.overall_mem()},
                        {"flops", orig.flops}}},
                      {"methods", std::move(methods)}};
  if (!fix.empty()) {
    QueryConstraint q{parse_objective(fix), value / 100.0, g.tol / 100.0, parse_objective(minimize)};
    const auto ms = supported_methods(layer);
    ordered_json res = ordered_json::array();
    for (const auto& [m, s] : constrained_query(layer, ms, q)) {
      ordered_json j = {{"method", to_string(m)}};
      const auto band = solutions_in_band(layer, m, q.fixed, q.value, q.tol);
      j["band_count"] = band.size();
      if (!band.empty()) {
        double lo = 1e300, hi = -1e300;
        for (const auto& b : band) {
          lo = std::min(lo, b.ratio(q.minimize));
          hi = std::max(hi, b.ratio(q.minimize));
        }
        j["band_range"] = {lo, hi};
      }
      if (s) j["best"] = {{"ranks", s->ranks.to_string()}, {"ratio", s->ratio(q.minimize)}};
      else j["best"] = nullptr;
      res.push_back(std::move(j));
    }
    doc["query"] = {{"fixed", to_string(q.fixed)}, {"value", q.value}, {"tol", q.tol},
                    {"minimize", to_string(q.minimize)}, {"results", std::move(res)}};
  }
  emit(g, doc.dump(2) + "\n", out);
  if (!g.out.empty())
    out << layer.name << ": params " << orig.params << ", flops " << orig.flops << ", fm " << orig.fm_elems << "\n";
  return 0;
}

int run_enumerate(const Globals& g, const LayerArgs& la, const std::vector<std::string>& names, std::ostream& out) {
  const auto layer = resolve_layer(la);
  const auto methods = names.empty() ? supported_methods(layer) : parse_methods(names);
  std::ostringstream csv;
  const auto rows = export_solution_space(layer, methods, csv, g.limit);
  emit(g, csv.str(), out);
  if (!g.out.empty()) out << rows << " valid solutions written to " << g.out << "\n";
  return 0;
}

int run_census(const Globals& g, const LayerArgs& la, const std::vector<std::string>& names,
               const std::vector<double>& ratios, bool timing, std::ostream& out) {
  const auto layer = resolve_layer(la);
  const auto methods = names.empty() ? supported_methods(layer) : parse_methods(names);
  std::vector<double> targets;
  for (auto r : ratios) targets.push_back(r / 100.0);
  std::vector<SpaceCensus> cs;
  for (auto m : methods) cs.push_back(census(layer, m, targets, g.tol / 100.0));
  emit(g, census_to_json(layer, cs, timing), out);
  if (!g.out.empty())
    for (const auto& c : cs) out << to_string(c.method) << ": all " << c.all_count << ", valid " << c.valid_count << "\n";
  return 0;
}

struct DecomposeArgs {
  std::string method;
  std::vector<std::int64_t> ranks;
  std::string plan;
  std::string weights;
  std::string out_model, out_weights;
};

int run_decompose(const Globals& g, const LayerArgs& la, const DecomposeArgs& da, std::ostream& out) {
  RankConfig cfg;
  cfg.method = parse_method(da.method);
  cfg.ranks = da.ranks;
  if (!da.plan.empty()) cfg.plan = parse_plan(da.plan);

  std::optional<std::pair<ModelDesc, WeightStore>> loaded;
  LayerDesc layer;
  DenseTensor weight;
  if (!la.model.empty()) {
    if (da.weights.empty()) throw UsageError("--model needs --weights for decompose");
    if (la.name.empty()) throw UsageError("--model needs --name to pick a layer");
    loaded = load_model(la.model, da.weights);
    layer = loaded->first.at(la.name);
    weight = loaded->second.at(la.name);
  } else {
    layer = resolve_layer(la);
    weight = random_weight(layer, g.seed);
  }
  if (cfg.ranks.empty() && !cfg.plan) throw UsageError("--rank is required");
  validate_rank_config(layer, cfg);

  DecomposeOptions opt;
  opt.seed = g.seed;
  const auto f = decompose(layer, weight, cfg, opt);
  const auto rebuilt = reconstruct(f, layer);
  double diff = 0;
  for (std::size_t i = 0; i < weight.data().size(); ++i) {
    const double d = static_cast<double>(rebuilt.data()[i]) - weight.data()[i];
    diff += d * d;
  }
  const auto rel = std::sqrt(diff) / std::max(linalg::frobenius(weight.data()), 1e-300);

  Solution s;
  s.ranks = cfg;
  s.cost = cost_factorized(layer, cfg);
  const auto orig = cost_original(layer);
  s.valid = is_valid_cost(orig, s.cost);
  s.ratio_params = compression_ratio(orig, s.cost, Objective::Params);
  s.ratio_flops = compression_ratio(orig, s.cost, Objective::Flops);
  s.ratio_mem = compression_ratio(orig, s.cost, Objective::OverallMem);
  auto doc = ordered_json::parse(solution_to_json(layer, s));
  doc["relative_error"] = rel;
  doc["fit"] = f.fit;
  doc["converged"] = f.converged;
  ordered_json subs = ordered_json::array();
  for (const auto& sl : f.sub_layers)
    subs.push_back({{"name", sl.desc.name}, {"kind", to_string(sl.desc.kind)}, {"weight_shape", sl.weight.shape().dims()}});
  doc["sub_layers"] = std::move(subs);
  emit(g, doc.dump(2) + "\n", out);

  if (!da.out_model.empty() || !da.out_weights.empty()) {
    if (!loaded) throw UsageError("--out-model needs --model and --weights");
    if (da.out_model.empty() || da.out_weights.empty()) throw UsageError("give both --out-model and --out-weights");
    const auto [m, w] = apply_factorizations(loaded->first, loaded->second, {{layer.name, f}});
    save_model(m, w, da.out_model, da.out_weights);
  }
  if (!g.out.empty())
    out << cfg.to_string() << ": relative error " << fixed(rel, 6) << ", params " << s.cost.params << "\n";
  return 0;
}

struct DseArgs {
  std::string model, weights, dataset;
  std::string objective = "params";
  double step_size = 5.0;
  std::size_t max_sol = 3;
  double accuracy_limit = 1.5; // percent
  std::string conv_method = "tucker", fc_method = "svd";
  std::int64_t samples = 1000;
  double target_fraction = 90.0; // percent
  double sim_seq = 0.92, sim_nonseq = 0.96;
  std::string eval_cmd;
  std::string out_model, out_weights;

  void attach(CLI::App* cmd, bool with_methods) {
    cmd->add_option("--model", model, "Model descriptor JSON")->required();
    cmd->add_option("--weights", weights, "Model weights (LRFW)")->required();
    cmd->add_option("--dataset", dataset, "Calibration/evaluation set (LRFW)")->required();
    cmd->add_option("--objective", objective, "params, flops or overall_mem");
    cmd->add_option("--step-size", step_size, "Percent relaxation per iteration");
    cmd->add_option("--max-sol", max_sol, "Candidates per layer per step");
    cmd->add_option("--accuracy-limit", accuracy_limit, "Allowed accuracy drop in percent");
    if (with_methods) {
      cmd->add_option("--method", conv_method, "Method for conv layers");
      cmd->add_option("--fc-method", fc_method, "Method for FC layers");
    }
    cmd->add_option("--samples", samples, "Calibration samples for similarity");
    cmd->add_option("--target-fraction", target_fraction, "Percent of layers to compress");
    cmd->add_option("--sim-sequential", sim_seq, "Similarity threshold for sequential layers");
    cmd->add_option("--sim-nonsequential", sim_nonseq, "Similarity threshold for branching layers");
    cmd->add_option("--eval-cmd", eval_cmd, "External evaluator: <cmd> <model.json> <weights.lrfw>");
    cmd->add_option("--out-model", out_model, "Where to write the factorized descriptor");
    cmd->add_option("--out-weights", out_weights, "Where to write the factorized weights");
  }

  DseConfig config(const Globals& g) const {
    DseConfig c;
    c.objective = parse_objective(objective);
    c.step_size = step_size;
    c.max_sol = max_sol;
    c.accuracy_drop_limit = accuracy_limit / 100.0;
    c.conv_method = parse_method(conv_method);
    c.fc_method = parse_method(fc_method);
    c.sample_count = samples;
    c.target_fraction = target_fraction / 100.0;
    c.sim_threshold_sequential = sim_seq;
    c.sim_threshold_nonsequential = sim_nonseq;
    c.seed = g.seed;
    c.decompose.seed = g.seed;
    c.threads = g.threads;
    return c;
  }

  void save(const ModelDesc& m, const WeightStore& w) const {
    if (out_model.empty() != out_weights.empty()) throw UsageError("give both --out-model and --out-weights");
    if (!out_model.empty()) save_model(m, w, out_model, out_weights);
  }
};

void summarize(const DseResult& r, std::ostream& out) {
  out << "evaluator " << r.evaluator << ": accuracy " << fixed(r.original_accuracy) << " -> "
      << fixed(r.final_accuracy) << (r.met ? " (constraint met)" : " (constraint NOT met)") << ", "
      << r.audit.size() << " iterations\n";
  for (const auto& l : r.layers)
    out << "  " << l.name << ": " << (l.ranks ? l.ranks->to_string() : std::string("original")) << "\n";
}

int run_dse_cmd(const Globals& g, const DseArgs& a, std::ostream& out) {
  const auto [model, weights] = load_model(a.model, a.weights);
  const auto data = read_dataset(a.dataset);
  const auto cfg = a.config(g);
  const auto eval = a.eval_cmd.empty() ? builtin_evaluator(data) : external_evaluator(a.eval_cmd);
  try {
    const auto r = run_dse(model, weights, data, cfg, eval);
    emit(g, audit_to_json(r), out);
    a.save(r.model, r.weights);
    if (!g.out.empty()) summarize(r, out);
    return 0;
  } catch (const ConstraintUnreachableError& e) {
    const auto& best = e.best();
    emit(g, audit_to_json(best), out);
    a.save(best.model, best.weights);
    throw;
  }
}

int run_hybrid(const Globals& g, const DseArgs& a, const std::vector<std::string>& runs, std::ostream& out) {
  const auto [model, weights] = load_model(a.model, a.weights);
  const auto data = read_dataset(a.dataset);
  const auto eval = a.eval_cmd.empty() ? builtin_evaluator(data) : external_evaluator(a.eval_cmd);
  std::vector<DseResult> results;
  ordered_json run_docs = ordered_json::array();
  for (const auto& spec : runs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw UsageError("--runs entries look like conv_method:fc_method");
    auto cfg = a.config(g);
    cfg.conv_method = parse_method(spec.substr(0, colon));
    cfg.fc_method = parse_method(spec.substr(colon + 1));
    DseResult r;
    try {
      r = run_dse(model, weights, data, cfg, eval);
    } catch (const ConstraintUnreachableError& e) {
      r = e.best();
    }
    run_docs.push_back({{"run", spec},
                        {"met", r.met},
                        {"final_accuracy", r.final_accuracy},
                        {"total_objective", [&] {
                           std::int64_t t = 0;
                           for (const auto& l : r.layers) t += layer_objective(r, model, l.name, cfg.objective);
                           return t;
                         }()}});
    results.push_back(std::move(r));
  }
  const auto objective = parse_objective(a.objective);
  const auto h = hybrid_combine(model, weights, results, objective);
  ordered_json layers = ordered_json::array();
  for (const auto& [name, idx] : h.chosen_run)
    layers.push_back({{"layer", name}, {"run", runs[idx]}, {"objective", h.layer_objective.at(name)}});
  const double acc = eval.fn(h.model, h.weights);
  ordered_json doc = {{"objective", to_string(objective)},
                      {"evaluator", eval.label},
                      {"runs", std::move(run_docs)},
                      {"layers", std::move(layers)},
                      {"total_objective", h.total_objective},
                      {"accuracy", acc}};
  emit(g, doc.dump(2) + "\n", out);
  a.save(h.model, h.weights);
  if (!g.out.empty()) out << "hybrid total " << to_string(objective) << " " << h.total_objective << ", accuracy " << fixed(acc) << "\n";
  return 0;
}

int run_score(const Globals& g, const LayerArgs& la, const std::string& method_name, std::optional<double> time,
              bool timing, std::ostream& out) {
  const auto method = parse_method(method_name);
  const auto layers = resolve_layers(la);
  auto in = measure_method(layers, method);
  if (time) {
    in.decomposition_time = *time;
  } else if (timing) {
    double total = 0;
    std::int64_t n = 0;
    for (const auto& l : layers) {
      if (!method_supports(method, l)) continue;
      const auto w = random_weight(l, g.seed);
      const auto cfg = rank_one_config(l, method);
      const auto t0 = std::chrono::steady_clock::now();
      DecomposeOptions opt;
      opt.seed = g.seed;
      (void)decompose(l, w, cfg, opt);
      total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ++n;
    }
    in.decomposition_time = total / static_cast<double>(std::max<std::int64_t>(n, 1));
  }
  const auto card = qualitative_score(in);
  emit(g, scorecard_to_json(method, in, card), out);
  if (!g.out.empty())
    for (const auto& r : card.rows) out << to_string(r.metric) << ": " << r.level << "\n";
  return 0;
}

int run_breakdown(const Globals& g, const std::string& model_path, std::ostream& out) {
  const auto model = load_descriptor(model_path);
  emit(g, breakdown_to_json(model), out);
  if (!g.out.empty()) {
    const auto b = model_breakdown(model);
    out << "conv params " << b.conv.params << ", fc params " << b.fc.params << ", total flops " << b.total.flops << "\n";
  }
  return 0;
}

} // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank factorization design space exploration", "lrf"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores; LRF_THREADS overrides)");
  app.add_option("--limit", g.limit, "Row cap for enumerations (-1 = none)");
  app.add_option("--tol", g.tol, "Band half-width in percent");
  app.add_option("--out", g.out, "Machine-readable output path (stdout when absent)");

  LayerArgs la;
  std::vector<std::string> methods;
  std::vector<double> ratios{25, 60, 85};
  bool timing = false;
  std::string fix, minimize = "flops";
  double fix_value = 0;
  DecomposeArgs da;
  DseArgs dse_args;
  std::vector<std::string> runs{"tucker:svd", "cp:qr", "tt:t3f"};
  std::optional<double> decomposition_time;
  std::string model_path;

  auto* analyze = app.add_subcommand("analyze", "Original costs, rank bounds and optional constrained query");
  la.attach(analyze);
  analyze->add_option("--fix", fix, "Objective held fixed for the query");
  analyze->add_option("--value", fix_value, "Target reduction of --fix in percent");
  analyze->add_option("--minimize", minimize, "Objective minimized inside the band");

  auto* enumerate = app.add_subcommand("enumerate", "CSV of every valid solution");
  la.attach(enumerate);
  enumerate->add_option("--methods,--method", methods, "Methods (default: all supported)")->delimiter(',');

  auto* census_cmd = app.add_subcommand("census", "Exploration-space counts per method");
  la.attach(census_cmd);
  census_cmd->add_option("--methods,--method", methods, "Methods (default: all supported)")->delimiter(',');
  census_cmd->add_option("--ratios", ratios, "Parameter reduction targets in percent")->delimiter(',');
  census_cmd->add_flag("--timing", timing, "Include generation time");

  auto* decompose_cmd = app.add_subcommand("decompose", "Factorize one layer at given ranks");
  la.attach(decompose_cmd);
  decompose_cmd->add_option("--method", da.method, "Factorization method")->required();
  decompose_cmd->add_option("--rank,--ranks", da.ranks, "Rank tuple")->delimiter(',');
  decompose_cmd->add_option("--plan", da.plan, "T3F plan m1xm2:n1xn2");
  decompose_cmd->add_option("--weights", da.weights, "Weights for --model");
  decompose_cmd->add_option("--out-model", da.out_model, "Write the rewired descriptor");
  decompose_cmd->add_option("--out-weights", da.out_weights, "Write the rewired weights");

  auto* dse_cmd = app.add_subcommand("dse", "Similarity-guided rank search for one method pair");
  dse_args.attach(dse_cmd, true);

  auto* hybrid_cmd = app.add_subcommand("hybrid", "Per-layer best of several DSE runs");
  dse_args.attach(hybrid_cmd, false);
  hybrid_cmd->add_option("--runs", runs, "conv_method:fc_method pairs")->delimiter(',');

  auto* score_cmd = app.add_subcommand("score", "Qualitative 1-5 scorecard for one method");
  la.attach(score_cmd);
  score_cmd->add_option("--method", da.method, "Factorization method")->required();
  score_cmd->add_option("--decomposition-time", decomposition_time, "Measured decomposition time in seconds");
  score_cmd->add_flag("--timing", timing, "Measure decomposition time at rank one");

  auto* breakdown_cmd = app.add_subcommand("breakdown", "Per-layer and per-family model costs");
  breakdown_cmd->add_option("--model", model_path, "Model descriptor JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (analyze->parsed()) return run_analyze(g, la, fix, fix_value, minimize, out);
    if (enumerate->parsed()) return run_enumerate(g, la, methods, out);
    if (census_cmd->parsed()) return run_census(g, la, methods, ratios, timing, out);
    if (decompose_cmd->parsed()) return run_decompose(g, la, da, out);
    if (dse_cmd->parsed()) return run_dse_cmd(g, dse_args, out);
    if (hybrid_cmd->parsed()) return run_hybrid(g, dse_args, runs, out);
    if (score_cmd->parsed()) return run_score(g, la, da.method, decomposition_time, timing, out);
    if (breakdown_cmd->parsed()) return run_breakdown(g, model_path, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

} // namespace lrf
