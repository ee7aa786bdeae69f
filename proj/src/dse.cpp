#include "lrf/dse.hpp"

#include "lrf/parallel.hpp"
#include "lrf/similarity.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sys/wait.h>
#include <unistd.h>

namespace lrf {

namespace {

std::int64_t chain_objective(const FactorizedLayer& f, Objective objective) {
  CostReport c;
  for (const auto& s : f.sub_layers) c += layer_cost(s.desc);
  return objective_value(c, objective);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "'\\''";
    else out += ch;
  }
  return out + "'";
}

/// A layer whose input or post-op output forks or merges sits in a
/// non-sequential part of the graph.
bool is_sequential(const ModelDesc& model, const LayerDesc& layer) {
  if (model.inputs_of(layer.name).size() > 1) return false;
  if (model.consumers_of(layer.name).size() > 1) return false;
  if (!layer.post_ops.empty() && model.consumers_of(layer.post_ops.back()).size() > 1) return false;
  return true;
}

FactorizedLayer decompose_tolerant(const LayerDesc& layer, const DenseTensor& weight, const RankConfig& cfg,
                                   const DecomposeOptions& options) {
  try {
    return decompose(layer, weight, cfg, options);
  } catch (const CpDivergenceError& e) {
    return e.best();
  }
}

} // namespace

void DseConfig::validate() const {
  auto fail = [](const std::string& m) { throw ParseError("invalid DSE configuration: " + m); };
  if (!(accuracy_drop_limit >= 0.0 && accuracy_drop_limit <= 1.0)) fail("accuracy drop limit must lie in [0, 1]");
  if (!(step_size > 0.0 && step_size < 100.0)) fail("step size must lie in (0, 100)");
  if (max_sol < 1) fail("max-sol must be at least 1");
  for (double t : {sim_threshold_sequential, sim_threshold_nonsequential})
    if (!(t > 0.0 && t <= 1.0)) fail("similarity thresholds must lie in (0, 1]");
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) fail("target fraction must lie in (0, 1]");
  if (sample_count < 1) fail("sample count must be positive");
  if (!method_targets_conv(conv_method)) fail("conv method must be tucker, cp or tt");
  if (method_targets_conv(fc_method)) fail("FC method must be svd, qr or t3f");
}

double builtin_eval_accuracy(const ModelDesc& model, const WeightStore& weights, const Dataset& data) {
  const auto n = data.size();
  if (n == 0) return 0.0;
  const auto out = run_model(model, weights, data.inputs);
  if (out.shape()[0] != n) throw ShapeError("evaluator: output batch differs from dataset size");
  const auto classes = out.size() / n;
  std::int64_t correct = 0;
  for (std::int64_t s = 0; s < n; ++s) {
    const auto row = out.data().subspan(static_cast<std::size_t>(s * classes), static_cast<std::size_t>(classes));
    const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
    const auto label = static_cast<std::int64_t>(std::llround(data.labels[s]));
    if (label < 0 || label >= classes)
      throw ShapeError("evaluator: label " + std::to_string(label) + " outside " + std::to_string(classes) + " classes");
    if (pred == label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

Evaluator builtin_evaluator(const Dataset& data) {
  return {[&data](const ModelDesc& m, const WeightStore& w) { return builtin_eval_accuracy(m, w, data); },
          "builtin-forward-accuracy (no fine-tuning)"};
}

Evaluator external_evaluator(std::string command) {
  auto fn = [command](const ModelDesc& m, const WeightStore& w) {
    static std::atomic<std::uint64_t> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("lrf-eval-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    const auto model_path = dir / "model.json";
    const auto weights_path = dir / "weights.lrfw";
    save_model(m, w, model_path, weights_path);
    const auto cmd = command + " " + shell_quote(model_path.string()) + " " + shell_quote(weights_path.string());
    std::string output;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw EvaluatorError("cannot start evaluator '" + command + "'");
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) output += buf;
    const int status = ::pclose(pipe);
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    if (status != 0)
      throw EvaluatorError("evaluator '" + command + "' exited with status " +
                           std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : status));
    try {
      std::size_t used = 0;
      const double acc = std::stod(output, &used);
      if (output.find_first_not_of(" \t\r\n", used) != std::string::npos || !(acc >= 0.0 && acc <= 1.0))
        throw std::invalid_argument("range");
      return acc;
    } catch (const std::exception&) {
      throw EvaluatorError("evaluator '" + command + "' printed '" + output + "', expected one accuracy in [0, 1]");
    }
  };
  return {fn, "external:" + command};
}

std::vector<std::string> select_target_layers(const ModelDesc& model, Objective objective, double fraction) {
  std::vector<std::pair<std::int64_t, std::size_t>> sized;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (is_decomposable(model.layers[i].kind))
      sized.emplace_back(objective_value(cost_original(model.layers[i]), objective), i);
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sized.size()) - 1e-9));
  std::stable_sort(sized.begin(), sized.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  sized.resize(std::min(keep, sized.size()));
  std::sort(sized.begin(), sized.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  std::vector<std::string> out;
  for (const auto& [cost, i] : sized) out.push_back(model.layers[i].name);
  return out;
}

std::map<std::string, FactorizedLayer> init_rank_one(const ModelDesc& model, const WeightStore& weights,
                                                     const std::vector<std::string>& targets, Method conv_method,
                                                     Method fc_method, const DecomposeOptions& options) {
  std::map<std::string, FactorizedLayer> out;
  for (const auto& name : targets) {
    const auto& layer = model.at(name);
    const auto method = layer.kind == LayerKind::FC ? fc_method : conv_method;
    try {
      out.emplace(name, decompose_tolerant(layer, weights.at(name), rank_one_config(layer, method), options));
    } catch (const Error& e) {
      throw NumericalError("rank-1 initialization of layer '" + name + "' failed: " + e.what());
    }
  }
  return out;
}

DseResult run_dse(const ModelDesc& model, const WeightStore& weights, const Dataset& dataset, const DseConfig& config,
                  const Evaluator& evaluator) {
  config.validate();
  const auto targets = select_target_layers(model, config.objective, config.target_fraction);
  const auto samples = select_samples(dataset.inputs, config.sample_count, config.seed);
  const auto capture = capture_feature_maps(model, weights, samples, targets);

  DseResult run;
  run.evaluator = evaluator.label;
  run.conv_method = config.conv_method;
  run.fc_method = config.fc_method;
  run.objective = config.objective;
  run.original_accuracy = evaluator.fn(model, weights);
  run.chains = init_rank_one(model, weights, targets, config.conv_method, config.fc_method, config.decompose);

  for (const auto& name : targets) {
    const auto& layer = model.at(name);
    LayerState st;
    st.name = name;
    st.sequential = is_sequential(model, layer);
    const auto& chain = run.chains.at(name);
    st.ranks = chain.rank_config;
    st.step = 100.0 * compression_ratio(cost_original(layer), cost_factorized(layer, chain.rank_config),
                                         config.objective);
    st.objective_cost = chain_objective(chain, config.objective);
    run.layers.push_back(std::move(st));
  }

  const double required = run.original_accuracy - config.accuracy_drop_limit;
  DseResult best;
  double best_accuracy = -std::numeric_limits<double>::infinity();
  std::uint64_t draw = 0;

  for (int iteration = 0;; ++iteration) {
    std::tie(run.model, run.weights) = apply_factorizations(model, weights, run.chains);
    const double accuracy = evaluator.fn(run.model, run.weights);
    run.final_accuracy = accuracy;
    AuditEntry entry;
    entry.iteration = iteration;
    entry.accuracy = accuracy;

    if (accuracy >= required) {
      run.met = true;
      entry.layers = run.layers;
      run.audit.push_back(std::move(entry));
      return run;
    }

    // Step 4: similarity of each still-moving layer; freeze the faithful ones.
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < run.layers.size(); ++i) {
      auto& st = run.layers[i];
      if (st.frozen || st.exhausted) continue;
      st.similarity = layer_similarity(run.chains.at(st.name), capture);
      const double threshold = st.sequential ? config.sim_threshold_sequential : config.sim_threshold_nonsequential;
      if (st.similarity >= threshold) st.frozen = true;
      else active.push_back(i);
    }
    entry.layers = run.layers;

    if (accuracy > best_accuracy) {
      best_accuracy = accuracy;
      best = run;
      best.audit.clear();
    }
    if (active.empty()) {
      run.audit.push_back(std::move(entry));
      best.audit = run.audit;
      throw ConstraintUnreachableError("accuracy " + std::to_string(accuracy) + " stays below the required " +
                                           std::to_string(required) + " with every target layer frozen or exhausted",
                                       std::move(best));
    }

    // Step 5: relax each active layer by one step (or more, past empty bands).
    for (auto i : active) {
      auto& st = run.layers[i];
      const auto& layer = model.at(st.name);
      const auto method = layer.kind == LayerKind::FC ? config.fc_method : config.conv_method;
      std::int64_t examined = 0;
      for (;;) {
        const double next = st.step - config.step_size;
        if (next <= 0.0) {
          st.exhausted = true;
          st.ranks.reset();
          st.objective_cost = objective_value(cost_original(layer), config.objective);
          run.chains.erase(st.name);
          break;
        }
        CandidateSelector selector(config.max_sol, config.seed ^ (0x9E3779B97F4A7C15ull * ++draw));
        enumerate_band(layer, method, config.objective, next / 100.0, st.step / 100.0, [&](const SolutionView& v) {
          selector.offer(v);
          return true;
        });
        st.step = next;
        const auto candidates = selector.result();
        if (candidates.empty()) continue;

        std::vector<std::optional<FactorizedLayer>> built(candidates.size());
        std::vector<double> sims(candidates.size(), -2.0);
        parallel_for(candidates.size(), config.threads, [&](std::size_t c) {
          try {
            built[c] = decompose_tolerant(layer, weights.at(st.name), candidates[c].ranks, config.decompose);
            sims[c] = layer_similarity(*built[c], capture);
          } catch (const NumericalError&) {
            built[c].reset();
          }
        });
        examined += static_cast<std::int64_t>(candidates.size());
        std::optional<std::size_t> pick;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
          if (!built[c]) continue;
          if (!pick || sims[c] > sims[*pick] ||
              (sims[c] == sims[*pick] && candidates[c].cost.flops < candidates[*pick].cost.flops))
            pick = c;
        }
        if (!pick) continue;
        st.ranks = candidates[*pick].ranks;
        st.similarity = sims[*pick];
        st.objective_cost = chain_objective(*built[*pick], config.objective);
        run.chains[st.name] = std::move(*built[*pick]);
        break;
      }
      entry.candidates[st.name] = examined;
    }
    run.audit.push_back(std::move(entry));
  }
}

std::int64_t layer_objective(const DseResult& run, const ModelDesc& original, const std::string& layer,
                             Objective objective) {
  auto it = run.chains.find(layer);
  if (it != run.chains.end()) return chain_objective(it->second, objective);
  return objective_value(cost_original(original.at(layer)), objective);
}

HybridResult hybrid_combine(const ModelDesc& model, const WeightStore& weights, const std::vector<DseResult>& runs,
                            Objective objective) {
  if (runs.size() < 2) throw GraphError("hybrid combination needs at least two finished runs");
  auto names_of = [](const DseResult& r) {
    std::vector<std::string> n;
    for (const auto& l : r.layers) n.push_back(l.name);
    std::sort(n.begin(), n.end());
    return n;
  };
  const auto targets = names_of(runs.front());
  for (const auto& r : runs)
    if (names_of(r) != targets) throw GraphError("hybrid combination: runs disagree on the target layer set");
  HybridResult h;
  for (const auto& name : targets) {
    std::size_t best = 0;
    auto best_cost = layer_objective(runs[0], model, name, objective);
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const auto c = layer_objective(runs[i], model, name, objective);
      if (c < best_cost) {
        best = i;
        best_cost = c;
      }
    }
    h.chosen_run[name] = best;
    h.layer_objective[name] = best_cost;
    h.total_objective += best_cost;
    auto it = runs[best].chains.find(name);
    if (it != runs[best].chains.end()) h.chains.emplace(name, it->second);
  }
  std::tie(h.model, h.weights) = apply_factorizations(model, weights, h.chains);
  return h;
}

std::string audit_to_json(const DseResult& result) {
  using nlohmann::json;
  auto layer_json = [](const LayerState& s) {
    json j{{"layer", s.name},        {"step", s.step},           {"frozen", s.frozen},
           {"exhausted", s.exhausted}, {"sequential", s.sequential}, {"similarity", s.similarity},
           {"objective_cost", s.objective_cost}};
    if (s.ranks) {
      j["method"] = std::string(to_string(s.ranks->method));
      j["ranks"] = s.ranks->ranks;
      if (s.ranks->plan) j["plan"] = {{"m", s.ranks->plan->m}, {"n", s.ranks->plan->n}};
    } else {
      j["method"] = "original";
    }
    return j;
  };
  json j;
  j["evaluator"] = result.evaluator;
  j["objective"] = std::string(to_string(result.objective));
  j["conv_method"] = std::string(to_string(result.conv_method));
  j["fc_method"] = std::string(to_string(result.fc_method));
  j["original_accuracy"] = result.original_accuracy;
  j["final_accuracy"] = result.final_accuracy;
  j["constraint_met"] = result.met;
  j["iterations"] = json::array();
  for (const auto& e : result.audit) {
    json it{{"iteration", e.iteration}, {"accuracy", e.accuracy}, {"layers", json::array()}};
    for (const auto& s : e.layers) it["layers"].push_back(layer_json(s));
    if (!e.candidates.empty()) it["candidates_examined"] = e.candidates;
    j["iterations"].push_back(std::move(it));
  }
  j["final_layers"] = json::array();
  for (const auto& s : result.layers) j["final_layers"].push_back(layer_json(s));
  return j.dump(2) + "\n";
}

} // namespace lrf
