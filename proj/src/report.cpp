#include "lrf/report.hpp"

#include "lrf/error.hpp"

#include <json.hpp>

#include <algorithm>

namespace lrf {

namespace {

using nlohmann::ordered_json;

/// Level for metrics where larger is better: thresholds are the lower bounds
/// of levels 5, 4, 3 and 2.
int level_descending(double v, double t5, double t4, double t3, double t2) {
  if (v >= t5) return 5;
  if (v >= t4) return 4;
  if (v >= t3) return 3;
  if (v >= t2) return 2;
  return 1;
}

/// Level for metrics where smaller is better: thresholds are the lower bounds
/// of levels 4, 3, 2 and 1.
int level_ascending(double v, double t4, double t3, double t2, double t1) {
  if (v >= t1) return 1;
  if (v >= t2) return 2;
  if (v >= t3) return 3;
  if (v >= t4) return 4;
  return 5;
}

ordered_json cost_json(const CostReport& c) {
  return {{"params", c.params}, {"fm", c.fm_elems}, {"overall_mem", c.overall_mem()}, {"flops", c.flops}};
}

ordered_json layer_json(const LayerDesc& layer) {
  ordered_json j = {{"name", layer.name}, {"kind", to_string(layer.kind)}, {"weight_shape", layer.weight_shape.dims()}};
  if (is_conv(layer.kind)) {
    j["input_spatial"] = layer.input_spatial;
    j["stride"] = layer.stride;
    j["padding"] = to_string(layer.padding);
  }
  return j;
}

} // namespace

std::string_view to_string(Flexibility f) {
  switch (f) {
  case Flexibility::ShapeRanks: return "shape+ranks";
  case Flexibility::PerDimRanks: return "per-dim-ranks";
  case Flexibility::MultipleRanks: return "multiple-ranks";
  case Flexibility::FixedRank: return "fixed-rank";
  case Flexibility::Rigid: return "rigid";
  }
  return "?";
}

Flexibility parse_flexibility(std::string_view text) {
  for (auto f : {Flexibility::ShapeRanks, Flexibility::PerDimRanks, Flexibility::MultipleRanks, Flexibility::FixedRank,
                 Flexibility::Rigid})
    if (to_string(f) == text) return f;
  throw ParseError("unknown flexibility class '" + std::string(text) + "'");
}

Flexibility method_flexibility(Method method) {
  switch (method) {
  case Method::T3F: return Flexibility::ShapeRanks;
  case Method::Tucker: return Flexibility::PerDimRanks;
  case Method::TT: return Flexibility::MultipleRanks;
  case Method::CP: return Flexibility::FixedRank;
  case Method::SVD:
  case Method::QR: return Flexibility::Rigid;
  }
  return Flexibility::Rigid;
}

std::string_view to_string(ScoreMetric metric) {
  switch (metric) {
  case ScoreMetric::RankConfigurations: return "rank_configurations";
  case ScoreMetric::BestParams: return "best_param_count";
  case ScoreMetric::WorstParams: return "worst_param_count";
  case ScoreMetric::BestFlops: return "best_flops_count";
  case ScoreMetric::WorstFlops: return "worst_flops_count";
  case ScoreMetric::BestMem: return "best_overall_mem";
  case ScoreMetric::WorstMem: return "worst_overall_mem";
  case ScoreMetric::ExplorationSpace: return "exploration_space";
  case ScoreMetric::ParamCoverage: return "param_coverage";
  case ScoreMetric::FlopsCoverage: return "flops_coverage";
  case ScoreMetric::Flexibility: return "flexibility";
  case ScoreMetric::DecompositionTime: return "decomposition_time";
  }
  return "?";
}

int score_level(ScoreMetric metric, double raw) {
  switch (metric) {
  case ScoreMetric::RankConfigurations: return level_descending(raw, 5, 4, 2, 1);
  case ScoreMetric::BestParams:
  case ScoreMetric::BestFlops: return level_descending(raw, 98, 94, 90, 80);
  case ScoreMetric::WorstParams:
  case ScoreMetric::WorstFlops: return level_descending(raw, 20, 10, 6, 2);
  case ScoreMetric::BestMem: return level_descending(raw, 90, 60, 30, 0);
  case ScoreMetric::WorstMem:
    // No increase at all is the top level; any positive increase starts at 4.
    if (raw <= 0) return 5;
    return level_ascending(raw, 0, 25, 75, 150);
  case ScoreMetric::ExplorationSpace: return level_descending(raw, 1e6, 1e4, 1e3, 1e2);
  case ScoreMetric::ParamCoverage:
  case ScoreMetric::FlopsCoverage: return level_descending(raw, 98, 93, 85, 70);
  case ScoreMetric::DecompositionTime: return level_ascending(raw, 5, 30, 60, 300);
  case ScoreMetric::Flexibility: break;
  }
  throw ParseError("flexibility is categorical; score it by class");
}

int score_level(Flexibility flexibility) {
  switch (flexibility) {
  case Flexibility::ShapeRanks: return 5;
  case Flexibility::PerDimRanks: return 4;
  case Flexibility::MultipleRanks: return 3;
  case Flexibility::FixedRank: return 2;
  case Flexibility::Rigid: return 1;
  }
  return 1;
}

QualitativeScorecard qualitative_score(const ScoreInputs& in) {
  const std::array<std::pair<ScoreMetric, const std::optional<double>*>, kScoreMetricCount> numeric = {{
      {ScoreMetric::RankConfigurations, &in.rank_configurations},
      {ScoreMetric::BestParams, &in.best_params},
      {ScoreMetric::WorstParams, &in.worst_params},
      {ScoreMetric::BestFlops, &in.best_flops},
      {ScoreMetric::WorstFlops, &in.worst_flops},
      {ScoreMetric::BestMem, &in.best_mem_improvement},
      {ScoreMetric::WorstMem, &in.worst_mem_increase},
      {ScoreMetric::ExplorationSpace, &in.exploration_space},
      {ScoreMetric::ParamCoverage, &in.param_coverage},
      {ScoreMetric::FlopsCoverage, &in.flops_coverage},
      {ScoreMetric::Flexibility, nullptr},
      {ScoreMetric::DecompositionTime, &in.decomposition_time},
  }};
  QualitativeScorecard card;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const auto [metric, value] = numeric[i];
    auto& row = card.rows[i];
    row.metric = metric;
    if (metric == ScoreMetric::Flexibility) {
      if (!in.flexibility) throw ParseError("missing metric: flexibility");
      row.raw = static_cast<double>(*in.flexibility);
      row.level = score_level(*in.flexibility);
      continue;
    }
    if (!*value) throw ParseError("missing metric: " + std::string(to_string(metric)));
    row.raw = **value;
    row.level = score_level(metric, row.raw);
  }
  return card;
}

std::int64_t free_rank_count(const LayerDesc& layer, Method method) {
  if (method != Method::T3F) return static_cast<std::int64_t>(rank_bounds(layer, method).size());
  std::int64_t best = 0;
  for (const auto& p : t3f_plans(layer.weight_shape[0], layer.weight_shape[1]))
    best = std::max<std::int64_t>(best, static_cast<std::int64_t>(p.order()) - 1);
  return best;
}

ScoreInputs measure_method(std::span<const LayerDesc> layers, Method method) {
  double ranks = 0, es = 0, bp = 0, wp = 0, bf = 0, wf = 0, bm = 0, wm = 0;
  std::int64_t n = 0;
  for (const auto& layer : layers) {
    if (!method_supports(method, layer)) continue;
    const auto e = ratio_extremes(layer, method);
    if (e.valid_count == 0) continue;
    ++n;
    ranks += static_cast<double>(free_rank_count(layer, method));
    es += static_cast<double>(space_size(layer, method));
    bp += 100 * e.best_params;
    wp += 100 * e.worst_params;
    bf += 100 * e.best_flops;
    wf += 100 * e.worst_flops;
    bm += 100 * e.best_mem;
    wm += -100 * e.worst_mem;
  }
  if (n == 0) throw UnsupportedError(std::string(to_string(method)) + " has no valid solution on any given layer");
  const auto d = static_cast<double>(n);
  ScoreInputs in;
  in.rank_configurations = ranks / d;
  in.exploration_space = es / d;
  in.best_params = bp / d;
  in.worst_params = wp / d;
  in.best_flops = bf / d;
  in.worst_flops = wf / d;
  in.best_mem_improvement = bm / d;
  in.worst_mem_increase = wm / d;
  in.param_coverage = (bp - wp) / d;
  in.flops_coverage = (bf - wf) / d;
  in.flexibility = method_flexibility(method);
  return in;
}

std::string scorecard_to_json(Method method, const ScoreInputs& inputs, const QualitativeScorecard& card) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : card.rows) {
    ordered_json j = {{"metric", to_string(r.metric)}};
    if (r.metric == ScoreMetric::Flexibility) j["raw"] = to_string(*inputs.flexibility);
    else j["raw"] = r.raw;
    j["level"] = r.level;
    rows.push_back(std::move(j));
  }
  return ordered_json{{"method", to_string(method)}, {"scores", std::move(rows)}}.dump(2) + "\n";
}

std::string census_to_json(const LayerDesc& layer, std::span<const SpaceCensus> censuses, bool timing) {
  ordered_json methods = ordered_json::array();
  for (const auto& c : censuses) {
    ordered_json buckets = ordered_json::array();
    for (const auto& b : c.buckets) buckets.push_back({{"target", b.target}, {"count", b.count}});
    ordered_json j = {{"method", to_string(c.method)},
                      {"all", c.all_count},
                      {"valid", c.valid_count},
                      {"buckets", std::move(buckets)}};
    if (timing) j["generation_time_s"] = c.generation_time;
    methods.push_back(std::move(j));
  }
  return ordered_json{{"layer", layer_json(layer)}, {"census", std::move(methods)}}.dump(2) + "\n";
}

std::string breakdown_to_json(const ModelDesc& model) {
  ordered_json layers = ordered_json::array();
  for (const auto& l : model.layers) {
    if (!has_weights(l.kind) || l.kind == LayerKind::BatchNorm) continue;
    auto j = layer_json(l);
    j["cost"] = cost_json(layer_cost(l));
    layers.push_back(std::move(j));
  }
  const auto b = model_breakdown(model);
  return ordered_json{{"layers", std::move(layers)},
                      {"conv", cost_json(b.conv)},
                      {"fc", cost_json(b.fc)},
                      {"total", cost_json(b.total)}}
             .dump(2) +
         "\n";
}

std::string solution_to_json(const LayerDesc& layer, const Solution& s) {
  ordered_json j = {{"layer", layer_json(layer)}, {"method", to_string(s.method())}, {"ranks", s.ranks.ranks}};
  if (s.ranks.plan) j["plan"] = {{"m", s.ranks.plan->m}, {"n", s.ranks.plan->n}};
  j["original"] = cost_json(cost_original(layer));
  j["cost"] = cost_json(s.cost);
  j["valid"] = s.valid;
  j["ratio"] = {{"params", s.ratio_params}, {"flops", s.ratio_flops}, {"overall_mem", s.ratio_mem}};
  return j.dump(2) + "\n";
}

} // namespace lrf
