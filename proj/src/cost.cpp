#include "lrf/cost.hpp"

#include "lrf/error.hpp"

#include <algorithm>

namespace lrf {

std::string_view to_string(Objective objective) {
  switch (objective) {
  case Objective::Params: return "params";
  case Objective::Flops: return "flops";
  case Objective::OverallMem: return "overall_mem";
  }
  return "?";
}

Objective parse_objective(std::string_view text) {
  if (text == "params") return Objective::Params;
  if (text == "flops") return Objective::Flops;
  if (text == "overall_mem" || text == "mem" || text == "memory") return Objective::OverallMem;
  throw ParseError("unknown objective '" + std::string(text) + "'");
}

std::int64_t objective_value(const CostReport& cost, Objective objective) {
  switch (objective) {
  case Objective::Params: return cost.params;
  case Objective::Flops: return cost.flops;
  case Objective::OverallMem: return cost.overall_mem();
  }
  return 0;
}

LayerGeometry LayerGeometry::of(const LayerDesc& layer) {
  if (!is_decomposable(layer.kind))
    throw UnsupportedError("layer '" + layer.name + "' of kind " + std::string(to_string(layer.kind)) +
                           " has no factorization cost model");
  LayerGeometry g;
  g.original = cost_original(layer);
  if (layer.kind == LayerKind::FC) {
    g.fc = true;
    g.c = layer.weight_shape[0];
    g.f = layer.weight_shape[1];
    return g;
  }
  g.d = spatial_rank(layer);
  const auto k = kernel_dims(layer);
  const auto out = output_spatial(layer);
  g.c = in_channels(layer);
  g.f = out_channels(layer);
  for (std::size_t j = 0; j < g.d; ++j) {
    g.kernel[j] = k[j];
    g.in_spatial *= layer.input_spatial[j];
    g.out_spatial *= out[j];
  }
  for (std::size_t j = 0; j < g.d; ++j) {
    std::int64_t s = 1;
    for (std::size_t a = 0; a < g.d; ++a) s *= a <= j ? out[a] : layer.input_spatial[a];
    g.staged[j] = s;
  }
  return g;
}

CostReport cost_original(const LayerDesc& layer) {
  if (!is_decomposable(layer.kind))
    throw UnsupportedError("cost_original: layer '" + layer.name + "' is neither conv nor FC");
  return layer_cost(layer);
}

CostReport layer_cost(const LayerDesc& layer) {
  CostReport r;
  if (is_conv(layer.kind)) {
    std::int64_t out = 1;
    for (auto x : output_spatial(layer)) out *= x;
    r.params = layer.weight_shape.elements();
    r.flops = 2 * out * r.params;
    r.fm_elems = out * out_channels(layer);
  } else if (layer.kind == LayerKind::FC) {
    r.params = layer.weight_shape.elements();
    r.flops = 2 * r.params;
    r.fm_elems = layer.weight_shape[1];
  } else if (layer.kind == LayerKind::TTCore && layer.tt) {
    const auto& tt = *layer.tt;
    const auto t = static_cast<std::size_t>(tt.core);
    const auto d = tt.m_factors.size();
    // Input to core t is laid out as (m_t..m_d, n_1..n_{t-1}, r_{t-1}).
    std::int64_t m_rest = 1, n_done = 1;
    for (std::size_t k = t + 1; k < d; ++k) m_rest *= tt.m_factors[k];
    for (std::size_t k = 0; k <= t; ++k) n_done *= tt.n_factors[k];
    r.params = layer.weight_shape.elements();
    r.fm_elems = m_rest * n_done * tt.ranks[t + 1];
    r.flops = 2 * tt.ranks[t] * tt.ranks[t + 1] * tt.m_factors[t] * m_rest * n_done;
  }
  return r;
}

CostReport cost_factorized(const LayerGeometry& g, Method method, std::span<const std::int64_t> ranks,
                           const T3FPlan* plan) {
  CostReport r;
  switch (method) {
  case Method::Tucker: {
    const auto r1 = ranks[0], r2 = ranks[1];
    std::int64_t kprod = 1;
    for (std::size_t j = 0; j < g.d; ++j) kprod *= g.kernel[j];
    r.params = g.c * r1 + kprod * r1 * r2 + r2 * g.f;
    r.fm_elems = g.in_spatial * r1 + g.out_spatial * r2 + g.out_spatial * g.f;
    r.flops = 2 * (g.in_spatial * g.c * r1 + g.out_spatial * kprod * r1 * r2 + g.out_spatial * r2 * g.f);
    break;
  }
  case Method::CP: {
    const auto rank = ranks[0];
    r.params = g.c * rank + rank * g.f;
    r.fm_elems = g.in_spatial * rank + g.out_spatial * g.f;
    r.flops = 2 * (g.in_spatial * g.c * rank + g.out_spatial * rank * g.f);
    for (std::size_t j = 0; j < g.d; ++j) {
      r.params += g.kernel[j] * rank;
      r.fm_elems += g.staged[j] * rank;
      r.flops += 2 * g.staged[j] * g.kernel[j] * rank;
    }
    break;
  }
  case Method::TT: {
    const auto first = ranks[0], last = ranks[g.d];
    r.params = g.c * first + last * g.f;
    r.fm_elems = g.in_spatial * first + g.out_spatial * g.f;
    r.flops = 2 * (g.in_spatial * g.c * first + g.out_spatial * last * g.f);
    for (std::size_t j = 0; j < g.d; ++j) {
      const auto core = g.kernel[j] * ranks[j] * ranks[j + 1];
      r.params += core;
      r.fm_elems += g.staged[j] * ranks[j + 1];
      r.flops += 2 * g.staged[j] * core;
    }
    break;
  }
  case Method::SVD:
  case Method::QR: {
    const auto rank = ranks[0];
    r.params = (g.c + g.f) * rank;
    r.fm_elems = rank + g.f;
    r.flops = 2 * (g.c * rank + rank * g.f);
    break;
  }
  case Method::T3F: {
    const auto d = plan->order();
    // Contraction runs over cores 1..d; core t consumes (m_t..m_d)(n_1..n_{t-1})·r_{t-1}.
    std::int64_t m_rest = g.c, n_done = 1;
    for (std::size_t t = 0; t < d; ++t) {
      const auto r_prev = t == 0 ? 1 : ranks[t - 1];
      const auto r_next = t + 1 == d ? 1 : ranks[t];
      const auto mt = plan->m[t], nt = plan->n[t];
      const auto m_after = m_rest / mt;
      n_done *= nt;
      r.params += r_prev * mt * nt * r_next;
      r.flops += 2 * r_prev * r_next * m_rest * n_done;
      r.fm_elems += m_after * n_done * r_next;
      m_rest = m_after;
    }
    break;
  }
  }
  return r;
}

CostReport cost_factorized(const LayerDesc& layer, const RankConfig& config) {
  validate_rank_config(layer, config);
  const auto g = LayerGeometry::of(layer);
  return cost_factorized(g, config.method, config.ranks, config.plan ? &*config.plan : nullptr);
}

bool is_valid_solution(const LayerDesc& layer, const RankConfig& config) {
  return is_valid_cost(cost_original(layer), cost_factorized(layer, config));
}

double compression_ratio(const CostReport& original, const CostReport& factorized, Objective objective) {
  const auto base = objective_value(original, objective);
  if (base == 0) return 0.0;
  return 1.0 - static_cast<double>(objective_value(factorized, objective)) / static_cast<double>(base);
}

double compression_ratio(const LayerDesc& layer, const RankConfig& config, Objective objective) {
  return compression_ratio(cost_original(layer), cost_factorized(layer, config), objective);
}

ModelBreakdown model_breakdown(const ModelDesc& model) {
  ModelBreakdown b;
  for (const auto& layer : model.layers) {
    if (is_conv(layer.kind)) b.conv += layer_cost(layer);
    else if (layer.kind == LayerKind::FC || layer.kind == LayerKind::TTCore) b.fc += layer_cost(layer);
  }
  b.total = b.conv + b.fc;
  return b;
}

} // namespace lrf
