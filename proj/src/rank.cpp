#include "lrf/rank.hpp"

#include "lrf/error.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace lrf {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 6> kMethodNames{{
    {Method::Tucker, "tucker"},
    {Method::CP, "cp"},
    {Method::TT, "tt"},
    {Method::SVD, "svd"},
    {Method::QR, "qr"},
    {Method::T3F, "t3f"},
}};

void factorize_into(std::int64_t value, std::size_t parts, std::int64_t min_factor,
                    std::vector<std::int64_t>& prefix, std::vector<std::vector<std::int64_t>>& out) {
  if (parts == 1) {
    if (value >= min_factor) {
      prefix.push_back(value);
      out.push_back(prefix);
      prefix.pop_back();
    }
    return;
  }
  for (std::int64_t f = min_factor; f <= value; ++f) {
    if (value % f != 0) continue;
    prefix.push_back(f);
    factorize_into(value / f, parts - 1, min_factor, prefix, out);
    prefix.pop_back();
  }
}

std::string rank_error_prefix(const LayerDesc& layer, Method method) {
  return std::string(to_string(method)) + " on layer '" + layer.name + "': ";
}

} // namespace

std::string_view to_string(Method method) {
  for (const auto& [m, name] : kMethodNames)
    if (m == method) return name;
  return "?";
}

Method parse_method(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& [m, name] : kMethodNames)
    if (name == lower) return m;
  throw ParseError("unknown method '" + std::string(text) + "'");
}

bool method_targets_conv(Method method) {
  return method == Method::Tucker || method == Method::CP || method == Method::TT;
}

bool method_supports(Method method, const LayerDesc& layer) {
  if (!is_decomposable(layer.kind)) return false;
  return method_targets_conv(method) == (layer.kind != LayerKind::FC);
}

std::int64_t cp_max_rank(const LayerDesc& layer) {
  const auto& dims = layer.weight_shape.dims();
  const auto biggest = *std::max_element(dims.begin(), dims.end());
  return product(dims) / biggest;
}

std::vector<RankRange> rank_bounds(const LayerDesc& layer, Method method) {
  if (!method_supports(method, layer))
    throw UnsupportedError(std::string(to_string(method)) + " cannot factorize " +
                           std::string(to_string(layer.kind)) + " layer '" + layer.name + "'");
  switch (method) {
  case Method::Tucker: return {{1, in_channels(layer)}, {1, out_channels(layer)}};
  case Method::CP: return {{1, cp_max_rank(layer)}};
  case Method::TT: {
    // Modes ordered (C, K1..Kd, F); one rank per cut between adjacent modes.
    std::vector<std::int64_t> modes{in_channels(layer)};
    for (auto k : kernel_dims(layer)) modes.push_back(k);
    modes.push_back(out_channels(layer));
    std::vector<RankRange> out;
    for (std::size_t cut = 1; cut < modes.size(); ++cut) {
      const auto left = product(std::span(modes).first(cut));
      const auto right = product(std::span(modes).subspan(cut));
      out.push_back({1, std::min(left, right)});
    }
    return out;
  }
  case Method::SVD:
  case Method::QR: return {{1, std::min(layer.weight_shape[0], layer.weight_shape[1])}};
  case Method::T3F: throw UnsupportedError("T3F rank bounds depend on the plan; use t3f_rank_bounds");
  }
  return {};
}

std::vector<RankRange> t3f_rank_bounds(const T3FPlan& plan) {
  std::vector<std::int64_t> merged;
  for (std::size_t t = 0; t < plan.order(); ++t) merged.push_back(plan.m[t] * plan.n[t]);
  std::vector<RankRange> out;
  for (std::size_t cut = 1; cut < merged.size(); ++cut) {
    const auto left = product(std::span(merged).first(cut));
    const auto right = product(std::span(merged).subspan(cut));
    out.push_back({1, std::min(left, right)});
  }
  return out;
}

std::vector<std::vector<std::int64_t>> ordered_factorizations(std::int64_t value, std::size_t parts,
                                                              std::int64_t min_factor) {
  std::vector<std::vector<std::int64_t>> out;
  if (parts == 0 || value < 1) return out;
  std::vector<std::int64_t> prefix;
  factorize_into(value, parts, min_factor, prefix, out);
  return out;
}

std::vector<T3FPlan> t3f_plans(std::int64_t m, std::int64_t n) {
  std::vector<T3FPlan> plans;
  for (std::size_t d : {2u, 3u}) {
    const auto ms = ordered_factorizations(m, d);
    const auto ns = ordered_factorizations(n, d);
    for (const auto& a : ms)
      for (const auto& b : ns) plans.push_back({a, b});
  }
  return plans;
}

std::string RankConfig::to_string() const {
  std::ostringstream s;
  s << lrf::to_string(method) << "(";
  for (std::size_t i = 0; i < ranks.size(); ++i) s << (i ? "," : "") << ranks[i];
  s << ")";
  if (plan) {
    s << " m=";
    for (std::size_t i = 0; i < plan->m.size(); ++i) s << (i ? "x" : "") << plan->m[i];
    s << " n=";
    for (std::size_t i = 0; i < plan->n.size(); ++i) s << (i ? "x" : "") << plan->n[i];
  }
  return s.str();
}

void validate_rank_config(const LayerDesc& layer, const RankConfig& config) {
  const auto where = rank_error_prefix(layer, config.method);
  if (!method_supports(config.method, layer))
    throw UnsupportedError(where + "unsupported layer kind " + std::string(to_string(layer.kind)));
  std::vector<RankRange> bounds;
  if (config.method == Method::T3F) {
    if (!config.plan) throw RankError(where + "T3F requires a shape plan");
    const auto& p = *config.plan;
    if (p.m.empty() || p.m.size() != p.n.size()) throw RankError(where + "plan factor lists differ in length");
    for (auto v : p.m)
      if (v < 1) throw RankError(where + "plan factors must be positive");
    for (auto v : p.n)
      if (v < 1) throw RankError(where + "plan factors must be positive");
    if (product(p.m) != layer.weight_shape[0] || product(p.n) != layer.weight_shape[1])
      throw RankError(where + "plan products do not match (" + std::to_string(layer.weight_shape[0]) + ", " +
                      std::to_string(layer.weight_shape[1]) + ")");
    bounds = t3f_rank_bounds(p);
  } else {
    if (config.plan) throw RankError(where + "only T3F takes a shape plan");
    bounds = rank_bounds(layer, config.method);
  }
  if (config.ranks.size() != bounds.size())
    throw RankError(where + "expected " + std::to_string(bounds.size()) + " rank value(s), got " +
                    std::to_string(config.ranks.size()));
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto r = config.ranks[i];
    if (r < bounds[i].lo || r > bounds[i].hi)
      throw RankError(where + "rank " + std::to_string(i + 1) + " = " + std::to_string(r) + " outside [" +
                      std::to_string(bounds[i].lo) + ", " + std::to_string(bounds[i].hi) + "]");
  }
}

RankConfig rank_one_config(const LayerDesc& layer, Method method) {
  RankConfig cfg;
  cfg.method = method;
  if (method == Method::T3F) {
    if (!method_supports(method, layer))
      throw UnsupportedError("t3f cannot factorize layer '" + layer.name + "'");
    const auto plans = t3f_plans(layer.weight_shape[0], layer.weight_shape[1]);
    cfg.plan = plans.empty() ? T3FPlan{{layer.weight_shape[0]}, {layer.weight_shape[1]}} : plans.front();
    cfg.ranks.assign(cfg.plan->order() - 1, 1);
    return cfg;
  }
  cfg.ranks.assign(rank_bounds(layer, method).size(), 1);
  return cfg;
}

} // namespace lrf
