#pragma once

#include "lrf/error.hpp"
#include "lrf/model.hpp"
#include "lrf/rank.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace lrf {

/// One replacement layer and its weights (empty for reshapes).
struct SubLayer {
  LayerDesc desc;
  DenseTensor weight;

  friend bool operator==(const SubLayer&, const SubLayer&) = default;
};

/// Ordered chain of sub-layers standing in for one original layer. Feeding the
/// original input through the chain yields the original output shape.
struct FactorizedLayer {
  Method method = Method::SVD;
  RankConfig rank_config;
  std::string source_layer;
  std::vector<SubLayer> sub_layers;
  /// 1 − ‖W − Ŵ‖/‖W‖ for the iterative methods; 1 for exact ones at full rank.
  double fit = 0.0;
  /// False when an iterative method hit its cap before meeting its tolerance.
  bool converged = true;
  /// CP: fit after each accepted ALS sweep. Tucker: fit after each HOOI sweep.
  std::vector<double> fit_history;

  std::int64_t parameter_count() const;
  friend bool operator==(const FactorizedLayer&, const FactorizedLayer&) = default;
};

struct DecomposeOptions {
  int tucker_max_iters = 50;
  double tucker_tol = 1e-7;
  int cp_max_iters = 500;
  double cp_tol = 1e-8;
  /// Consecutive fit decreases that count as ALS divergence.
  int cp_divergence_window = 5;
  /// Seeds the random columns CP initialization needs when r exceeds a mode.
  std::uint64_t seed = 0;
};

/// ALS diverged; carries the best factorization seen before giving up.
class CpDivergenceError : public NumericalError {
public:
  CpDivergenceError(const std::string& what, FactorizedLayer best)
      : NumericalError(what), best_(std::make_shared<FactorizedLayer>(std::move(best))) {}
  const FactorizedLayer& best() const { return *best_; }

private:
  std::shared_ptr<const FactorizedLayer> best_;
};

FactorizedLayer svd_truncate(const LayerDesc& layer, const DenseTensor& weight, std::int64_t rank);
FactorizedLayer qr_truncate(const LayerDesc& layer, const DenseTensor& weight, std::int64_t rank);
FactorizedLayer tucker2_decompose(const LayerDesc& layer, const DenseTensor& weight, std::int64_t r1,
                                  std::int64_t r2, const DecomposeOptions& options = {});
FactorizedLayer cp_decompose(const LayerDesc& layer, const DenseTensor& weight, std::int64_t rank,
                             const DecomposeOptions& options = {});
FactorizedLayer tt_decompose(const LayerDesc& layer, const DenseTensor& weight,
                             const std::vector<std::int64_t>& ranks);
FactorizedLayer t3f_decompose(const LayerDesc& layer, const DenseTensor& weight, const T3FPlan& plan,
                              const std::vector<std::int64_t>& ranks);

/// Dispatches on `config.method` after validating the ranks.
FactorizedLayer decompose(const LayerDesc& layer, const DenseTensor& weight, const RankConfig& config,
                          const DecomposeOptions& options = {});

/// Dense weight of the original shape equal to the composition of the factors.
DenseTensor reconstruct(const FactorizedLayer& f, const LayerDesc& original);

/// Replaces each named layer by its chain. Edges, post-ops, and the model's
/// input/output designation follow the replacement; untouched layers keep
/// their weights.
std::pair<ModelDesc, WeightStore> apply_factorizations(const ModelDesc& model, const WeightStore& weights,
                                                       const std::map<std::string, FactorizedLayer>& chains);

} // namespace lrf
