#pragma once

#include "lrf/decompose.hpp"
#include "lrf/model.hpp"
#include "lrf/serialize.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lrf {

/// Runs one layer on a batch (B, sample dims...). `weight` may be null for
/// unweighted kinds; Add and Concat take several inputs.
DenseTensor forward_layer(const LayerDesc& layer, const DenseTensor* weight,
                          std::span<const DenseTensor* const> inputs);
DenseTensor forward_layer(const LayerDesc& layer, const DenseTensor* weight, const DenseTensor& input);

/// Chains forward_layer over the sub-layers (their post-ops are not applied).
DenseTensor forward_factorized(const FactorizedLayer& f, const DenseTensor& input);

/// Every layer's output for one forward pass of `inputs` through the model.
std::map<std::string, DenseTensor> run_model_all(const ModelDesc& model, const WeightStore& weights,
                                                 const DenseTensor& inputs);
DenseTensor run_model(const ModelDesc& model, const WeightStore& weights, const DenseTensor& inputs);

/// The layer's input batch in the original model and its output after the
/// layer's post-ops, with what is needed to replay those post-ops.
struct CaptureEntry {
  DenseTensor input;
  DenseTensor reference;
  std::vector<LayerDesc> post_ops;
  std::vector<DenseTensor> post_weights; // empty tensor for unweighted post-ops
};

struct FeatureMapCapture {
  std::map<std::string, CaptureEntry> entries;
  std::int64_t batch = 0;
};

FeatureMapCapture capture_feature_maps(const ModelDesc& model, const WeightStore& weights,
                                       const DenseTensor& samples, const std::vector<std::string>& targets);

/// `count` samples drawn without replacement by a seeded generator, kept in
/// dataset order. All samples when count ≥ dataset size.
DenseTensor select_samples(const DenseTensor& inputs, std::int64_t count, std::uint64_t seed);

/// a·b / (‖a‖‖b‖); 0 when either vector has zero norm.
double cosine(std::span<const float> a, std::span<const float> b);

/// Mean per-sample cosine between the factorized chain's post-op output and
/// the captured reference.
double layer_similarity(const FactorizedLayer& f, const FeatureMapCapture& capture);
/// Same measure for an arbitrary replacement output batch of `layer`.
double batch_similarity(const DenseTensor& output, const CaptureEntry& entry);

} // namespace lrf
