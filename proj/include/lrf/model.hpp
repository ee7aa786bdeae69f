#pragma once

#include "lrf/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lrf {

enum class LayerKind {
  Conv1D,
  Conv2D,
  Conv3D,
  DepthwiseConv,
  FC,
  Activation,
  Pool,
  BatchNorm,
  Reshape,
  Flatten,
  Add,
  Concat,
  TTCore,
};

enum class Padding { Same, Valid };
enum class ActivationFn { Linear, Relu, Tanh, Sigmoid, Softmax };
enum class PoolMode { Max, Avg };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Padding padding);
std::string_view to_string(ActivationFn fn);
std::string_view to_string(PoolMode mode);
LayerKind parse_layer_kind(std::string_view text);
Padding parse_padding(std::string_view text);
ActivationFn parse_activation(std::string_view text);
PoolMode parse_pool_mode(std::string_view text);

/// One core of a TT-matrix factorized FC layer. The core contracts input mode
/// `core` and emits output mode `core`; `ranks` carries r_0..r_d with the
/// boundary ranks fixed to one.
struct TTCoreSpec {
  std::vector<std::int64_t> m_factors;
  std::vector<std::int64_t> n_factors;
  std::vector<std::int64_t> ranks;
  std::int64_t core = 0;

  friend bool operator==(const TTCoreSpec&, const TTCoreSpec&) = default;
};

/// Framework-neutral layer description.
///
/// Conv weights are ordered (K1..Kd, C/groups, F); DepthwiseConv stores
/// (K1..Kd, 1, C); FC stores (M inputs, N outputs). Feature maps are
/// channels-last: a conv sample is (X, Y[, Z], C).
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::FC;
  TensorShape weight_shape;               // empty for unweighted kinds
  std::vector<std::int64_t> input_spatial; // X, Y[, Z]
  std::vector<std::int64_t> stride;        // per spatial axis
  Padding padding = Padding::Valid;
  std::vector<std::string> post_ops;

  std::int64_t groups = 1;
  ActivationFn activation = ActivationFn::Linear;
  PoolMode pool_mode = PoolMode::Max;
  std::vector<std::int64_t> pool_size;
  std::vector<std::int64_t> target_shape; // Reshape: per-sample target
  double epsilon = 1e-3;                   // BatchNorm
  std::optional<TTCoreSpec> tt;

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

bool is_conv(LayerKind kind);
/// Conv1D/2D/3D and FC: the kinds a factorization may target.
bool is_decomposable(LayerKind kind);
bool has_weights(LayerKind kind);

std::size_t spatial_rank(const LayerDesc& layer);
std::int64_t in_channels(const LayerDesc& layer);
std::int64_t out_channels(const LayerDesc& layer);
std::vector<std::int64_t> kernel_dims(const LayerDesc& layer);

/// Output extent of one spatial axis. Same: ceil(X/s); valid: floor((X-K)/s)+1.
std::int64_t output_extent(std::int64_t input, std::int64_t kernel, std::int64_t stride,
                           Padding padding);
std::vector<std::int64_t> output_spatial(const LayerDesc& layer);

/// Throws ShapeError when the descriptor's own invariants do not hold.
void validate_layer(const LayerDesc& layer);

class ModelDesc {
public:
  std::vector<LayerDesc> layers;
  /// Predecessors of each layer, keyed by layer name. Missing key = no inputs.
  std::map<std::string, std::vector<std::string>> predecessors;
  std::string input;
  std::string output;
  std::map<std::string, std::string> metadata;
  /// Per-sample input extent; derived from the input layer when empty.
  std::vector<std::int64_t> input_shape;

  const LayerDesc* find(std::string_view name) const;
  const LayerDesc& at(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  const std::vector<std::string>& inputs_of(std::string_view name) const;
  std::vector<std::string> consumers_of(std::string_view name) const;

  /// Layer names ordered so every predecessor precedes its consumers. Ties keep
  /// declaration order. Throws GraphError on cycles.
  std::vector<std::string> topological_order() const;

  std::vector<std::int64_t> sample_shape() const;

  /// Checks names, edges, acyclicity, single input/output and per-layer shapes.
  void validate() const;

  friend bool operator==(const ModelDesc&, const ModelDesc&) = default;
};

/// Layer name -> dense weights.
class WeightStore {
public:
  bool contains(std::string_view name) const;
  const DenseTensor& at(std::string_view name) const;
  void set(std::string name, DenseTensor tensor);
  void erase(std::string_view name);
  const std::map<std::string, DenseTensor, std::less<>>& entries() const { return tensors_; }

  friend bool operator==(const WeightStore&, const WeightStore&) = default;

private:
  std::map<std::string, DenseTensor, std::less<>> tensors_;
};

/// Every weighted layer needs an entry of exactly its declared shape.
void validate_weights(const ModelDesc& model, const WeightStore& weights);

} // namespace lrf
