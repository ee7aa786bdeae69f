#include "lrf/model.hpp"

#include "lrf/error.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace lrf {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::array<std::pair<E, std::string_view>, N>& table,
             std::string_view what) {
  for (const auto& [value, name] : table)
    if (name == text) return value;
  throw ParseError("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E value, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [v, name] : table)
    if (v == value) return name;
  return "?";
}

constexpr std::array<std::pair<LayerKind, std::string_view>, 13> kKindNames{{
    {LayerKind::Conv1D, "Conv1D"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::Conv3D, "Conv3D"},
    {LayerKind::DepthwiseConv, "DepthwiseConv"},
    {LayerKind::FC, "FC"},
    {LayerKind::Activation, "Activation"},
    {LayerKind::Pool, "Pool"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::Reshape, "Reshape"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::Add, "Add"},
    {LayerKind::Concat, "Concat"},
    {LayerKind::TTCore, "TTCore"},
}};

constexpr std::array<std::pair<Padding, std::string_view>, 2> kPaddingNames{{
    {Padding::Same, "same"},
    {Padding::Valid, "valid"},
}};

constexpr std::array<std::pair<ActivationFn, std::string_view>, 5> kActivationNames{{
    {ActivationFn::Linear, "linear"},
    {ActivationFn::Relu, "relu"},
    {ActivationFn::Tanh, "tanh"},
    {ActivationFn::Sigmoid, "sigmoid"},
    {ActivationFn::Softmax, "softmax"},
}};

constexpr std::array<std::pair<PoolMode, std::string_view>, 2> kPoolNames{{
    {PoolMode::Max, "max"},
    {PoolMode::Avg, "avg"},
}};

std::size_t conv_spatial_rank(LayerKind kind) {
  switch (kind) {
  case LayerKind::Conv1D: return 1;
  case LayerKind::Conv2D: return 2;
  case LayerKind::Conv3D: return 3;
  default: return 0;
  }
}

[[noreturn]] void fail(const LayerDesc& layer, const std::string& msg) {
  throw ShapeError("layer '" + layer.name + "': " + msg);
}

} // namespace

std::string_view to_string(LayerKind kind) { return enum_name(kind, kKindNames); }
std::string_view to_string(Padding padding) { return enum_name(padding, kPaddingNames); }
std::string_view to_string(ActivationFn fn) { return enum_name(fn, kActivationNames); }
std::string_view to_string(PoolMode mode) { return enum_name(mode, kPoolNames); }

LayerKind parse_layer_kind(std::string_view text) { return parse_enum(text, kKindNames, "layer kind"); }
Padding parse_padding(std::string_view text) { return parse_enum(text, kPaddingNames, "padding"); }
ActivationFn parse_activation(std::string_view text) {
  return parse_enum(text, kActivationNames, "activation");
}
PoolMode parse_pool_mode(std::string_view text) { return parse_enum(text, kPoolNames, "pool mode"); }

bool is_conv(LayerKind kind) {
  return kind == LayerKind::Conv1D || kind == LayerKind::Conv2D || kind == LayerKind::Conv3D ||
         kind == LayerKind::DepthwiseConv;
}

bool is_decomposable(LayerKind kind) {
  return kind == LayerKind::Conv1D || kind == LayerKind::Conv2D || kind == LayerKind::Conv3D ||
         kind == LayerKind::FC;
}

bool has_weights(LayerKind kind) {
  return is_conv(kind) || kind == LayerKind::FC || kind == LayerKind::BatchNorm ||
         kind == LayerKind::TTCore;
}

std::size_t spatial_rank(const LayerDesc& layer) {
  if (auto d = conv_spatial_rank(layer.kind)) return d;
  if (layer.kind == LayerKind::DepthwiseConv)
    return layer.weight_shape.rank() >= 2 ? layer.weight_shape.rank() - 2 : 0;
  return layer.input_spatial.size();
}

std::int64_t in_channels(const LayerDesc& layer) {
  if (layer.kind == LayerKind::FC) return layer.weight_shape[0];
  if (layer.kind == LayerKind::DepthwiseConv) return layer.weight_shape[layer.weight_shape.rank() - 1];
  if (is_conv(layer.kind)) return layer.weight_shape[spatial_rank(layer)] * layer.groups;
  if (layer.kind == LayerKind::BatchNorm) return layer.weight_shape[1];
  throw UnsupportedError("layer '" + layer.name + "' has no channel count");
}

std::int64_t out_channels(const LayerDesc& layer) {
  if (layer.kind == LayerKind::FC) return layer.weight_shape[1];
  if (is_conv(layer.kind)) return layer.weight_shape[layer.weight_shape.rank() - 1];
  if (layer.kind == LayerKind::BatchNorm) return layer.weight_shape[1];
  throw UnsupportedError("layer '" + layer.name + "' has no channel count");
}

std::vector<std::int64_t> kernel_dims(const LayerDesc& layer) {
  if (!is_conv(layer.kind)) return {};
  const auto& dims = layer.weight_shape.dims();
  return {dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(spatial_rank(layer))};
}

std::int64_t output_extent(std::int64_t input, std::int64_t kernel, std::int64_t stride,
                           Padding padding) {
  if (padding == Padding::Same) return (input + stride - 1) / stride;
  if (input < kernel) return 0;
  return (input - kernel) / stride + 1;
}

std::vector<std::int64_t> output_spatial(const LayerDesc& layer) {
  if (layer.kind == LayerKind::Pool) {
    std::vector<std::int64_t> out(layer.input_spatial.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = output_extent(layer.input_spatial[i], layer.pool_size[i], layer.stride[i],
                             layer.padding);
    return out;
  }
  if (!is_conv(layer.kind)) return layer.input_spatial;
  const auto kernel = kernel_dims(layer);
  std::vector<std::int64_t> out(kernel.size());
  for (std::size_t i = 0; i < kernel.size(); ++i)
    out[i] = output_extent(layer.input_spatial[i], kernel[i], layer.stride[i], layer.padding);
  return out;
}

void validate_layer(const LayerDesc& layer) {
  if (layer.name.empty()) throw ShapeError("layer with empty name");
  const bool weighted = has_weights(layer.kind);
  if (!weighted && !layer.weight_shape.empty()) fail(layer, "unweighted kind carries a weight shape");
  if (weighted && layer.weight_shape.empty()) fail(layer, "missing weight_shape");

  if (is_conv(layer.kind)) {
    const auto d = spatial_rank(layer);
    if (d < 1 || d > 3) fail(layer, "conv needs 1 to 3 spatial axes");
    if (layer.weight_shape.rank() != d + 2)
      fail(layer, "conv weight_shape must be (K1..Kd, C, F)");
    if (layer.input_spatial.size() != d) fail(layer, "input_spatial must have one entry per axis");
    if (layer.stride.size() != d) fail(layer, "stride must have one entry per axis");
    for (auto s : layer.stride)
      if (s < 1) fail(layer, "stride must be positive");
    for (auto x : layer.input_spatial)
      if (x < 1) fail(layer, "input_spatial must be positive");
    if (layer.groups < 1) fail(layer, "groups must be positive");
    if (layer.kind == LayerKind::DepthwiseConv && layer.weight_shape[d] != 1)
      fail(layer, "depthwise weight must be (K1..Kd, 1, C)");
    if (layer.kind != LayerKind::DepthwiseConv && out_channels(layer) % layer.groups != 0)
      fail(layer, "output channels not divisible by groups");
    for (auto x : output_spatial(layer))
      if (x < 1) fail(layer, "output spatial extent would be < 1");
  } else if (layer.kind == LayerKind::FC) {
    if (layer.weight_shape.rank() != 2) fail(layer, "FC weight_shape must be (M, N)");
  } else if (layer.kind == LayerKind::BatchNorm) {
    if (layer.weight_shape.rank() != 2 || layer.weight_shape[0] != 4)
      fail(layer, "BatchNorm weight_shape must be (4, C)");
  } else if (layer.kind == LayerKind::TTCore) {
    if (!layer.tt) fail(layer, "TTCore needs a tt spec");
    const auto& tt = *layer.tt;
    const auto d = static_cast<std::int64_t>(tt.m_factors.size());
    if (d < 1 || tt.n_factors.size() != tt.m_factors.size() ||
        static_cast<std::int64_t>(tt.ranks.size()) != d + 1 || tt.core < 0 || tt.core >= d)
      fail(layer, "malformed tt spec");
    const auto t = static_cast<std::size_t>(tt.core);
    TensorShape expected{tt.ranks[t], tt.m_factors[t], tt.n_factors[t], tt.ranks[t + 1]};
    if (layer.weight_shape != expected) fail(layer, "TTCore weight_shape must be (r_prev, m, n, r_next)");
  } else if (layer.kind == LayerKind::Pool) {
    if (layer.pool_size.empty()) fail(layer, "Pool needs pool_size");
    if (layer.stride.size() != layer.pool_size.size()) fail(layer, "Pool stride/pool_size mismatch");
  }
}

const LayerDesc* ModelDesc::find(std::string_view name) const {
  for (const auto& l : layers)
    if (l.name == name) return &l;
  return nullptr;
}

const LayerDesc& ModelDesc::at(std::string_view name) const {
  if (const auto* l = find(name)) return *l;
  throw GraphError("no layer named '" + std::string(name) + "'");
}

std::optional<std::size_t> ModelDesc::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return i;
  return std::nullopt;
}

const std::vector<std::string>& ModelDesc::inputs_of(std::string_view name) const {
  static const std::vector<std::string> kNone;
  auto it = predecessors.find(std::string(name));
  return it == predecessors.end() ? kNone : it->second;
}

std::vector<std::string> ModelDesc::consumers_of(std::string_view name) const {
  std::vector<std::string> out;
  for (const auto& l : layers)
    for (const auto& p : inputs_of(l.name))
      if (p == name) {
        out.push_back(l.name);
        break;
      }
  return out;
}

std::vector<std::string> ModelDesc::topological_order() const {
  std::map<std::string, std::size_t> pending;
  for (const auto& l : layers) pending[l.name] = inputs_of(l.name).size();
  std::vector<std::string> order;
  std::vector<bool> done(layers.size(), false);
  while (order.size() < layers.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (done[i] || pending[layers[i].name] != 0) continue;
      done[i] = true;
      order.push_back(layers[i].name);
      for (const auto& c : consumers_of(layers[i].name))
        for (const auto& p : inputs_of(c))
          if (p == layers[i].name) --pending[c];
      progressed = true;
      break;
    }
    if (!progressed) throw GraphError("model graph contains a cycle");
  }
  return order;
}

std::vector<std::int64_t> ModelDesc::sample_shape() const {
  if (!input_shape.empty()) return input_shape;
  const auto& first = at(input);
  if (is_conv(first.kind)) {
    auto shape = first.input_spatial;
    shape.push_back(in_channels(first));
    return shape;
  }
  if (first.kind == LayerKind::FC) return {first.weight_shape[0]};
  if (first.kind == LayerKind::TTCore && first.tt) return {product(first.tt->m_factors)};
  throw GraphError("cannot infer model input shape from layer '" + first.name +
                   "'; set input_shape");
}

void ModelDesc::validate() const {
  if (layers.empty()) throw GraphError("model has no layers");
  std::set<std::string> names;
  for (const auto& l : layers) {
    if (!names.insert(l.name).second) throw GraphError("duplicate layer name '" + l.name + "'");
    validate_layer(l);
  }
  for (const auto& [to, froms] : predecessors) {
    if (!names.count(to)) throw GraphError("edge targets unknown layer '" + to + "'");
    for (const auto& f : froms)
      if (!names.count(f)) throw GraphError("edge from unknown layer '" + f + "'");
  }
  if (!names.count(input)) throw GraphError("input layer '" + input + "' does not exist");
  if (!names.count(output)) throw GraphError("output layer '" + output + "' does not exist");
  if (!inputs_of(input).empty()) throw GraphError("input layer '" + input + "' has predecessors");

  for (const auto& l : layers) {
    const auto n = inputs_of(l.name).size();
    if (l.name == input) continue;
    if (n == 0) throw GraphError("layer '" + l.name + "' has no predecessor (only one input allowed)");
    const bool merge = l.kind == LayerKind::Add || l.kind == LayerKind::Concat;
    if (!merge && n != 1) throw GraphError("layer '" + l.name + "' must have exactly one predecessor");
    if (l.name != output && consumers_of(l.name).empty())
      throw GraphError("layer '" + l.name + "' is a second graph output");
  }
  if (!consumers_of(output).empty()) throw GraphError("output layer '" + output + "' has consumers");
  (void)topological_order();

  for (const auto& l : layers)
    for (const auto& op : l.post_ops) {
      const auto* p = find(op);
      if (!p) throw GraphError("layer '" + l.name + "' post_op '" + op + "' does not exist");
      if (is_decomposable(p->kind) || p->kind == LayerKind::TTCore || is_conv(p->kind))
        throw GraphError("post_op '" + op + "' must be an activation, pool, norm or reshape");
    }
}

bool WeightStore::contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

const DenseTensor& WeightStore::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ShapeError("no weights for layer '" + std::string(name) + "'");
  return it->second;
}

void WeightStore::set(std::string name, DenseTensor tensor) {
  tensors_.insert_or_assign(std::move(name), std::move(tensor));
}

void WeightStore::erase(std::string_view name) {
  if (auto it = tensors_.find(name); it != tensors_.end()) tensors_.erase(it);
}

void validate_weights(const ModelDesc& model, const WeightStore& weights) {
  for (const auto& l : model.layers) {
    if (!has_weights(l.kind)) continue;
    if (!weights.contains(l.name)) throw ShapeError("no weights for layer '" + l.name + "'");
    const auto& t = weights.at(l.name);
    if (t.shape() != l.weight_shape)
      throw ShapeError("weights for '" + l.name + "' have shape " + t.shape().to_string() +
                       ", descriptor declares " + l.weight_shape.to_string());
  }
}

} // namespace lrf
