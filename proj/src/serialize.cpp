#include "lrf/serialize.hpp"

#include "lrf/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lrf {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'R', 'F', 'W'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

std::vector<std::int64_t> int_list(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (!v.is_array()) throw ParseError(where + ": '" + key + "' must be an array");
  std::vector<std::int64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ParseError(where + ": '" + key + "' must hold integers");
    out.push_back(e.get<std::int64_t>());
  }
  return out;
}

LayerDesc layer_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("layer entry must be an object");
  LayerDesc l;
  if (!j.contains("name") || !j["name"].is_string()) throw ParseError("layer without a name");
  l.name = j["name"].get<std::string>();
  const std::string where = "layer '" + l.name + "'";
  if (!j.contains("kind") || !j["kind"].is_string()) throw ParseError(where + ": missing kind");
  l.kind = parse_layer_kind(j["kind"].get<std::string>());
  try {
    if (auto ws = int_list(j, "weight_shape", where); !ws.empty()) l.weight_shape = TensorShape(ws);
  } catch (const ShapeError& e) {
    throw ParseError(where + ": " + e.what());
  }
  l.input_spatial = int_list(j, "input_spatial", where);
  l.stride = int_list(j, "stride", where);
  l.pool_size = int_list(j, "pool_size", where);
  l.target_shape = int_list(j, "target_shape", where);
  if (j.contains("padding")) l.padding = parse_padding(j["padding"].get<std::string>());
  if (j.contains("post_ops")) l.post_ops = j["post_ops"].get<std::vector<std::string>>();
  if (j.contains("groups")) l.groups = j["groups"].get<std::int64_t>();
  if (j.contains("activation")) l.activation = parse_activation(j["activation"].get<std::string>());
  if (j.contains("pool_mode")) l.pool_mode = parse_pool_mode(j["pool_mode"].get<std::string>());
  if (j.contains("epsilon")) l.epsilon = j["epsilon"].get<double>();
  if (j.contains("tt")) {
    const auto& t = j["tt"];
    TTCoreSpec spec;
    spec.m_factors = int_list(t, "m", where);
    spec.n_factors = int_list(t, "n", where);
    spec.ranks = int_list(t, "ranks", where);
    spec.core = t.value("core", std::int64_t{0});
    l.tt = spec;
  }
  if (l.stride.empty()) {
    if (l.kind == LayerKind::Pool) l.stride = l.pool_size;
    else if (is_conv(l.kind)) l.stride.assign(spatial_rank(l), 1);
  }
  return l;
}

json layer_to_json(const LayerDesc& l) {
  json j;
  j["name"] = l.name;
  j["kind"] = std::string(to_string(l.kind));
  j["weight_shape"] = l.weight_shape.dims();
  j["input_spatial"] = l.input_spatial;
  j["stride"] = l.stride;
  j["padding"] = std::string(to_string(l.padding));
  j["post_ops"] = l.post_ops;
  if (l.groups != 1) j["groups"] = l.groups;
  if (l.kind == LayerKind::Activation) j["activation"] = std::string(to_string(l.activation));
  if (l.kind == LayerKind::Pool) {
    j["pool_mode"] = std::string(to_string(l.pool_mode));
    j["pool_size"] = l.pool_size;
  }
  if (!l.target_shape.empty()) j["target_shape"] = l.target_shape;
  if (l.kind == LayerKind::BatchNorm) j["epsilon"] = l.epsilon;
  if (l.tt) {
    j["tt"] = {{"m", l.tt->m_factors}, {"n", l.tt->n_factors}, {"ranks", l.tt->ranks},
               {"core", l.tt->core}};
  }
  return j;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace

std::vector<TensorRecord> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("'" + path.string() + "' is not an LRFW container");
  std::uint32_t version = 0;
  if (!get(in, version) || version != kContainerVersion)
    throw ParseError("unsupported LRFW version in '" + path.string() + "'");

  std::vector<TensorRecord> records;
  for (;;) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != sizeof(name_len)) throw ParseError("truncated record header");
    if (name_len > (1u << 20)) throw ParseError("record name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t ndim = 0;
    if (static_cast<std::uint32_t>(in.gcount()) != name_len || !get(in, ndim) || ndim == 0 || ndim > 16)
      throw ParseError("malformed record '" + name + "'");
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) {
      std::uint64_t v = 0;
      if (!get(in, v) || v == 0 || v > (1ull << 40)) throw ParseError("bad dims in record '" + name + "'");
      d = static_cast<std::int64_t>(v);
    }
    TensorShape shape;
    try {
      shape = TensorShape(dims);
    } catch (const ShapeError& e) {
      throw ParseError("record '" + name + "': " + e.what());
    }
    std::vector<float> data(static_cast<std::size_t>(shape.elements()));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != data.size() * sizeof(float))
      throw ParseError("truncated data in record '" + name + "'");
    records.emplace_back(std::move(name), DenseTensor(std::move(shape), std::move(data)));
  }
  return records;
}

void write_container(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(kMagic, 4);
  put(out, kContainerVersion);
  for (const auto& [name, tensor] : records) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint32_t>(tensor.shape().rank()));
    for (auto d : tensor.shape().dims()) put(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.data().data()),
              static_cast<std::streamsize>(tensor.data().size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string model_to_json(const ModelDesc& model) {
  json j;
  j["layers"] = json::array();
  for (const auto& l : model.layers) j["layers"].push_back(layer_to_json(l));
  j["edges"] = json::array();
  for (const auto& l : model.layers)
    for (const auto& p : model.inputs_of(l.name)) j["edges"].push_back({p, l.name});
  j["input"] = model.input;
  j["output"] = model.output;
  j["metadata"] = model.metadata;
  if (!model.input_shape.empty()) j["input_shape"] = model.input_shape;
  return j.dump(2) + "\n";
}

ModelDesc model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
      throw ParseError("model JSON needs a 'layers' array");
    ModelDesc m;
    for (const auto& lj : j["layers"]) m.layers.push_back(layer_from_json(lj));
    if (j.contains("edges")) {
      for (const auto& e : j["edges"]) {
        if (!e.is_array() || e.size() != 2) throw ParseError("edge must be [from, to]");
        m.predecessors[e[1].get<std::string>()].push_back(e[0].get<std::string>());
      }
    }
    if (!j.contains("input") || !j.contains("output")) throw ParseError("model JSON needs input and output");
    m.input = j["input"].get<std::string>();
    m.output = j["output"].get<std::string>();
    if (j.contains("metadata")) m.metadata = j["metadata"].get<std::map<std::string, std::string>>();
    if (j.contains("input_shape")) m.input_shape = j["input_shape"].get<std::vector<std::int64_t>>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
}

WeightStore read_weights(const std::filesystem::path& path) {
  WeightStore store;
  for (auto& [name, tensor] : read_container(path)) {
    if (store.contains(name)) throw ParseError("duplicate weight record '" + name + "'");
    store.set(std::move(name), std::move(tensor));
  }
  return store;
}

void write_weights(const std::filesystem::path& path, const WeightStore& weights) {
  std::vector<TensorRecord> records(weights.entries().begin(), weights.entries().end());
  write_container(path, records);
}

std::pair<ModelDesc, WeightStore> load_model(const std::filesystem::path& model_path,
                                             const std::filesystem::path& weights_path) {
  ModelDesc model = model_from_json(read_text(model_path));
  model.validate();
  WeightStore weights = read_weights(weights_path);
  validate_weights(model, weights);
  return {std::move(model), std::move(weights)};
}

void save_model(const ModelDesc& model, const WeightStore& weights,
                const std::filesystem::path& model_path,
                const std::filesystem::path& weights_path) {
  write_text(model_path, model_to_json(model));
  write_weights(weights_path, weights);
}

Dataset read_dataset(const std::filesystem::path& path) {
  Dataset ds;
  bool have_inputs = false, have_labels = false;
  for (auto& [name, tensor] : read_container(path)) {
    if (name == "inputs") {
      ds.inputs = std::move(tensor);
      have_inputs = true;
    } else if (name == "labels") {
      ds.labels = std::move(tensor);
      have_labels = true;
    }
  }
  if (!have_inputs) throw ParseError("dataset '" + path.string() + "' has no 'inputs' record");
  if (have_labels && ds.labels.shape()[0] != ds.inputs.shape()[0])
    throw ShapeError("dataset labels and inputs disagree on sample count");
  if (!have_labels) ds.labels = DenseTensor(TensorShape{ds.inputs.shape()[0]});
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  write_container(path, {{"inputs", data.inputs}, {"labels", data.labels}});
}

} // namespace lrf
