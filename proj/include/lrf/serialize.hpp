#pragma once

#include "lrf/model.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lrf {

/// Binary tensor container ("LRFW"): little-endian magic, u32 version, then
/// records of (u32 name_len, name, u32 ndim, u64 dims[ndim], f32 data) until EOF.
inline constexpr std::uint32_t kContainerVersion = 1;

using TensorRecord = std::pair<std::string, DenseTensor>;

std::vector<TensorRecord> read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const std::vector<TensorRecord>& records);

std::string model_to_json(const ModelDesc& model);
ModelDesc model_from_json(const std::string& text);

/// Loads and validates a descriptor/weights pair.
std::pair<ModelDesc, WeightStore> load_model(const std::filesystem::path& model_path,
                                             const std::filesystem::path& weights_path);
void save_model(const ModelDesc& model, const WeightStore& weights,
                const std::filesystem::path& model_path,
                const std::filesystem::path& weights_path);

WeightStore read_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path, const WeightStore& weights);

/// A labelled sample set. `inputs` is (B, sample dims...), `labels` is (B)
/// holding class indices as floats.
struct Dataset {
  DenseTensor inputs;
  DenseTensor labels;

  std::int64_t size() const { return inputs.shape()[0]; }
};

Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

} // namespace lrf
