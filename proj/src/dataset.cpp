#include "emocpd/dataset.hpp"

#include <fstream>

#include "emocpd/errors.hpp"

namespace emocpd {

GridDataset GridDataset::from_files(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("no grid files given");
  GridDataset dataset;
  for (const std::string& path : paths) {
    std::vector<MicroEnvGrid> grids;
    try {
      grids = read_grid_file(path);
    } catch (const FormatError& e) {
      throw FormatError(std::string(e.what()) + " in '" + path + "'");
    }
    for (MicroEnvGrid& g : grids) dataset.samples.push_back(std::move(g));
  }
  return dataset;
}

GridDataset GridDataset::from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
  std::vector<std::string> paths;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    paths.push_back(line.substr(b, e - b + 1));
  }
  return from_files(paths);
}

std::array<int64_t, aa::kNumClasses> GridDataset::class_histogram() const {
  std::array<int64_t, aa::kNumClasses> histogram{};
  for (const MicroEnvGrid& g : samples) {
    if (g.label < 0 || g.label >= aa::kNumClasses)
      throw Error("sample label out of range: " + std::to_string(g.label));
    ++histogram[static_cast<size_t>(g.label)];
  }
  return histogram;
}

nn::Tensor make_batch(const std::vector<MicroEnvGrid>& samples, const std::vector<size_t>& indices,
                      const GridSpec& spec) {
  if (indices.empty()) throw Error("empty batch");
  const size_t per_sample = spec.value_count();
  std::vector<double> data;
  data.reserve(indices.size() * per_sample);
  for (size_t idx : indices) {
    const MicroEnvGrid& g = samples[idx];
    if (g.values.size() != per_sample) throw ShapeError("grid value count mismatch in batch");
    data.insert(data.end(), g.values.begin(), g.values.end());
  }
  return nn::Tensor::from_data({static_cast<int64_t>(indices.size()), spec.channels,
                                spec.cells_per_side, spec.cells_per_side, spec.cells_per_side},
                               std::move(data));
}

std::vector<int> batch_labels(const std::vector<MicroEnvGrid>& samples,
                              const std::vector<size_t>& indices) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (size_t idx : indices) labels.push_back(samples[idx].label);
  return labels;
}

}  // namespace emocpd
