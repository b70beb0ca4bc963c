#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "emocpd/amino_acids.hpp"
#include "emocpd/tensor.hpp"
#include "emocpd/voxelize.hpp"

namespace emocpd {

// In-memory sample set concatenated from one or more grid files.
struct GridDataset {
  std::vector<MicroEnvGrid> samples;

  static GridDataset from_files(const std::vector<std::string>& paths);
  // Plain-text manifest: one grid-file path per line, '#' comments.
  static GridDataset from_manifest(const std::string& manifest_path);

  std::array<int64_t, aa::kNumClasses> class_histogram() const;
  size_t size() const { return samples.size(); }
};

// [indices.size(), 7, 20, 20, 20] input tensor for the model.
nn::Tensor make_batch(const std::vector<MicroEnvGrid>& samples, const std::vector<size_t>& indices,
                      const GridSpec& spec = {});

std::vector<int> batch_labels(const std::vector<MicroEnvGrid>& samples,
                              const std::vector<size_t>& indices);

}  // namespace emocpd
