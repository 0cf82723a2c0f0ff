#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace sparsegen {

struct DatasetInfo {
  std::string id;     // provenance string recorded in manifests
  std::string split;  // "train", "test", ...
  int64_t count = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 3;
  int64_t num_classes = 0;
};

/// In-memory image set. Images are [N,C,H,W] float in [0,1], labels [N] int64.
struct Dataset {
  DatasetInfo info;
  torch::Tensor images;
  torch::Tensor labels;
  std::vector<std::string> class_names;
  std::vector<std::string> paths;  // source file per image, empty when synthesized

  int64_t size() const { return info.count; }
  /// Rows `indices` (int64 tensor) as a new dataset sharing class metadata.
  Dataset subset(const torch::Tensor& indices) const;
  /// First n images.
  Dataset head(int64_t n) const;
  /// n images drawn without replacement by `seed`, kept in file order.
  Dataset sample(int64_t n, uint64_t seed) const;
  void validate() const;
};

/// Reads `root/split/<class_name>/<image files>`. Classes are the sorted
/// directory names, files within a class are sorted by path. Falls back to the
/// CIFAR-10 binary archive layout when `root` holds data_batch_*.bin files.
Dataset load_dataset(const std::filesystem::path& root, const std::string& split);

/// CIFAR-10 binary batches: split "train" reads data_batch_1..5.bin, "test"
/// reads test_batch.bin.
Dataset load_cifar10_binary(const std::filesystem::path& root, const std::string& split);

/// Writes the dataset as PNG files in the folder layout load_dataset reads.
void write_dataset_folder(const Dataset& data, const std::filesystem::path& root);

/// Iterates a dataset in shuffled mini-batches with a seed-determined order per
/// epoch. Batch t of the whole run is a pure function of (seed, t).
class BatchSampler {
 public:
  BatchSampler(int64_t dataset_size, int64_t batch_size, uint64_t seed);

  int64_t batches_per_epoch() const { return batches_per_epoch_; }
  /// Indices of global step `step` (epoch = step / batches_per_epoch).
  torch::Tensor indices(int64_t step);

 private:
  int64_t size_;
  int64_t batch_size_;
  int64_t batches_per_epoch_;
  uint64_t seed_;
  int64_t cached_epoch_ = -1;
  torch::Tensor permutation_;
};

}  // namespace sparsegen
