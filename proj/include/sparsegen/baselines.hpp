#pragma once

#include <torch/torch.h>

#include "sparsegen/classifiers.hpp"

namespace sparsegen {

struct Pgd0Config {
  int64_t k = 10;  // max perturbed pixels per image
  int64_t steps = 20;
  double step_size_pixels = 64.0;  // 0..255 scale
  double epsilon_pixels = 255.0;   // 0..255 scale
  bool targeted = false;
  int64_t target_class = 0;
  bool random_start = true;
  uint64_t seed = 0;

  void validate() const;
};

/// Keeps the k pixels with the largest sum over channels of delta^2 and zeros
/// the rest. Ties go to the lowest row-major index. delta is [B,C,H,W].
torch::Tensor l0_project(const torch::Tensor& delta, int64_t k);

struct Pgd0Result {
  torch::Tensor adversarial;  // [B,C,H,W]
  torch::Tensor success;      // [B] bool
  torch::Tensor aborted;      // [B] bool, non-finite gradient seen
};

/// Sign-gradient ascent on the margin loss with l-infinity, box and l0
/// projections after every step. The first successful iterate of each image is
/// kept.
Pgd0Result pgd0_attack(const torch::Tensor& x, const torch::Tensor& y, const Classifier& f,
                       const Pgd0Config& cfg);

/// Adds +-eps (sign drawn per channel) at k pixels chosen uniformly per image,
/// then clamps to [0,1]. eps on the normalized scale.
torch::Tensor random_sparse_baseline(const torch::Tensor& x, int64_t k, double eps,
                                     uint64_t seed);

}  // namespace sparsegen
