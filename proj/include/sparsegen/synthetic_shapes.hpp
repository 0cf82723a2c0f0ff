#pragma once

#include <cstdint>
#include <string>

#include "sparsegen/dataset.hpp"

namespace sparsegen {

/// Procedural 10-class image set used as the desk-scale stand-in for a small
/// public benchmark. Each image is one colored glyph (disk, square, triangle,
/// plus, cross, ring, horizontal bars, vertical bars, diamond, pair of dots)
/// over a tinted gradient background with Gaussian noise and a random density
/// of single-pixel colored speckles.
struct SyntheticShapesOptions {
  int64_t count = 1000;
  int64_t resolution = 32;
  uint64_t seed = 0;
  std::string split = "train";
  double noise_std = 0.06;
  double max_speckle_density = 0.04;
};

inline constexpr int64_t kSyntheticClasses = 10;

Dataset make_synthetic_shapes(const SyntheticShapesOptions& opts);

}  // namespace sparsegen
