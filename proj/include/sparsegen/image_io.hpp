#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace sparsegen {

/// Decodes a PNG (8-bit gray/RGB/RGBA, palette) or binary PPM/PGM file into a
/// float [C,H,W] tensor in [0,1]. Gray images are expanded to 3 channels,
/// alpha is dropped.
torch::Tensor read_image(const std::filesystem::path& path);

/// Writes a [C,H,W] tensor in [0,1] as an 8-bit RGB (C=3) or gray (C=1) PNG.
/// Values are rounded to the nearest 1/255 level.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

}  // namespace sparsegen
