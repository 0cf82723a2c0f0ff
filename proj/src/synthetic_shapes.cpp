#include "sparsegen/synthetic_shapes.hpp"

#include <array>
#include <cmath>
#include <random>

#include "sparsegen/util.hpp"

namespace sparsegen {

namespace {

const std::vector<std::string> kNames = {"disk",  "square", "triangle", "plus",    "cross",
                                         "ring",  "hbars",  "vbars",    "diamond", "dots"};

// Glyph membership in the glyph's rotated frame (u, v), with size s and
// stroke width w. Mirrors the class list above.
bool inside(int64_t cls, double u, double v, double s, double w) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0:
      return r < s;
    case 1:
      return std::abs(u) < 0.85 * s && std::abs(v) < 0.85 * s;
    case 2:
      return v < 0.8 * s && v > -0.9 * s + 1.71 * std::abs(u);
    case 3:
      return (std::abs(u) < w / 2 && std::abs(v) < s) || (std::abs(v) < w / 2 && std::abs(u) < s);
    case 4: {
      const double a = (u + v) / std::sqrt(2.0);
      const double b = (u - v) / std::sqrt(2.0);
      return (std::abs(a) < w / 2 && std::abs(b) < s) || (std::abs(b) < w / 2 && std::abs(a) < s);
    }
    case 5:
      return r < s && r > s - w;
    case 6:
      return std::abs(u) < s && std::abs(v) < s &&
             static_cast<int64_t>(std::floor((v + s) / (2 * s / 5))) % 2 == 0;
    case 7:
      return std::abs(u) < s && std::abs(v) < s &&
             static_cast<int64_t>(std::floor((u + s) / (2 * s / 5))) % 2 == 0;
    case 8:
      return std::abs(u) + std::abs(v) < 1.1 * s;
    default:
      return std::hypot(u - 0.55 * s, v) < 0.45 * s || std::hypot(u + 0.55 * s, v) < 0.45 * s;
  }
}

}  // namespace

Dataset make_synthetic_shapes(const SyntheticShapesOptions& opts) {
  if (opts.count <= 0) throw ValidationError("synthetic dataset needs a positive count");
  if (opts.resolution < 8) throw ValidationError("synthetic resolution must be at least 8");
  const int64_t n = opts.count;
  const int64_t res = opts.resolution;
  const double scale = static_cast<double>(res) / 32.0;

  std::mt19937_64 rng(derive_seed(opts.seed, streams::kData));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, opts.noise_std);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  auto images = torch::empty({n, 3, res, res}, torch::kFloat32);
  auto labels = torch::empty({n}, torch::kLong);
  auto img_acc = images.accessor<float, 4>();
  auto lab_acc = labels.accessor<int64_t, 1>();

  for (int64_t i = 0; i < n; ++i) {
    const int64_t cls = i % kSyntheticClasses;
    lab_acc[i] = cls;
    std::array<double, 3> bg{unit(rng), unit(rng), unit(rng)};
    std::array<double, 3> fg{};
    do {
      fg = {unit(rng), unit(rng), unit(rng)};
    } while (std::abs(fg[0] - bg[0]) + std::abs(fg[1] - bg[1]) + std::abs(fg[2] - bg[2]) <= 0.9);
    const double gx = uniform(-0.15, 0.15);
    const double gy = uniform(-0.15, 0.15);
    const double cx = uniform(11.0, 21.0) * scale;
    const double cy = uniform(11.0, 21.0) * scale;
    const double s = uniform(6.0, 10.0) * scale;
    const double theta = uniform(-0.25, 0.25);
    const double w = std::max(1.5 * scale, 0.3 * s);
    const double speckle_density = uniform(0.0, opts.max_speckle_density);
    const double half = res / 2.0;

    for (int64_t y = 0; y < res; ++y) {
      for (int64_t x = 0; x < res; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        const double dx = px - cx;
        const double dy = py - cy;
        const double u = std::cos(theta) * dx + std::sin(theta) * dy;
        const double v = -std::sin(theta) * dx + std::cos(theta) * dy;
        const bool on = inside(cls, u, v, s, w);
        const double ramp = gx * (px - half) / half + gy * (py - half) / half;
        for (int64_t c = 0; c < 3; ++c) {
          double value = on ? fg[c] : bg[c] + ramp;
          value += noise(rng);
          img_acc[i][c][y][x] = static_cast<float>(value);
        }
        if (unit(rng) < speckle_density) {
          for (int64_t c = 0; c < 3; ++c) img_acc[i][c][y][x] = static_cast<float>(unit(rng));
        }
      }
    }
  }
  images.clamp_(0.0, 1.0);

  Dataset data;
  data.images = images;
  data.labels = labels;
  data.class_names = kNames;
  data.info.id = "synthetic-shapes-v1:seed=" + std::to_string(opts.seed) +
                 ":count=" + std::to_string(n) + ":res=" + std::to_string(res);
  data.info.split = opts.split;
  data.info.count = n;
  data.info.channels = 3;
  data.info.height = res;
  data.info.width = res;
  data.info.num_classes = kSyntheticClasses;
  return data;
}

}  // namespace sparsegen
