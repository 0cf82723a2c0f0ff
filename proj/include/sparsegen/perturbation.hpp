#pragma once

#include <torch/torch.h>

namespace sparsegen {

/// l-infinity budget. Accepted on the 0..255 pixel scale, used internally on
/// the [0,1] scale.
class Epsilon {
 public:
  static Epsilon from_pixel_scale(double pixels);
  double pixel_scale() const { return pixels_; }
  double normalized() const { return pixels_ / 255.0; }

 private:
  explicit Epsilon(double pixels) : pixels_(pixels) {}
  double pixels_;
};

/// 0 where soft <= tau, 1 where soft > tau. The result is detached from the
/// autograd graph.
torch::Tensor hard_quantize(const torch::Tensor& soft, double tau);

/// Per-element Bernoulli(p) indicators as float 0/1. A 1 means "quantize this
/// element and block its gradient".
torch::Tensor sample_gate(at::IntArrayRef shape, double p, at::Generator& gen,
                          torch::ScalarType dtype = torch::kFloat32);

/// Applies a fixed gate: hard_quantize(soft) where gate == 1, soft where
/// gate == 0. d(out)/d(soft) is exactly (1 - gate).
torch::Tensor gated_quantize(const torch::Tensor& soft, const torch::Tensor& gate, double tau);

struct GatedMask {
  torch::Tensor mask;
  torch::Tensor gate;
};

/// Samples a gate with probability p and applies gated_quantize.
GatedMask random_quantize(const torch::Tensor& soft, double tau, double p, at::Generator& gen);

/// Straight-through estimator: hard_quantize forward, identity backward.
torch::Tensor ste_quantize(const torch::Tensor& soft, double tau);

/// Odd, smooth, strictly inside (-1, 1).
torch::Tensor squash(const torch::Tensor& raw);

/// eps * squash(raw). `eps` is on the normalized scale.
torch::Tensor project_magnitude(const torch::Tensor& raw, double eps);

/// clamp(x + r * m, 0, 1) with the single-channel mask m broadcast over the
/// color channels of x.
torch::Tensor apply_perturbation(const torch::Tensor& x, const torch::Tensor& r,
                                 const torch::Tensor& m);

}  // namespace sparsegen
