#include "sparsegen/perturbation.hpp"

#include <cmath>
#include <sstream>

#include "sparsegen/util.hpp"

namespace sparsegen {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ValidationError("tau must lie in (0,1), got " + format_double(tau));
  }
}

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError("gate probability must lie in [0,1], got " + format_double(p));
  }
}

torch::Tensor threshold(const torch::Tensor& soft, double tau) {
  return soft.gt(tau).to(soft.scalar_type());
}

// Forward: gate ? threshold(soft) : soft. Backward: grad * (1 - gate).
class GatedQuantizeFn : public torch::autograd::Function<GatedQuantizeFn> {
 public:
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& soft,
                               const torch::Tensor& gate, double tau) {
    auto pass = gate.eq(0);
    ctx->save_for_backward({pass});
    return torch::where(pass, soft, threshold(soft, tau));
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    auto pass = ctx->get_saved_variables()[0];
    auto g = grad_out[0] * pass.to(grad_out[0].scalar_type());
    return {g, torch::Tensor(), torch::Tensor()};
  }
};

class StraightThroughFn : public torch::autograd::Function<StraightThroughFn> {
 public:
  static torch::Tensor forward(AutogradContext*, const torch::Tensor& soft, double tau) {
    return threshold(soft, tau);
  }

  static variable_list backward(AutogradContext*, variable_list grad_out) {
    return {grad_out[0], torch::Tensor()};
  }
};

}  // namespace

Epsilon Epsilon::from_pixel_scale(double pixels) {
  if (!(pixels > 0.0) || !std::isfinite(pixels)) {
    throw ValidationError("epsilon must be positive and finite, got " + format_double(pixels));
  }
  return Epsilon(pixels);
}

torch::Tensor hard_quantize(const torch::Tensor& soft, double tau) {
  check_tau(tau);
  require_finite(soft, "hard_quantize input");
  torch::NoGradGuard no_grad;
  return threshold(soft.detach(), tau);
}

torch::Tensor sample_gate(at::IntArrayRef shape, double p, at::Generator& gen,
                          torch::ScalarType dtype) {
  check_probability(p);
  // Uniform draws consumed even for the degenerate p so that the stream
  // position does not depend on p.
  auto u = torch::rand(shape, gen, torch::TensorOptions().dtype(torch::kFloat64));
  return u.lt(p).to(dtype);
}

torch::Tensor gated_quantize(const torch::Tensor& soft, const torch::Tensor& gate, double tau) {
  check_tau(tau);
  require_finite(soft, "random_quantize input");
  if (!soft.sizes().equals(gate.sizes())) {
    throw ValidationError("gate shape does not match soft mask shape");
  }
  return GatedQuantizeFn::apply(soft, gate.to(soft.scalar_type()), tau);
}

GatedMask random_quantize(const torch::Tensor& soft, double tau, double p, at::Generator& gen) {
  auto gate = sample_gate(soft.sizes(), p, gen, soft.scalar_type());
  return {gated_quantize(soft, gate, tau), gate};
}

torch::Tensor ste_quantize(const torch::Tensor& soft, double tau) {
  check_tau(tau);
  require_finite(soft, "ste_quantize input");
  return StraightThroughFn::apply(soft, tau);
}

torch::Tensor squash(const torch::Tensor& raw) { return torch::tanh(raw); }

torch::Tensor project_magnitude(const torch::Tensor& raw, double eps) {
  if (!(eps > 0.0)) throw ValidationError("epsilon must be positive");
  require_finite(raw, "project_magnitude input");
  return squash(raw) * eps;
}

torch::Tensor apply_perturbation(const torch::Tensor& x, const torch::Tensor& r,
                                 const torch::Tensor& m) {
  if (x.dim() != 4 || r.dim() != 4 || m.dim() != 4) {
    throw ValidationError("apply_perturbation expects rank-4 tensors");
  }
  if (!x.sizes().equals(r.sizes())) {
    std::ostringstream msg;
    msg << "magnitude shape " << r.sizes() << " does not match image shape " << x.sizes();
    throw ValidationError(msg.str());
  }
  const bool mask_ok = m.size(0) == x.size(0) && (m.size(1) == 1 || m.size(1) == x.size(1)) &&
                       m.size(2) == x.size(2) && m.size(3) == x.size(3);
  if (!mask_ok) {
    std::ostringstream msg;
    msg << "mask shape " << m.sizes() << " is not broadcastable to image shape " << x.sizes();
    throw ValidationError(msg.str());
  }
  return torch::clamp(x + r * m, 0.0, 1.0);
}

}  // namespace sparsegen
