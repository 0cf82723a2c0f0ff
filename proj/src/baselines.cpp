#include "sparsegen/baselines.hpp"

#include "sparsegen/util.hpp"

namespace sparsegen {

void Pgd0Config::validate() const {
  if (k < 1) throw ValidationError("pgd0.k must be at least 1");
  if (steps < 1) throw ValidationError("pgd0.steps must be at least 1");
  if (!(step_size_pixels > 0.0)) throw ValidationError("pgd0.step_size must be positive");
  if (!(epsilon_pixels > 0.0) || epsilon_pixels > 255.0) {
    throw ValidationError("pgd0.epsilon must lie in (0, 255]");
  }
  if (targeted && target_class < 0) throw ValidationError("pgd0.target_class must be >= 0");
}

torch::Tensor l0_project(const torch::Tensor& delta, int64_t k) {
  if (delta.dim() != 4) throw ValidationError("l0_project expects [B,C,H,W]");
  if (k < 0) throw ValidationError("l0_project needs k >= 0");
  const int64_t B = delta.size(0), C = delta.size(1), HW = delta.size(2) * delta.size(3);
  if (k >= HW) return delta.clone();
  if (k == 0) return torch::zeros_like(delta);
  auto score = delta.detach().pow(2).sum(1).reshape({B, HW});
  // A stable descending sort keeps equal scores in index order.
  auto order = std::get<1>(torch::sort(score, /*stable=*/true, /*dim=*/1, /*descending=*/true));
  auto keep = torch::zeros({B, HW}, delta.options().dtype(torch::kBool));
  keep.scatter_(1, order.slice(1, 0, k), true);
  auto m = keep.reshape({B, 1, delta.size(2), delta.size(3)}).expand({B, C, delta.size(2), delta.size(3)});
  return torch::where(m, delta, torch::zeros_like(delta));
}

namespace {

// Lower is better for the attacker: z_y - max_{i!=y} z_i (untargeted),
// max_{i!=t} z_i - z_t (targeted).
torch::Tensor margin(const torch::Tensor& logits, const torch::Tensor& labels, bool targeted) {
  auto own = logits.gather(1, labels.unsqueeze(1)).squeeze(1);
  auto others = logits.masked_fill(
      torch::one_hot(labels, logits.size(1)).to(torch::kBool), -std::numeric_limits<float>::infinity());
  auto best_other = std::get<0>(others.max(1));
  return targeted ? best_other - own : own - best_other;
}

torch::Tensor project(const torch::Tensor& x, const torch::Tensor& delta, double eps, int64_t k) {
  auto d = delta.clamp(-eps, eps);
  d = (x + d).clamp(0.0, 1.0) - x;
  return l0_project(d, k);
}

}  // namespace

Pgd0Result pgd0_attack(const torch::Tensor& x, const torch::Tensor& y, const Classifier& f,
                       const Pgd0Config& cfg) {
  cfg.validate();
  if (x.dim() != 4) throw ValidationError("pgd0 expects [B,C,H,W] images");
  if (y.dim() != 1 || y.size(0) != x.size(0)) throw ValidationError("pgd0 label count mismatch");
  const int64_t B = x.size(0);
  const double eps = cfg.epsilon_pixels / 255.0;
  const double alpha = cfg.step_size_pixels / 255.0;
  auto x0 = x.detach();
  auto target = cfg.targeted ? torch::full({B}, cfg.target_class, torch::kLong) : y;

  auto delta = torch::zeros_like(x0);
  if (cfg.random_start) {
    for (int64_t i = 0; i < B; ++i) {
      auto gen = make_generator(derive_seed(cfg.seed, streams::kPgd, static_cast<uint64_t>(i)));
      delta[i].uniform_(-eps, eps, gen);
    }
  }
  delta = project(x0, delta, eps, cfg.k);

  const auto succeeded = [&](const torch::Tensor& adv) {
    torch::NoGradGuard no_grad;
    auto pred = f.predict(adv);
    return cfg.targeted ? pred.eq(target) : pred.ne(y);
  };

  auto best = x0 + delta;
  auto done = succeeded(best);
  auto aborted = torch::zeros({B}, torch::kBool);
  for (int64_t s = 0; s < cfg.steps; ++s) {
    auto active = done.logical_not().logical_and(aborted.logical_not());
    if (!active.any().item<bool>()) break;
    auto d = delta.clone().requires_grad_(true);
    auto loss = margin(f.logits(x0 + d), target, cfg.targeted).sum();
    auto grad = torch::autograd::grad({loss}, {d})[0];
    auto bad = torch::isfinite(grad).flatten(1).all(1).logical_not();
    aborted = aborted.logical_or(bad.logical_and(active));
    active = active.logical_and(bad.logical_not());
    auto stepped = project(x0, delta - alpha * grad.nan_to_num(0.0).sign(), eps, cfg.k);
    auto a4 = active.view({B, 1, 1, 1});
    delta = torch::where(a4, stepped, delta);
    auto adv = x0 + delta;
    auto now = succeeded(adv).logical_and(active);
    best = torch::where(a4, adv, best);
    done = done.logical_or(now);
  }
  Pgd0Result out;
  out.adversarial = best.clamp(0.0, 1.0);
  out.success = done.logical_and(aborted.logical_not());
  out.aborted = aborted;
  return out;
}

torch::Tensor random_sparse_baseline(const torch::Tensor& x, int64_t k, double eps,
                                     uint64_t seed) {
  if (x.dim() != 4) throw ValidationError("random_sparse_baseline expects [B,C,H,W]");
  if (k < 0) throw ValidationError("random_sparse_baseline needs k >= 0");
  const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  if (k > H * W) throw ValidationError("k exceeds the pixel count");
  auto out = x.clone();
  if (k == 0) return out;
  for (int64_t i = 0; i < B; ++i) {
    auto gen = make_generator(derive_seed(seed, streams::kBaseline, static_cast<uint64_t>(i)));
    auto idx = torch::randperm(H * W, gen, torch::kLong).slice(0, 0, k);
    auto sign = torch::randint(0, 2, {C, k}, gen, x.options()) * 2.0 - 1.0;
    auto flat = out[i].view({C, H * W});
    flat.index_copy_(1, idx, (flat.index_select(1, idx) + sign * eps).clamp(0.0, 1.0));
  }
  return out;
}

}  // namespace sparsegen
