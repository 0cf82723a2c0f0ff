#include "sparsegen/losses.hpp"

#include <limits>
#include <sstream>

#include "sparsegen/util.hpp"

namespace sparsegen {

namespace {

struct Margins {
  torch::Tensor labeled;  // z_y
  torch::Tensor best_other;  // max_{i != y} z_i
};

Margins split_margins(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2) throw ValidationError("logits must be [batch, classes]");
  if (logits.size(1) < 2) throw ValidationError("margin loss needs at least two classes");
  if (labels.dim() != 1 || labels.size(0) != logits.size(0)) {
    throw ValidationError("labels must be [batch] matching logits");
  }
  const auto classes = logits.size(1);
  if (labels.numel() > 0 &&
      (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= classes)) {
    throw ValidationError("label index out of range for " + std::to_string(classes) + " classes");
  }
  auto idx = labels.to(torch::kLong).unsqueeze(1);
  auto labeled = logits.gather(1, idx).squeeze(1);
  auto one_hot = torch::zeros_like(logits, torch::kBool).scatter_(1, idx, true);
  auto others = logits.masked_fill(one_hot, -std::numeric_limits<double>::infinity());
  return {labeled, std::get<0>(others.max(1))};
}

}  // namespace

torch::Tensor adv_loss_untargeted(const torch::Tensor& logits, const torch::Tensor& labels,
                                  double kappa) {
  auto m = split_margins(logits, labels);
  return torch::clamp_min(m.labeled - m.best_other, -kappa);
}

torch::Tensor adv_loss_targeted(const torch::Tensor& logits, const torch::Tensor& targets,
                                double kappa) {
  auto m = split_margins(logits, targets);
  return torch::clamp_min(m.best_other - m.labeled, -kappa);
}

torch::Tensor sparse_loss(const torch::Tensor& m) {
  if (m.dim() < 2) throw ValidationError("sparse_loss expects a batched tensor");
  return m.abs().flatten(1).sum(1).mean();
}

torch::Tensor quantization_loss(const torch::Tensor& soft, const torch::Tensor& m) {
  if (!soft.sizes().equals(m.sizes())) {
    throw ValidationError("quantization_loss: soft mask and mask shapes differ");
  }
  // linalg_vector_norm's backward is zero (not NaN) at a zero residual.
  return torch::linalg_vector_norm((soft - m).flatten(1), 2, {1}).mean();
}

CompositeLoss total_loss(const LossTerms& parts, double lambda_s, double lambda_q,
                         double kappa) {
  if (lambda_s < 0.0 || lambda_q < 0.0) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (!parts.adv.defined()) throw ValidationError("adversarial loss term is required");
  CompositeLoss out;
  out.total = parts.adv;
  out.breakdown.adv = parts.adv.item<double>();
  if (parts.sparse.defined()) {
    out.total = out.total + lambda_s * parts.sparse;
    out.breakdown.sparse = parts.sparse.item<double>();
  }
  if (parts.quanti.defined()) {
    out.total = out.total + lambda_q * parts.quanti;
    out.breakdown.quanti = parts.quanti.item<double>();
  }
  out.breakdown.total = out.total.item<double>();
  out.breakdown.lambda_s = lambda_s;
  out.breakdown.lambda_q = lambda_q;
  out.breakdown.kappa = kappa;
  return out;
}

void TrainingLog::append(int64_t step, const LossBreakdown& row) { rows_.emplace_back(step, row); }

std::string TrainingLog::header() const {
  return with_quanti_ ? "step,adv,sparse,quanti,total" : "step,adv,sparse,total";
}

std::string TrainingLog::format_row(int64_t step, const LossBreakdown& row) const {
  std::ostringstream ss;
  ss << step << ',' << format_double(row.adv) << ',' << format_double(row.sparse);
  if (with_quanti_) ss << ',' << format_double(row.quanti);
  ss << ',' << format_double(row.total);
  return ss.str();
}

std::string TrainingLog::to_csv() const {
  std::string out = header() + '\n';
  for (const auto& [step, row] : rows_) out += format_row(step, row) + '\n';
  return out;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  write_text_file(path, to_csv());
}

}  // namespace sparsegen
