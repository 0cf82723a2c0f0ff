#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include <torch/torch.h>

namespace sparsegen {

/// Carlini-Wagner margin, per sample: max(z_y - max_{i!=y} z_i, -kappa).
/// logits [B,K], labels [B] (int64). Returns [B].
torch::Tensor adv_loss_untargeted(const torch::Tensor& logits, const torch::Tensor& labels,
                                  double kappa);

/// Targeted margin, per sample: max(max_{i!=t} z_i - z_t, -kappa).
torch::Tensor adv_loss_targeted(const torch::Tensor& logits, const torch::Tensor& targets,
                                double kappa);

/// l1 norm of each image's mask (or perturbation), averaged over the batch.
/// Not normalized by pixel count.
torch::Tensor sparse_loss(const torch::Tensor& m);

/// Per-image Euclidean distance ||soft - m||_2 (not squared), averaged over
/// the batch.
torch::Tensor quantization_loss(const torch::Tensor& soft, const torch::Tensor& m);

struct LossBreakdown {
  double adv = 0.0;
  double sparse = 0.0;
  double quanti = 0.0;
  double total = 0.0;
  double lambda_s = 0.0;
  double lambda_q = 0.0;
  double kappa = 0.0;
};

/// Scalar loss terms. An undefined tensor means "term not present".
struct LossTerms {
  torch::Tensor adv;
  torch::Tensor sparse;
  torch::Tensor quanti;
};

struct CompositeLoss {
  torch::Tensor total;
  LossBreakdown breakdown;
};

/// adv + lambda_s * sparse + lambda_q * quanti.
CompositeLoss total_loss(const LossTerms& parts, double lambda_s, double lambda_q,
                         double kappa = 0.0);

/// CSV training log: step, adv, sparse, quanti, total. The quanti column is
/// dropped when the run has no quantization loss (single-decoder variant).
class TrainingLog {
 public:
  explicit TrainingLog(bool with_quanti = true) : with_quanti_(with_quanti) {}

  void append(int64_t step, const LossBreakdown& row);
  const std::vector<std::pair<int64_t, LossBreakdown>>& rows() const { return rows_; }
  bool has_quanti_column() const { return with_quanti_; }

  std::string header() const;
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::string format_row(int64_t step, const LossBreakdown& row) const;

  bool with_quanti_;
  std::vector<std::pair<int64_t, LossBreakdown>> rows_;
};

}  // namespace sparsegen
