#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "sparsegen/classifiers.hpp"
#include "sparsegen/dataset.hpp"
#include "sparsegen/generator.hpp"
#include "sparsegen/losses.hpp"

namespace sparsegen {

struct AttackConfig {
  double epsilon_pixels = 255.0;  // 0..255 scale
  double tau = 0.5;
  double p = 0.5;
  double kappa = 0.0;
  double lambda_s = 0.05;
  double lambda_q = 0.1;
  bool targeted = false;
  int64_t target_class = 0;

  double epsilon() const { return epsilon_pixels / 255.0; }
  void validate() const;
};

struct AblationFlags {
  bool no_decouple = false;
  bool p_zero = false;
  bool ste = false;
  bool no_sparse_loss = false;
  bool no_quanti_loss = false;

  bool any() const { return no_decouple || p_zero || ste || no_sparse_loss || no_quanti_loss; }
  std::string name() const;
};

struct TrainConfig {
  int64_t epochs = 6;
  int64_t max_steps = 0;  // > 0 overrides epochs
  int64_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  uint64_t seed = 0;
  AttackConfig attack;
  AblationFlags ablation;
  int64_t checkpoint_every = 0;  // steps; 0 writes only the final checkpoint

  void validate() const;
  int64_t total_steps(int64_t dataset_size) const;
  /// Gate probability after ablation flags.
  double effective_p() const;
  double effective_lambda_s() const;
  double effective_lambda_q() const;
  QuantizerKind quantizer() const;
};

nlohmann::json to_json(const AttackConfig& a);
nlohmann::json to_json(const TrainConfig& c);
AttackConfig attack_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Raised when a training step produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int64_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  int64_t step() const { return step_; }

 private:
  int64_t step_;
};

/// Owns one generator during training against a frozen source classifier.
/// Batch order and gate draws are pure functions of (seed, step), so a run
/// resumed from a checkpoint follows the same trajectory as an uninterrupted
/// one.
class GeneratorTrainer {
 public:
  GeneratorTrainer(Generator g, Classifier source, TrainConfig cfg);

  /// Composite loss on (x, y) with the gate drawn from `gate_seed`. Builds the
  /// autograd graph; does not step the optimizer.
  CompositeLoss loss_on(const torch::Tensor& x, const torch::Tensor& y, uint64_t gate_seed);

  /// One optimizer update on (x, y) using the gate stream of `step_index`.
  LossBreakdown step(const torch::Tensor& x, const torch::Tensor& y, int64_t step_index);

  /// Runs global steps [next_step(), end_step) over `data`, appending to the
  /// log and checkpointing to `checkpoint_dir` when set.
  void run(const Dataset& data, int64_t end_step,
           const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

  void save_checkpoint(const std::filesystem::path& dir, const Dataset& data) const;
  static GeneratorTrainer resume(const std::filesystem::path& dir, Classifier source);

  Generator& generator() { return g_; }
  const TrainConfig& config() const { return cfg_; }
  const TrainingLog& log() const { return log_; }
  int64_t next_step() const { return next_step_; }

 private:
  uint64_t gate_seed_for(int64_t step_index) const;

  Generator g_;
  Classifier source_;
  TrainConfig cfg_;
  torch::optim::Adam optim_;
  TrainingLog log_;
  int64_t next_step_ = 0;
};

struct TrainResult {
  Generator generator{nullptr};
  TrainingLog log;
  int64_t steps = 0;
};

/// Dataset-level training of a decoupled generator.
TrainResult train_generator(Generator g, const Classifier& source, const Dataset& data,
                            const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Single-decoder variant: the magnitude head emits the perturbation directly
/// and the sparse loss is applied to it.
TrainResult train_no_decouple(Generator g, const Classifier& source, const Dataset& data,
                              const TrainConfig& cfg,
                              const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

struct AdhocResult {
  torch::Tensor adversarial;  // [1,C,H,W], infer-mode output
  bool adversarial_success = false;
  bool converged = false;  // success reached within the step budget
  int64_t steps = 0;
};

/// Fits a fresh generator to a single image for `steps` updates and returns
/// its infer-mode output.
AdhocResult train_adhoc(const torch::Tensor& x, int64_t y, const Classifier& source,
                        const GeneratorConfig& gen_cfg, const TrainConfig& cfg, int64_t steps);

}  // namespace sparsegen
