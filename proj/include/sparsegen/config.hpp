#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sparsegen/generator.hpp"
#include "sparsegen/trainer.hpp"

namespace sparsegen {

/// Environment variable that roots relative output paths.
inline constexpr const char* kOutputRootEnv = "SPARSEGEN_OUTPUT_ROOT";

enum class Command { TrainClassifier, TrainGenerator, Attack, Eval, Ablate, MakeDataset };

std::string command_name(Command c);
Command parse_command(const std::string& name);

/// Relative classifier, generator and output paths are resolved against
/// kOutputRootEnv when it is set; data_root is used as given.
struct PathsConfig {
  std::filesystem::path data_root = "data";
  std::filesystem::path classifier_dir = "models";  // one sub-directory per model id
  std::filesystem::path generator_dir = "runs/train-generator";
  std::filesystem::path output_dir;  // empty: runs/<command>
};

struct DataConfig {
  std::string train_split = "train";
  std::string test_split = "test";
  int64_t eval_samples = 500;
  // make-dataset only
  int64_t train_count = 6000;
  int64_t test_count = 1000;
  int64_t resolution = 32;
};

struct ClassifierSection {
  std::string arch = "all";  // a model id or "all"
  int64_t epochs = 5;
  int64_t batch_size = 128;
  double learning_rate = 2e-3;
  double accuracy_floor = 0.75;
  bool resize = false;
};

struct EvalConfig {
  std::string source = "small-resnet";
  std::vector<std::string> targets = {"small-vgg", "small-densenet", "small-inception-like"};
  std::string attack = "generator";  // generator | pgd0 | random-sparse
  int64_t timing_samples = 20;
  int64_t warmup = 5;
  int64_t pgd_k = 0;  // 0 matches the generator's measured sparsity
  int64_t pgd_steps = 20;
  double pgd_step_size = 64.0;
  int64_t random_k = 10;
};

struct RunConfig {
  Command command = Command::Eval;
  uint64_t seed = 0;
  int64_t workers = 1;
  bool resume = false;
  PathsConfig paths;
  DataConfig data;
  ClassifierSection classifier;
  GeneratorConfig generator;
  EvalConfig eval;
  TrainConfig train;  // train.attack / train.ablation hold the attack and ablation sections

  /// Fully resolved config as key = value text with one section per module.
  std::string to_text() const;
};

/// Reads an INI-style file (`[section]` headers, `key = value` lines, `;` or `#`
/// comments), applies `overrides` (dotted `section.key` names), resolves
/// paths and validates. An empty path skips the file.
RunConfig parse_config(Command command, const std::filesystem::path& file,
                       const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Parses config text directly; `origin` names the source in error messages.
RunConfig parse_config_text(Command command, const std::string& text, const std::string& origin,
                            const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Dotted names of every accepted key, in output order.
std::vector<std::string> config_keys();

}  // namespace sparsegen
