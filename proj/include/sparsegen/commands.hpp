#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sparsegen/config.hpp"
#include "sparsegen/evaluation.hpp"

namespace sparsegen {

/// Loads `classifier_dir/<id>` and tags it with `id`.
Classifier load_zoo_model(const std::filesystem::path& classifier_dir, const std::string& id,
                          bool resize = false);

struct AblationSpec {
  std::string name;
  AblationFlags flags;
};

/// The proposed method followed by the five single-flag variants.
std::vector<AblationSpec> ablation_rows();
/// Rows the ablate command runs for `selected`: all six when no flag is set,
/// otherwise the proposed row plus one row per set flag.
std::vector<AblationSpec> ablation_rows(const AblationFlags& selected);

/// Train config and generator config for one ablation row.
TrainConfig ablation_train_config(const TrainConfig& base, const AblationFlags& flags);
GeneratorConfig ablation_generator_config(const GeneratorConfig& base, const AblationFlags& flags);

/// Executes a resolved config. Throws ValidationError / RuntimeFailure.
void run_command(const RunConfig& cfg);

/// Entry point shared by the CLI binary and the tests:
/// `<tool> <command> --config <file> [--section.key value ...]`.
/// Returns 0 on success, 1 on validation errors, 2 on runtime failures; the
/// latter two print a JSON error record to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace sparsegen
