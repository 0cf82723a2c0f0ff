#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

namespace sparsegen {

enum class Normalization { Instance, None };

struct GeneratorConfig {
  int64_t input_channels = 3;
  int64_t base_width = 32;  // channels of the first convolution
  int64_t num_residual_blocks = 6;
  int64_t num_down = 3;
  int64_t num_up = 3;
  double epsilon_pixels = 255.0;  // 0..255 scale
  Normalization normalization = Normalization::Instance;
  /// false builds the single-decoder variant that emits the perturbation
  /// directly (no location branch).
  bool decoupled = true;
  /// Initial bias of the location head, before the sigmoid.
  double mask_init_bias = 0.0;

  void validate() const;
  int64_t spatial_multiple() const { return int64_t{1} << num_down; }
};

nlohmann::json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

enum class ForwardMode { Train, Infer };
enum class QuantizerKind { Random, StraightThrough };

struct ForwardOptions {
  ForwardMode mode = ForwardMode::Infer;
  QuantizerKind quantizer = QuantizerKind::Random;
  double tau = 0.5;
  double p = 0.5;
  at::Generator* gen = nullptr;  // required for Train with the random quantizer
};

/// r: magnitude field [B,C,H,W] within +-eps; soft_mask: [B,1,H,W] in [0,1];
/// mask: binary at inference, gated at training; gate: sampled indicators
/// (undefined unless the random quantizer ran). For the single-decoder variant
/// soft_mask and gate are undefined and mask is all ones.
struct PerturbationTriple {
  torch::Tensor magnitude;
  torch::Tensor soft_mask;
  torch::Tensor mask;
  torch::Tensor gate;

  torch::Tensor perturbation() const { return magnitude * mask; }
};

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& cfg);

  /// Latent code for images in [0,1].
  torch::Tensor encode(const torch::Tensor& x);
  /// Magnitude-head output before projection.
  torch::Tensor magnitude_logits(const torch::Tensor& z);
  /// Location-head output in [0,1]; throws for the single-decoder variant.
  torch::Tensor soft_mask(const torch::Tensor& z);

  PerturbationTriple forward(const torch::Tensor& x, const ForwardOptions& opts);

  const GeneratorConfig& config() const { return cfg_; }
  int64_t parameter_count() const;

 private:
  GeneratorConfig cfg_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential magnitude_decoder_{nullptr};
  torch::nn::Sequential location_decoder_{nullptr};
};
TORCH_MODULE(Generator);

/// Builds a generator with seed-determined initialization: conv weights
/// N(0, 0.02), biases zero, norm scales one.
Generator build_generator(const GeneratorConfig& cfg, uint64_t seed);

/// Adversarial images in infer mode: clamp(x + r * m).
torch::Tensor generate_adversarial(Generator& g, const torch::Tensor& x, double tau,
                                   int64_t chunk = 256);

/// Parameter archive + JSON manifest in `dir`. The manifest object is written
/// verbatim; it must carry a "generator" entry produced by to_json(config).
void save_generator(const Generator& g, const std::filesystem::path& dir,
                    const nlohmann::json& manifest, const std::string& tag = "generator");

struct LoadedGenerator {
  Generator generator{nullptr};
  nlohmann::json manifest;
};

/// Loads a checkpoint. When `expected` is given, its architecture fields must
/// match the manifest.
LoadedGenerator load_generator(const std::filesystem::path& dir,
                               const std::optional<GeneratorConfig>& expected = std::nullopt,
                               const std::string& tag = "generator");

}  // namespace sparsegen
