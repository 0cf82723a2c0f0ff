#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sparsegen/dataset.hpp"

namespace sparsegen {

/// Desk-scale architecture families with distinct connectivity patterns.
enum class ClassifierArch { SmallResNet, SmallVGG, SmallDenseNet, SmallInception };

std::string arch_id(ClassifierArch arch);
ClassifierArch parse_arch(const std::string& id);
std::vector<ClassifierArch> all_archs();

/// Base for all classifier networks. Input is an image batch in [0,1]; the
/// network applies its own per-channel normalization.
class ClassifierNet : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;
};

std::shared_ptr<ClassifierNet> make_classifier_net(ClassifierArch arch, int64_t num_classes);

struct ClassifierManifest {
  std::string arch;
  uint64_t seed = 0;
  double accuracy = 0.0;
  int64_t epochs = 0;
  std::string dataset_id;
  std::string checksum;  // sha256 of the parameter archive
  int64_t num_classes = 10;
  int64_t height = 32;
  int64_t width = 32;
  bool below_floor = false;
};

/// A trained, frozen classifier. Copies share the underlying network.
class Classifier {
 public:
  Classifier(std::shared_ptr<ClassifierNet> net, ClassifierManifest manifest);

  /// Raw pre-softmax scores [B, classes]. The graph w.r.t. x is kept when x
  /// requires grad. Input resolution must match unless `resize` is set.
  torch::Tensor logits(const torch::Tensor& x) const;
  torch::Tensor predict(const torch::Tensor& x) const;

  const ClassifierManifest& manifest() const { return manifest_; }
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  void set_resize(bool enabled) { resize_ = enabled; }
  ClassifierNet& net() const { return *net_; }
  std::shared_ptr<ClassifierNet> net_ptr() const { return net_; }

  void save(const std::filesystem::path& dir) const;
  static Classifier load(const std::filesystem::path& dir);

 private:
  std::shared_ptr<ClassifierNet> net_;
  ClassifierManifest manifest_;
  std::string id_;
  bool resize_ = false;
};

struct ClassifierTrainOptions {
  int64_t epochs = 5;
  int64_t batch_size = 128;
  double learning_rate = 2e-3;
  double accuracy_floor = 0.75;
};

/// Trains `arch` on `train`, measures accuracy on `test`. A result below the
/// floor is flagged in the manifest, not rejected.
Classifier train_classifier(ClassifierArch arch, const Dataset& train, const Dataset& test,
                            uint64_t seed, const ClassifierTrainOptions& opts = {});

/// Top-1 accuracy, evaluated in chunks.
double accuracy(const Classifier& f, const Dataset& data, int64_t chunk = 256);

/// Predictions for a whole tensor in chunks, lowest index wins ties.
torch::Tensor predict_all(const Classifier& f, const torch::Tensor& images, int64_t chunk = 256);

}  // namespace sparsegen
