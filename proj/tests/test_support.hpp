#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "sparsegen/classifiers.hpp"
#include "sparsegen/generator.hpp"

namespace sparsegen::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sparsegen_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Untrained classifier with a fixed init, good enough for plumbing tests.
inline Classifier tiny_classifier(ClassifierArch arch = ClassifierArch::SmallVGG, uint64_t seed = 0,
                                  int64_t res = 32) {
  torch::manual_seed(seed);
  auto net = make_classifier_net(arch, 10);
  ClassifierManifest m;
  m.arch = arch_id(arch);
  m.seed = seed;
  m.height = res;
  m.width = res;
  Classifier f(net, m);
  f.set_id(arch_id(arch));
  return f;
}

inline GeneratorConfig tiny_generator_config() {
  GeneratorConfig cfg;
  cfg.base_width = 8;
  cfg.num_residual_blocks = 1;
  cfg.num_down = 2;
  cfg.num_up = 2;
  return cfg;
}

}  // namespace sparsegen::testing
