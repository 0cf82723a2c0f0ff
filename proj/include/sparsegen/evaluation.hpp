#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "sparsegen/classifiers.hpp"

namespace sparsegen {

inline constexpr int kReportSchemaVersion = 1;

/// Half a 255-level quantum on the [0,1] scale.
inline constexpr double kChangeTolerance = 1.0 / 510.0;

/// Fraction of pixel locations of each image where any channel moved by more
/// than kChangeTolerance. Returns [B] (float64).
torch::Tensor sparsity_per_image(const torch::Tensor& x, const torch::Tensor& x_adv);
/// Mean of sparsity_per_image.
double sparsity_of(const torch::Tensor& x, const torch::Tensor& x_adv);

struct FoolingMode {
  bool targeted = false;
  int64_t target_class = 0;

  static FoolingMode untargeted() { return {}; }
  static FoolingMode target(int64_t c) { return {true, c}; }
};

struct FoolingBreakdown {
  double rate = 0.0;          // over all images
  double rate_correct = 0.0;  // over images the model classified correctly when clean
  int64_t count = 0;
  int64_t correct_count = 0;
};

double fooling_rate(const Classifier& f, const torch::Tensor& adversarial,
                    const torch::Tensor& labels, FoolingMode mode = {});
/// Both denominators. `clean` gives the images before the attack.
FoolingBreakdown fooling_breakdown(const Classifier& f, const torch::Tensor& clean,
                                   const torch::Tensor& adversarial, const torch::Tensor& labels,
                                   FoolingMode mode = {});

struct EvalRow {
  std::string target_model;
  bool white_box = false;
  bool ok = true;
  std::string error;  // set when the target could not be loaded or evaluated
  FoolingBreakdown fooling;
};

struct EvalReport {
  std::string attack_id;
  std::string source_model;
  double epsilon_pixels = 0.0;
  int64_t sample_count = 0;
  uint64_t seed = 0;
  bool targeted = false;
  int64_t target_class = 0;
  double sparsity = 0.0;
  std::vector<EvalRow> rows;
  // Wall-clock fields. Kept out of the main report file so that reruns give
  // byte-identical reports; written to a separate timing file instead.
  std::optional<double> latency_seconds;
  std::string timestamp;

  nlohmann::json to_json() const;
  std::string to_csv() const;
  nlohmann::json timing_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

std::string csv_header();

/// Writes <stem>.json, <stem>.csv and, when timing is present,
/// <stem>.timing.json into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir,
                  const std::string& stem = "report");

struct TargetModel {
  std::string id;
  std::function<Classifier()> load;
};

/// One row for the source (white-box) and one per distinct target. A target
/// whose loader throws yields a failed row; the others are still evaluated.
EvalReport transfer_matrix(const std::string& attack_id, const Classifier& source,
                           const std::vector<TargetModel>& targets, const torch::Tensor& clean,
                           const torch::Tensor& adversarial, const torch::Tensor& labels,
                           double epsilon_pixels, uint64_t seed, FoolingMode mode = {});

struct TimingResult {
  double mean_seconds = 0.0;
  std::vector<double> per_image;
};

/// An attack over a slice of the sample; `offset` is the index of the slice's
/// first image (for attacks that need labels).
using AttackFn = std::function<torch::Tensor(const torch::Tensor& x, int64_t offset)>;

/// Runs `attack` on one image at a time. The first `warmup` calls (cycling
/// over the sample) are not timed.
TimingResult time_attack(const AttackFn& attack, const torch::Tensor& sample, int64_t warmup = 5);

/// ISO-8601 UTC wall-clock time.
std::string utc_timestamp();

}  // namespace sparsegen
