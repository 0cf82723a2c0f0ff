#include "sparsegen/evaluation.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "sparsegen/util.hpp"

namespace fs = std::filesystem;

namespace sparsegen {

torch::Tensor sparsity_per_image(const torch::Tensor& x, const torch::Tensor& x_adv) {
  if (x.sizes() != x_adv.sizes()) throw ValidationError("sparsity_of: shape mismatch");
  if (x.dim() != 4) throw ValidationError("sparsity_of expects [B,C,H,W]");
  auto diff = (x_adv.to(torch::kFloat64) - x.to(torch::kFloat64)).abs();
  auto changed = std::get<0>(diff.max(1)).gt(kChangeTolerance);
  return changed.flatten(1).to(torch::kFloat64).mean(1);
}

double sparsity_of(const torch::Tensor& x, const torch::Tensor& x_adv) {
  auto s = sparsity_per_image(x, x_adv);
  if (s.numel() == 0) return 0.0;
  return s.mean().item<double>();
}

namespace {

torch::Tensor fooled_mask(const torch::Tensor& pred, const torch::Tensor& labels, FoolingMode mode) {
  return mode.targeted ? pred.eq(mode.target_class) : pred.ne(labels);
}

void check_inputs(const torch::Tensor& adversarial, const torch::Tensor& labels) {
  if (adversarial.dim() != 4) throw ValidationError("fooling_rate expects [B,C,H,W] images");
  if (adversarial.size(0) == 0) throw ValidationError("fooling_rate of an empty set");
  if (labels.dim() != 1 || labels.size(0) != adversarial.size(0)) {
    throw ValidationError("fooling_rate: label count does not match image count");
  }
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double fooling_rate(const Classifier& f, const torch::Tensor& adversarial,
                    const torch::Tensor& labels, FoolingMode mode) {
  check_inputs(adversarial, labels);
  auto pred = predict_all(f, adversarial);
  return fooled_mask(pred, labels, mode).to(torch::kFloat64).mean().item<double>();
}

FoolingBreakdown fooling_breakdown(const Classifier& f, const torch::Tensor& clean,
                                   const torch::Tensor& adversarial, const torch::Tensor& labels,
                                   FoolingMode mode) {
  check_inputs(adversarial, labels);
  if (clean.sizes() != adversarial.sizes()) throw ValidationError("clean/adversarial shape mismatch");
  auto fooled = fooled_mask(predict_all(f, adversarial), labels, mode);
  auto correct = predict_all(f, clean).eq(labels);
  FoolingBreakdown b;
  b.count = labels.size(0);
  b.correct_count = correct.sum().item<int64_t>();
  b.rate = fooled.to(torch::kFloat64).mean().item<double>();
  b.rate_correct = b.correct_count == 0
                       ? 0.0
                       : static_cast<double>(fooled.logical_and(correct).sum().item<int64_t>()) /
                             static_cast<double>(b.correct_count);
  return b;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"target_model", r.target_model}, {"white_box", r.white_box}, {"ok", r.ok}};
    if (r.ok) {
      row["fooling_rate"] = r.fooling.rate;
      row["fooling_rate_correct"] = r.fooling.rate_correct;
      row["correct_count"] = r.fooling.correct_count;
    } else {
      row["error"] = r.error;
    }
    rows_json.push_back(row);
  }
  return {{"schema_version", kReportSchemaVersion},
          {"attack_id", attack_id},
          {"source_model", source_model},
          {"epsilon_pixels", epsilon_pixels},
          {"sample_count", sample_count},
          {"seed", seed},
          {"targeted", targeted},
          {"target_class", target_class},
          {"sparsity", sparsity},
          {"rows", rows_json}};
}

std::string csv_header() {
  return "schema_version,attack_id,source_model,target_model,white_box,fooling_rate,"
         "fooling_rate_correct,sparsity,epsilon_pixels,sample_count,seed,targeted,target_class,"
         "status";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << csv_header() << "\n";
  for (const auto& r : rows) {
    out << kReportSchemaVersion << ',' << csv_escape(attack_id) << ',' << csv_escape(source_model)
        << ',' << csv_escape(r.target_model) << ',' << (r.white_box ? 1 : 0) << ','
        << (r.ok ? format_double(r.fooling.rate) : "") << ','
        << (r.ok ? format_double(r.fooling.rate_correct) : "") << ',' << format_double(sparsity)
        << ',' << format_double(epsilon_pixels) << ',' << sample_count << ',' << seed << ','
        << (targeted ? 1 : 0) << ',' << target_class << ','
        << (r.ok ? std::string("ok") : csv_escape("error: " + r.error)) << "\n";
  }
  return out.str();
}

nlohmann::json EvalReport::timing_json() const {
  nlohmann::json j = {{"schema_version", kReportSchemaVersion},
                      {"attack_id", attack_id},
                      {"timestamp", timestamp}};
  if (latency_seconds) j["latency_seconds_per_image"] = *latency_seconds;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
    throw ValidationError("unsupported report schema_version");
  }
  EvalReport r;
  r.attack_id = j.at("attack_id").get<std::string>();
  r.source_model = j.at("source_model").get<std::string>();
  r.epsilon_pixels = j.at("epsilon_pixels").get<double>();
  r.sample_count = j.at("sample_count").get<int64_t>();
  r.seed = j.at("seed").get<uint64_t>();
  r.targeted = j.at("targeted").get<bool>();
  r.target_class = j.at("target_class").get<int64_t>();
  r.sparsity = j.at("sparsity").get<double>();
  for (const auto& row : j.at("rows")) {
    EvalRow e;
    e.target_model = row.at("target_model").get<std::string>();
    e.white_box = row.at("white_box").get<bool>();
    e.ok = row.at("ok").get<bool>();
    if (e.ok) {
      e.fooling.rate = row.at("fooling_rate").get<double>();
      e.fooling.rate_correct = row.at("fooling_rate_correct").get<double>();
      e.fooling.correct_count = row.at("correct_count").get<int64_t>();
      e.fooling.count = r.sample_count;
    } else {
      e.error = row.at("error").get<std::string>();
    }
    r.rows.push_back(e);
  }
  return r;
}

void write_report(const EvalReport& report, const fs::path& dir, const std::string& stem) {
  write_text_file(dir / (stem + ".json"), report.to_json().dump(2) + "\n");
  write_text_file(dir / (stem + ".csv"), report.to_csv());
  if (report.latency_seconds || !report.timestamp.empty()) {
    write_text_file(dir / (stem + ".timing.json"), report.timing_json().dump(2) + "\n");
  }
}

EvalReport transfer_matrix(const std::string& attack_id, const Classifier& source,
                           const std::vector<TargetModel>& targets, const torch::Tensor& clean,
                           const torch::Tensor& adversarial, const torch::Tensor& labels,
                           double epsilon_pixels, uint64_t seed, FoolingMode mode) {
  EvalReport report;
  report.attack_id = attack_id;
  report.source_model = source.id();
  report.epsilon_pixels = epsilon_pixels;
  report.sample_count = adversarial.size(0);
  report.seed = seed;
  report.targeted = mode.targeted;
  report.target_class = mode.target_class;
  report.sparsity = sparsity_of(clean, adversarial);

  EvalRow white;
  white.target_model = source.id();
  white.white_box = true;
  white.fooling = fooling_breakdown(source, clean, adversarial, labels, mode);
  report.rows.push_back(white);

  for (const auto& t : targets) {
    if (t.id == source.id()) continue;  // already present as the white-box row
    EvalRow row;
    row.target_model = t.id;
    try {
      auto f = t.load();
      row.fooling = fooling_breakdown(f, clean, adversarial, labels, mode);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    report.rows.push_back(row);
  }
  return report;
}

TimingResult time_attack(const AttackFn& attack, const torch::Tensor& sample, int64_t warmup) {
  if (sample.dim() != 4 || sample.size(0) == 0) {
    throw ValidationError("time_attack needs a nonempty [B,C,H,W] sample");
  }
  const int64_t n = sample.size(0);
  for (int64_t i = 0; i < warmup; ++i) attack(sample.slice(0, i % n, i % n + 1), i % n);
  TimingResult out;
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    auto xi = sample.slice(0, i, i + 1);
    const auto t0 = std::chrono::steady_clock::now();
    auto adv = attack(xi, i);
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0).count();
    out.per_image.push_back(s);
    total += s;
  }
  out.mean_seconds = total / static_cast<double>(n);
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace sparsegen
