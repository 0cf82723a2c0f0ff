#include "sparsegen/trainer.hpp"

#include <cmath>

#include "sparsegen/perturbation.hpp"
#include "sparsegen/util.hpp"

namespace fs = std::filesystem;

namespace sparsegen {

// ---------------------------------------------------------------- config

void AttackConfig::validate() const {
  if (!(epsilon_pixels > 0.0) || epsilon_pixels > 255.0) {
    throw ValidationError("attack.epsilon must lie in (0, 255]");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("attack.tau must lie in (0,1)");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("attack.p must lie in [0,1]");
  if (kappa < 0.0) throw ValidationError("attack.kappa must be non-negative");
  if (lambda_s < 0.0) throw ValidationError("attack.lambda_s must be non-negative");
  if (lambda_q < 0.0) throw ValidationError("attack.lambda_q must be non-negative");
  if (targeted && target_class < 0) throw ValidationError("attack.target_class must be >= 0");
}

std::string AblationFlags::name() const {
  if (no_decouple) return "no_decouple";
  if (p_zero) return "p_zero";
  if (ste) return "ste";
  if (no_sparse_loss) return "no_sparse_loss";
  if (no_quanti_loss) return "no_quanti_loss";
  return "proposed";
}

void TrainConfig::validate() const {
  attack.validate();
  if (epochs <= 0 && max_steps <= 0) throw ValidationError("train.epochs must be positive");
  if (batch_size <= 0) throw ValidationError("train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train.beta1/beta2 must lie in [0,1)");
  }
  if (checkpoint_every < 0) throw ValidationError("train.checkpoint_every must be >= 0");
  if (ablation.p_zero && ablation.ste) {
    throw ValidationError("ablation flags p_zero and ste select different quantizers");
  }
  if (ablation.no_decouple && (ablation.p_zero || ablation.ste || ablation.no_quanti_loss)) {
    throw ValidationError("no_decouple has no location mask; quantizer and quantization-loss "
                          "flags cannot be combined with it");
  }
}

int64_t TrainConfig::total_steps(int64_t dataset_size) const {
  if (max_steps > 0) return max_steps;
  const int64_t per_epoch = std::max<int64_t>(1, dataset_size / std::min(batch_size, dataset_size));
  return epochs * per_epoch;
}

double TrainConfig::effective_p() const { return ablation.p_zero ? 0.0 : attack.p; }

double TrainConfig::effective_lambda_s() const {
  return ablation.no_sparse_loss ? 0.0 : attack.lambda_s;
}

double TrainConfig::effective_lambda_q() const {
  return (ablation.no_quanti_loss || ablation.no_decouple) ? 0.0 : attack.lambda_q;
}

QuantizerKind TrainConfig::quantizer() const {
  return ablation.ste ? QuantizerKind::StraightThrough : QuantizerKind::Random;
}

nlohmann::json to_json(const AttackConfig& a) {
  return {{"epsilon_pixels", a.epsilon_pixels}, {"tau", a.tau},           {"p", a.p},
          {"kappa", a.kappa},                   {"lambda_s", a.lambda_s}, {"lambda_q", a.lambda_q},
          {"targeted", a.targeted},             {"target_class", a.target_class}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"attack", to_json(c.attack)},
          {"ablation",
           {{"no_decouple", c.ablation.no_decouple},
            {"p_zero", c.ablation.p_zero},
            {"ste", c.ablation.ste},
            {"no_sparse_loss", c.ablation.no_sparse_loss},
            {"no_quanti_loss", c.ablation.no_quanti_loss}}}};
}

AttackConfig attack_config_from_json(const nlohmann::json& j) {
  AttackConfig a;
  a.epsilon_pixels = j.at("epsilon_pixels").get<double>();
  a.tau = j.at("tau").get<double>();
  a.p = j.at("p").get<double>();
  a.kappa = j.at("kappa").get<double>();
  a.lambda_s = j.at("lambda_s").get<double>();
  a.lambda_q = j.at("lambda_q").get<double>();
  a.targeted = j.at("targeted").get<bool>();
  a.target_class = j.at("target_class").get<int64_t>();
  return a;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int64_t>();
  c.max_steps = j.at("max_steps").get<int64_t>();
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  c.attack = attack_config_from_json(j.at("attack"));
  const auto& ab = j.at("ablation");
  c.ablation.no_decouple = ab.at("no_decouple").get<bool>();
  c.ablation.p_zero = ab.at("p_zero").get<bool>();
  c.ablation.ste = ab.at("ste").get<bool>();
  c.ablation.no_sparse_loss = ab.at("no_sparse_loss").get<bool>();
  c.ablation.no_quanti_loss = ab.at("no_quanti_loss").get<bool>();
  return c;
}

// ---------------------------------------------------------------- trainer

GeneratorTrainer::GeneratorTrainer(Generator g, Classifier source, TrainConfig cfg)
    : g_(std::move(g)),
      source_(std::move(source)),
      cfg_(std::move(cfg)),
      optim_(g_->parameters(),
             torch::optim::AdamOptions(cfg_.learning_rate).betas({cfg_.beta1, cfg_.beta2})),
      log_(g_->config().decoupled) {
  cfg_.validate();
  if (cfg_.ablation.no_decouple == g_->config().decoupled) {
    throw ValidationError(cfg_.ablation.no_decouple
                              ? "no_decouple training needs a single-decoder generator"
                              : "a single-decoder generator needs the no_decouple flag");
  }
  if (std::abs(g_->config().epsilon_pixels - cfg_.attack.epsilon_pixels) > 1e-12) {
    throw ValidationError("generator epsilon differs from attack.epsilon");
  }
  if (cfg_.attack.targeted && cfg_.attack.target_class >= source_.manifest().num_classes) {
    throw ValidationError("attack.target_class is outside the classifier's classes");
  }
}

uint64_t GeneratorTrainer::gate_seed_for(int64_t step_index) const {
  return derive_seed(cfg_.seed, streams::kGate, static_cast<uint64_t>(step_index));
}

CompositeLoss GeneratorTrainer::loss_on(const torch::Tensor& x, const torch::Tensor& y,
                                        uint64_t gate_seed) {
  auto gen = make_generator(gate_seed);
  ForwardOptions fo;
  fo.mode = ForwardMode::Train;
  fo.quantizer = cfg_.quantizer();
  fo.tau = cfg_.attack.tau;
  fo.p = cfg_.effective_p();
  fo.gen = &gen;
  auto t = g_->forward(x, fo);
  auto x_adv = apply_perturbation(x, t.magnitude, t.mask);
  auto logits = source_.logits(x_adv);

  LossTerms terms;
  if (cfg_.attack.targeted) {
    auto target = torch::full({x.size(0)}, cfg_.attack.target_class, torch::kLong);
    terms.adv = adv_loss_targeted(logits, target, cfg_.attack.kappa).mean();
  } else {
    terms.adv = adv_loss_untargeted(logits, y, cfg_.attack.kappa).mean();
  }
  if (g_->config().decoupled) {
    terms.sparse = sparse_loss(t.mask);
    terms.quanti = quantization_loss(t.soft_mask, t.mask);
  } else {
    terms.sparse = sparse_loss(t.perturbation());
  }
  return total_loss(terms, cfg_.effective_lambda_s(), cfg_.effective_lambda_q(),
                    cfg_.attack.kappa);
}

LossBreakdown GeneratorTrainer::step(const torch::Tensor& x, const torch::Tensor& y,
                                     int64_t step_index) {
  g_->train();
  optim_.zero_grad();
  auto loss = loss_on(x, y, gate_seed_for(step_index));
  if (!std::isfinite(loss.breakdown.total)) {
    throw TrainingDiverged(step_index,
                           "non-finite training loss at step " + std::to_string(step_index));
  }
  loss.total.backward();
  optim_.step();
  return loss.breakdown;
}

void GeneratorTrainer::run(const Dataset& data, int64_t end_step,
                           const std::optional<fs::path>& checkpoint_dir) {
  if (data.size() == 0) throw ValidationError("training dataset is empty");
  BatchSampler sampler(data.size(), cfg_.batch_size, cfg_.seed);
  for (; next_step_ < end_step; ++next_step_) {
    auto idx = sampler.indices(next_step_);
    auto x = data.images.index_select(0, idx);
    auto y = data.labels.index_select(0, idx);
    log_.append(next_step_, step(x, y, next_step_));
    if (checkpoint_dir && cfg_.checkpoint_every > 0 && (next_step_ + 1) % cfg_.checkpoint_every == 0) {
      ++next_step_;
      save_checkpoint(*checkpoint_dir, data);
      --next_step_;
    }
  }
  if (checkpoint_dir) save_checkpoint(*checkpoint_dir, data);
}

void GeneratorTrainer::save_checkpoint(const fs::path& dir, const Dataset& data) const {
  nlohmann::json manifest;
  manifest["generator"] = to_json(g_->config());
  manifest["train"] = to_json(cfg_);
  manifest["epsilon_pixels"] = cfg_.attack.epsilon_pixels;
  manifest["tau"] = cfg_.attack.tau;
  manifest["p"] = cfg_.effective_p();
  manifest["kappa"] = cfg_.attack.kappa;
  manifest["lambda_s"] = cfg_.effective_lambda_s();
  manifest["lambda_q"] = cfg_.effective_lambda_q();
  manifest["source_model"] = source_.id();
  manifest["source_checksum"] = source_.manifest().checksum;
  manifest["dataset_id"] = data.info.id;
  manifest["seed"] = cfg_.seed;
  manifest["steps"] = next_step_;
  save_generator(g_, dir, manifest);
  torch::save(optim_, (dir / "optimizer.pt").string());
  log_.write_csv(dir / "train_log.csv");
}

GeneratorTrainer GeneratorTrainer::resume(const fs::path& dir, Classifier source) {
  auto loaded = load_generator(dir);
  auto cfg = train_config_from_json(loaded.manifest.at("train"));
  if (loaded.manifest.at("source_model").get<std::string>() != source.id()) {
    throw ValidationError("checkpoint was trained against '" +
                          loaded.manifest.at("source_model").get<std::string>() + "', not '" +
                          source.id() + "'");
  }
  GeneratorTrainer trainer(loaded.generator, std::move(source), cfg);
  torch::load(trainer.optim_, (dir / "optimizer.pt").string());
  trainer.next_step_ = loaded.manifest.at("steps").get<int64_t>();
  return trainer;
}

TrainResult train_generator(Generator g, const Classifier& source, const Dataset& data,
                            const TrainConfig& cfg, const std::optional<fs::path>& checkpoint_dir) {
  if (cfg.ablation.no_decouple) {
    throw ValidationError("use train_no_decouple for the single-decoder variant");
  }
  GeneratorTrainer trainer(g, source, cfg);
  trainer.run(data, cfg.total_steps(data.size()), checkpoint_dir);
  return {trainer.generator(), trainer.log(), trainer.next_step()};
}

TrainResult train_no_decouple(Generator g, const Classifier& source, const Dataset& data,
                              const TrainConfig& cfg, const std::optional<fs::path>& checkpoint_dir) {
  auto c = cfg;
  c.ablation = AblationFlags{};
  c.ablation.no_decouple = true;
  GeneratorTrainer trainer(g, source, c);
  trainer.run(data, c.total_steps(data.size()), checkpoint_dir);
  return {trainer.generator(), trainer.log(), trainer.next_step()};
}

AdhocResult train_adhoc(const torch::Tensor& x, int64_t y, const Classifier& source,
                        const GeneratorConfig& gen_cfg, const TrainConfig& cfg, int64_t steps) {
  if (x.dim() != 4 || x.size(0) != 1) throw ValidationError("ad-hoc mode takes a single image");
  if (steps <= 0) throw ValidationError("ad-hoc step budget must be positive");
  GeneratorTrainer trainer(build_generator(gen_cfg, cfg.seed), source, cfg);
  auto label = torch::full({1}, y, torch::kLong);
  const auto success = [&](const torch::Tensor& adv) {
    auto pred = source.predict(adv).item<int64_t>();
    return cfg.attack.targeted ? pred == cfg.attack.target_class : pred != y;
  };
  for (int64_t s = 0; s < steps; ++s) trainer.step(x, label, s);
  AdhocResult out;
  out.steps = steps;
  out.adversarial = generate_adversarial(trainer.generator(), x, cfg.attack.tau);
  out.adversarial_success = success(out.adversarial);
  out.converged = out.adversarial_success;
  return out;
}

}  // namespace sparsegen
