#include "sparsegen/generator.hpp"

#include <sstream>

#include "sparsegen/perturbation.hpp"
#include "sparsegen/util.hpp"

namespace nn = torch::nn;
namespace fs = std::filesystem;

namespace sparsegen {

namespace {

void add_norm(nn::Sequential& seq, Normalization kind, int64_t channels) {
  if (kind == Normalization::Instance) {
    seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true)));
  }
}

struct ResidualBlockImpl : nn::Module {
  ResidualBlockImpl(int64_t channels, Normalization norm) {
    body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
    add_norm(body, norm, channels);
    body->push_back(nn::ReLU());
    body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
    add_norm(body, norm, channels);
    register_module("body", body);
  }

  torch::Tensor forward(torch::Tensor x) { return x + body->forward(x); }

  nn::Sequential body;
};
TORCH_MODULE(ResidualBlock);

nn::Sequential make_decoder(const GeneratorConfig& cfg, int64_t out_channels) {
  nn::Sequential dec;
  int64_t c = cfg.base_width << (cfg.num_down - 1);
  for (int64_t k = 0; k < cfg.num_up; ++k) {
    const bool last = k == cfg.num_up - 1;
    const int64_t next = last ? out_channels : c / 2;
    dec->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(c, next, 3).stride(2).padding(1).output_padding(1)));
    if (!last) {
      add_norm(dec, cfg.normalization, next);
      dec->push_back(nn::ReLU());
    }
    c = next;
  }
  return dec;
}

std::string normalization_name(Normalization n) {
  return n == Normalization::Instance ? "instance" : "none";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "instance") return Normalization::Instance;
  if (s == "none") return Normalization::None;
  throw ValidationError("unknown normalization '" + s + "'");
}

}  // namespace

void GeneratorConfig::validate() const {
  if (input_channels <= 0) throw ValidationError("generator.input_channels must be positive");
  if (base_width < 8) throw ValidationError("generator.base_width must be at least 8");
  if (num_residual_blocks < 0) throw ValidationError("generator.residual_blocks must be >= 0");
  if (num_down < 1) throw ValidationError("generator.num_down must be at least 1");
  if (num_down != num_up) throw ValidationError("generator.num_down must equal generator.num_up");
  if (!(epsilon_pixels > 0.0)) throw ValidationError("epsilon must be positive");
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  return {{"input_channels", cfg.input_channels},
          {"base_width", cfg.base_width},
          {"num_residual_blocks", cfg.num_residual_blocks},
          {"num_down", cfg.num_down},
          {"num_up", cfg.num_up},
          {"epsilon_pixels", cfg.epsilon_pixels},
          {"normalization", normalization_name(cfg.normalization)},
          {"decoupled", cfg.decoupled},
          {"mask_init_bias", cfg.mask_init_bias}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  cfg.input_channels = j.at("input_channels").get<int64_t>();
  cfg.base_width = j.at("base_width").get<int64_t>();
  cfg.num_residual_blocks = j.at("num_residual_blocks").get<int64_t>();
  cfg.num_down = j.at("num_down").get<int64_t>();
  cfg.num_up = j.at("num_up").get<int64_t>();
  cfg.epsilon_pixels = j.at("epsilon_pixels").get<double>();
  cfg.normalization = parse_normalization(j.at("normalization").get<std::string>());
  cfg.decoupled = j.at("decoupled").get<bool>();
  cfg.mask_init_bias = j.value("mask_init_bias", 0.0);
  return cfg;
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = nn::Sequential();
  int64_t c = cfg_.input_channels;
  for (int64_t k = 0; k < cfg_.num_down; ++k) {
    const int64_t next = cfg_.base_width << k;
    encoder_->push_back(nn::Conv2d(nn::Conv2dOptions(c, next, 3).stride(2).padding(1)));
    add_norm(encoder_, cfg_.normalization, next);
    encoder_->push_back(nn::ReLU());
    c = next;
  }
  for (int64_t b = 0; b < cfg_.num_residual_blocks; ++b) {
    encoder_->push_back(ResidualBlock(c, cfg_.normalization));
  }
  register_module("encoder", encoder_);
  magnitude_decoder_ = register_module("magnitude_decoder", make_decoder(cfg_, cfg_.input_channels));
  if (cfg_.decoupled) {
    location_decoder_ = register_module("location_decoder", make_decoder(cfg_, 1));
  }
}

torch::Tensor GeneratorImpl::encode(const torch::Tensor& x) {
  return encoder_->forward(x * 2.0 - 1.0);
}

torch::Tensor GeneratorImpl::magnitude_logits(const torch::Tensor& z) {
  return magnitude_decoder_->forward(z);
}

torch::Tensor GeneratorImpl::soft_mask(const torch::Tensor& z) {
  if (!cfg_.decoupled) throw ValidationError("single-decoder generator has no location head");
  return torch::sigmoid(location_decoder_->forward(z));
}

PerturbationTriple GeneratorImpl::forward(const torch::Tensor& x, const ForwardOptions& opts) {
  if (x.dim() != 4 || x.size(1) != cfg_.input_channels) {
    throw ValidationError("generator input must be [B," + std::to_string(cfg_.input_channels) +
                          ",H,W]");
  }
  const int64_t mult = cfg_.spatial_multiple();
  if (x.size(2) % mult != 0 || x.size(3) % mult != 0) {
    std::ostringstream msg;
    msg << "generator input spatial size " << x.size(2) << "x" << x.size(3)
        << " is not divisible by " << mult;
    throw ValidationError(msg.str());
  }

  const double eps = cfg_.epsilon_pixels / 255.0;
  auto z = encode(x);
  auto raw = magnitude_logits(z);
  if (!torch::isfinite(raw).all().item<bool>()) {
    throw RuntimeFailure("non-finite activations in the magnitude decoder");
  }
  PerturbationTriple out;
  out.magnitude = project_magnitude(raw, eps);
  if (!cfg_.decoupled) {
    out.mask = torch::ones({x.size(0), 1, x.size(2), x.size(3)}, x.options());
    return out;
  }

  out.soft_mask = soft_mask(z);
  if (!torch::isfinite(out.soft_mask).all().item<bool>()) {
    throw RuntimeFailure("non-finite activations in the location decoder");
  }
  if (opts.mode == ForwardMode::Infer) {
    out.mask = hard_quantize(out.soft_mask, opts.tau);
  } else if (opts.quantizer == QuantizerKind::StraightThrough) {
    out.mask = ste_quantize(out.soft_mask, opts.tau);
  } else {
    if (opts.gen == nullptr) throw ValidationError("training forward needs a random generator");
    auto q = random_quantize(out.soft_mask, opts.tau, opts.p, *opts.gen);
    out.mask = q.mask;
    out.gate = q.gate;
  }
  return out;
}

int64_t GeneratorImpl::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

Generator build_generator(const GeneratorConfig& cfg, uint64_t seed) {
  Generator g(cfg);
  auto gen = make_generator(derive_seed(seed, streams::kInit));
  torch::NoGradGuard no_grad;
  for (auto& item : g->named_parameters()) {
    const auto& name = item.key();
    auto& p = item.value();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (p.dim() == 4) {
      p.normal_(0.0, 0.02, gen);
    } else if (is_bias) {
      p.zero_();
    } else {
      p.fill_(1.0);
    }
  }
  if (cfg.decoupled) {
    // Last layer of the location decoder.
    auto params = g->named_parameters();
    std::string last_bias;
    for (auto& item : params) {
      if (item.key().rfind("location_decoder.", 0) == 0 &&
          item.key().size() >= 4 && item.key().compare(item.key().size() - 4, 4, "bias") == 0) {
        last_bias = item.key();
      }
    }
    params[last_bias].fill_(cfg.mask_init_bias);
  }
  return g;
}

torch::Tensor generate_adversarial(Generator& g, const torch::Tensor& x, double tau,
                                   int64_t chunk) {
  torch::NoGradGuard no_grad;
  g->eval();
  ForwardOptions opts;
  opts.mode = ForwardMode::Infer;
  opts.tau = tau;
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < x.size(0); i += chunk) {
    auto xb = x.slice(0, i, std::min(i + chunk, x.size(0)));
    auto t = g->forward(xb, opts);
    parts.push_back(apply_perturbation(xb, t.magnitude, t.mask));
  }
  if (parts.empty()) return x.clone();
  return torch::cat(parts);
}

void save_generator(const Generator& g, const fs::path& dir, const nlohmann::json& manifest,
                    const std::string& tag) {
  fs::create_directories(dir);
  const auto weights = dir / (tag + ".pt");
  torch::serialize::OutputArchive archive;
  g->save(archive);
  archive.save_to(weights.string());
  auto m = manifest;
  if (!m.contains("generator")) m["generator"] = to_json(g->config());
  m["checksum"] = sha256_file(weights);
  write_text_file(dir / (tag + ".json"), m.dump(2) + "\n");
}

LoadedGenerator load_generator(const fs::path& dir, const std::optional<GeneratorConfig>& expected,
                               const std::string& tag) {
  const auto weights = dir / (tag + ".pt");
  const auto manifest_path = dir / (tag + ".json");
  if (!fs::exists(weights) || !fs::exists(manifest_path)) {
    throw RuntimeFailure("no generator checkpoint '" + tag + "' in " + dir.string());
  }
  LoadedGenerator out;
  out.manifest = nlohmann::json::parse(read_text_file(manifest_path));
  auto cfg = generator_config_from_json(out.manifest.at("generator"));
  if (expected) {
    if (to_json(*expected) != to_json(cfg)) {
      throw ValidationError("generator checkpoint config " + to_json(cfg).dump() +
                            " does not match requested " + to_json(*expected).dump());
    }
  }
  if (out.manifest.contains("checksum") &&
      out.manifest["checksum"].get<std::string>() != sha256_file(weights)) {
    throw RuntimeFailure("checksum mismatch for " + weights.string());
  }
  out.generator = Generator(cfg);
  torch::serialize::InputArchive archive;
  archive.load_from(weights.string());
  out.generator->load(archive);
  return out;
}

}  // namespace sparsegen
