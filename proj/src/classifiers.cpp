#include "sparsegen/classifiers.hpp"

#include <iostream>

#include <json.hpp>

#include "sparsegen/util.hpp"

namespace nn = torch::nn;
namespace fs = std::filesystem;

namespace sparsegen {

namespace {

constexpr double kChannelMean = 0.5;
constexpr double kChannelStd = 0.25;

torch::Tensor normalize_input(const torch::Tensor& x) { return (x - kChannelMean) / kChannelStd; }

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(bias));
}

// ---------------------------------------------------------------- residual

struct BasicBlockImpl : nn::Module {
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride)
      : c1(conv(in, out, 3, stride)), b1(out), c2(conv(out, out, 3)), b2(out) {
    register_module("c1", c1);
    register_module("b1", b1);
    register_module("c2", c2);
    register_module("b2", b2);
    if (in != out || stride != 1) {
      shortcut = register_module("shortcut", nn::Sequential(conv(in, out, 1, stride),
                                                            nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto h = torch::relu(b1(c1(x)));
    h = b2(c2(h));
    return torch::relu(h + (shortcut.is_empty() ? x : shortcut->forward(x)));
  }

  nn::Conv2d c1;
  nn::BatchNorm2d b1;
  nn::Conv2d c2;
  nn::BatchNorm2d b2;
  nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

class SmallResNet : public ClassifierNet {
 public:
  explicit SmallResNet(int64_t classes)
      : stem(conv(3, 16, 3)), bn(16), s1(16, 16, 1), s2(16, 32, 2), s3(32, 64, 2),
        head(64, classes) {
    register_module("stem", stem);
    register_module("bn", bn);
    register_module("s1", s1);
    register_module("s2", s2);
    register_module("s3", s3);
    register_module("head", head);
  }

  torch::Tensor forward(torch::Tensor x) override {
    auto h = torch::relu(bn(stem(normalize_input(x))));
    h = s3(s2(s1(h)));
    return head(torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1));
  }

 private:
  nn::Conv2d stem;
  nn::BatchNorm2d bn;
  BasicBlock s1, s2, s3;
  nn::Linear head;
};

// ---------------------------------------------------------------- plain

// VGG-style stack without batch normalization.
class SmallVGG : public ClassifierNet {
 public:
  explicit SmallVGG(int64_t classes) {
    features = register_module(
        "features",
        nn::Sequential(conv(3, 16, 3, 1, true), nn::ReLU(), conv(16, 16, 3, 1, true), nn::ReLU(),
                       nn::MaxPool2d(2), conv(16, 32, 3, 1, true), nn::ReLU(),
                       conv(32, 32, 3, 1, true), nn::ReLU(), nn::MaxPool2d(2),
                       conv(32, 64, 3, 1, true), nn::ReLU(), nn::MaxPool2d(2)));
    classifier = register_module(
        "classifier",
        nn::Sequential(nn::Linear(64 * 16, 128), nn::ReLU(), nn::Linear(128, classes)));
  }

  torch::Tensor forward(torch::Tensor x) override {
    auto h = features->forward(normalize_input(x));
    h = torch::adaptive_avg_pool2d(h, {4, 4}).flatten(1);
    return classifier->forward(h);
  }

 private:
  nn::Sequential features{nullptr};
  nn::Sequential classifier{nullptr};
};

// ---------------------------------------------------------------- dense

struct DenseBlockImpl : nn::Module {
  DenseBlockImpl(int64_t in, int64_t growth, int64_t layers_count) {
    for (int64_t k = 0; k < layers_count; ++k) {
      const int64_t width = in + k * growth;
      layers->push_back(nn::Sequential(nn::BatchNorm2d(width), nn::ReLU(), conv(width, growth, 3)));
    }
    register_module("layers", layers);
    out_channels = in + layers_count * growth;
  }

  torch::Tensor forward(torch::Tensor x) {
    for (const auto& layer : *layers) {
      x = torch::cat({x, layer->as<nn::Sequential>()->forward(x)}, 1);
    }
    return x;
  }

  nn::ModuleList layers;
  int64_t out_channels = 0;
};
TORCH_MODULE(DenseBlock);

class SmallDenseNet : public ClassifierNet {
 public:
  explicit SmallDenseNet(int64_t classes)
      : stem(conv(3, 16, 3)), d1(16, 12, 3), t1(nn::Sequential(nn::BatchNorm2d(52), nn::ReLU(),
                                                              conv(52, 32, 1))),
        d2(32, 12, 3), t2(nn::Sequential(nn::BatchNorm2d(68), nn::ReLU(), conv(68, 32, 1))),
        d3(32, 12, 3), final_bn(68), head(68, classes) {
    register_module("stem", stem);
    register_module("d1", d1);
    register_module("t1", t1);
    register_module("d2", d2);
    register_module("t2", t2);
    register_module("d3", d3);
    register_module("final_bn", final_bn);
    register_module("head", head);
  }

  torch::Tensor forward(torch::Tensor x) override {
    auto h = stem(normalize_input(x));
    h = torch::avg_pool2d(t1->forward(d1(h)), 2);
    h = torch::avg_pool2d(t2->forward(d2(h)), 2);
    h = torch::relu(final_bn(d3(h)));
    return head(torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1));
  }

 private:
  nn::Conv2d stem;
  DenseBlock d1;
  nn::Sequential t1;
  DenseBlock d2;
  nn::Sequential t2;
  DenseBlock d3;
  nn::BatchNorm2d final_bn;
  nn::Linear head;
};

// ---------------------------------------------------------------- multi-branch

struct ConvSpec {
  int64_t in, out, k;
};

nn::Sequential conv_bn_relu(std::initializer_list<ConvSpec> specs) {
  nn::Sequential seq;
  for (const auto& s : specs) {
    seq->push_back(conv(s.in, s.out, s.k));
    seq->push_back(nn::BatchNorm2d(s.out));
    seq->push_back(nn::ReLU());
  }
  return seq;
}

struct InceptionBlockImpl : nn::Module {
  InceptionBlockImpl(int64_t in, int64_t b)
      : branch1(conv_bn_relu({{in, b, 1}})),
        branch3(conv_bn_relu({{in, b, 1}, {b, b, 3}})),
        branch5(conv_bn_relu({{in, b / 2, 1}, {b / 2, b, 3}, {b, b, 3}})),
        pool_proj(conv_bn_relu({{in, b, 1}})) {
    register_module("branch1", branch1);
    register_module("branch3", branch3);
    register_module("branch5", branch5);
    register_module("pool_proj", pool_proj);
  }

  torch::Tensor forward(torch::Tensor x) {
    auto pooled = torch::max_pool2d(x, 3, 1, 1);
    return torch::cat({branch1->forward(x), branch3->forward(x), branch5->forward(x),
                       pool_proj->forward(pooled)},
                      1);
  }

  nn::Sequential branch1, branch3, branch5, pool_proj;
};
TORCH_MODULE(InceptionBlock);

class SmallInception : public ClassifierNet {
 public:
  explicit SmallInception(int64_t classes)
      : stem(conv_bn_relu({{3, 24, 3}})), a(24, 8), b(32, 16), tail(conv_bn_relu({{64, 64, 3}})),
        head(64, classes) {
    register_module("stem", stem);
    register_module("a", a);
    register_module("b", b);
    register_module("tail", tail);
    register_module("head", head);
  }

  torch::Tensor forward(torch::Tensor x) override {
    auto h = stem->forward(normalize_input(x));
    h = torch::max_pool2d(a(h), 2);
    h = torch::max_pool2d(b(h), 2);
    h = tail->forward(h);
    return head(torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1));
  }

 private:
  nn::Sequential stem;
  InceptionBlock a;
  InceptionBlock b;
  nn::Sequential tail;
  nn::Linear head;
};

void freeze(ClassifierNet& net) {
  net.eval();
  for (auto& p : net.parameters()) p.set_requires_grad(false);
}

nlohmann::json to_json(const ClassifierManifest& m) {
  return {{"arch", m.arch},           {"seed", m.seed},
          {"accuracy", m.accuracy},   {"epochs", m.epochs},
          {"dataset_id", m.dataset_id}, {"checksum", m.checksum},
          {"num_classes", m.num_classes}, {"height", m.height},
          {"width", m.width},         {"below_floor", m.below_floor}};
}

}  // namespace

std::string arch_id(ClassifierArch arch) {
  switch (arch) {
    case ClassifierArch::SmallResNet:
      return "small-resnet";
    case ClassifierArch::SmallVGG:
      return "small-vgg";
    case ClassifierArch::SmallDenseNet:
      return "small-densenet";
    case ClassifierArch::SmallInception:
      return "small-inception-like";
  }
  return "unknown";
}

ClassifierArch parse_arch(const std::string& id) {
  for (auto a : all_archs()) {
    if (arch_id(a) == id) return a;
  }
  throw ValidationError("unknown classifier architecture '" + id + "'");
}

std::vector<ClassifierArch> all_archs() {
  return {ClassifierArch::SmallResNet, ClassifierArch::SmallVGG, ClassifierArch::SmallDenseNet,
          ClassifierArch::SmallInception};
}

std::shared_ptr<ClassifierNet> make_classifier_net(ClassifierArch arch, int64_t num_classes) {
  switch (arch) {
    case ClassifierArch::SmallResNet:
      return std::make_shared<SmallResNet>(num_classes);
    case ClassifierArch::SmallVGG:
      return std::make_shared<SmallVGG>(num_classes);
    case ClassifierArch::SmallDenseNet:
      return std::make_shared<SmallDenseNet>(num_classes);
    case ClassifierArch::SmallInception:
      return std::make_shared<SmallInception>(num_classes);
  }
  throw ValidationError("unhandled architecture");
}

Classifier::Classifier(std::shared_ptr<ClassifierNet> net, ClassifierManifest manifest)
    : net_(std::move(net)), manifest_(std::move(manifest)), id_(manifest_.arch) {
  freeze(*net_);
}

torch::Tensor Classifier::logits(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) throw ValidationError("classifier input must be [B,3,H,W]");
  auto input = x;
  if (x.size(2) != manifest_.height || x.size(3) != manifest_.width) {
    if (!resize_) {
      throw ValidationError("classifier " + id_ + " expects " + std::to_string(manifest_.height) +
                            "x" + std::to_string(manifest_.width) + " input");
    }
    input = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<int64_t>{manifest_.height, manifest_.width})
               .mode(torch::kBilinear)
               .align_corners(false));
  }
  return net_->forward(input);
}

torch::Tensor Classifier::predict(const torch::Tensor& x) const {
  torch::NoGradGuard no_grad;
  return logits(x).argmax(1);
}

void Classifier::save(const fs::path& dir) const {
  fs::create_directories(dir);
  const auto weights = dir / "classifier.pt";
  torch::serialize::OutputArchive archive;
  net_->save(archive);
  archive.save_to(weights.string());
  auto m = manifest_;
  m.checksum = sha256_file(weights);
  write_text_file(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

Classifier Classifier::load(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto weights = dir / "classifier.pt";
  if (!fs::exists(manifest_path) || !fs::exists(weights)) {
    throw RuntimeFailure("no classifier checkpoint in " + dir.string());
  }
  auto j = nlohmann::json::parse(read_text_file(manifest_path));
  ClassifierManifest m;
  m.arch = j.at("arch").get<std::string>();
  m.seed = j.at("seed").get<uint64_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.epochs = j.at("epochs").get<int64_t>();
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.checksum = j.at("checksum").get<std::string>();
  m.num_classes = j.at("num_classes").get<int64_t>();
  m.height = j.at("height").get<int64_t>();
  m.width = j.at("width").get<int64_t>();
  m.below_floor = j.value("below_floor", false);
  if (sha256_file(weights) != m.checksum) {
    throw RuntimeFailure("checksum mismatch for " + weights.string());
  }
  auto net = make_classifier_net(parse_arch(m.arch), m.num_classes);
  torch::serialize::InputArchive archive;
  archive.load_from(weights.string());
  net->load(archive);
  return Classifier(net, m);
}

Classifier train_classifier(ClassifierArch arch, const Dataset& train, const Dataset& test,
                            uint64_t seed, const ClassifierTrainOptions& opts) {
  train.validate();
  if (train.size() == 0) throw ValidationError("empty training set");
  torch::manual_seed(derive_seed(seed, streams::kInit));
  auto net = make_classifier_net(arch, train.info.num_classes);
  net->train();
  torch::optim::Adam optim(net->parameters(), torch::optim::AdamOptions(opts.learning_rate));
  BatchSampler sampler(train.size(), opts.batch_size, seed);
  const int64_t total_steps = opts.epochs * sampler.batches_per_epoch();
  for (int64_t step = 0; step < total_steps; ++step) {
    auto idx = sampler.indices(step);
    auto x = train.images.index_select(0, idx);
    auto y = train.labels.index_select(0, idx);
    optim.zero_grad();
    auto loss = torch::nn::functional::cross_entropy(net->forward(x), y);
    loss.backward();
    optim.step();
  }

  ClassifierManifest m;
  m.arch = arch_id(arch);
  m.seed = seed;
  m.epochs = opts.epochs;
  m.dataset_id = train.info.id;
  m.num_classes = train.info.num_classes;
  m.height = train.info.height;
  m.width = train.info.width;
  m.accuracy = accuracy(Classifier(net, m), test);
  m.below_floor = m.accuracy < opts.accuracy_floor;
  if (m.below_floor) {
    std::cerr << "warning: " << m.arch << " clean accuracy " << m.accuracy
              << " is below the floor " << opts.accuracy_floor << "\n";
  }
  return Classifier(net, m);
}

torch::Tensor predict_all(const Classifier& f, const torch::Tensor& images, int64_t chunk) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += chunk) {
    parts.push_back(f.logits(images.slice(0, i, std::min(i + chunk, images.size(0)))).argmax(1));
  }
  if (parts.empty()) return torch::empty({0}, torch::kLong);
  return torch::cat(parts);
}

double accuracy(const Classifier& f, const Dataset& data, int64_t chunk) {
  if (data.size() == 0) throw ValidationError("accuracy of an empty dataset");
  auto pred = predict_all(f, data.images, chunk);
  return pred.eq(data.labels).to(torch::kFloat64).mean().item<double>();
}

}  // namespace sparsegen
