#include <gtest/gtest.h>

#include <fstream>

#include "sparsegen/generator.hpp"
#include "sparsegen/perturbation.hpp"
#include "sparsegen/util.hpp"
#include "test_support.hpp"

using namespace sparsegen;
using sparsegen::testing::TempDir;
using sparsegen::testing::tiny_generator_config;

namespace {

torch::Tensor images(int64_t b, int64_t res, uint64_t seed) {
  auto gen = make_generator(seed);
  return torch::rand({b, 3, res, res}, gen);
}

}  // namespace

TEST(Generator, OutputShapes) {
  auto g = build_generator(tiny_generator_config(), 0);
  auto gen = make_generator(1);
  ForwardOptions o;
  o.mode = ForwardMode::Train;
  o.gen = &gen;
  auto t = g->forward(images(2, 16, 2), o);
  EXPECT_EQ(t.magnitude.sizes(), (std::vector<int64_t>{2, 3, 16, 16}));
  EXPECT_EQ(t.soft_mask.sizes(), (std::vector<int64_t>{2, 1, 16, 16}));
  EXPECT_EQ(t.mask.sizes(), (std::vector<int64_t>{2, 1, 16, 16}));
  EXPECT_EQ(t.gate.sizes(), (std::vector<int64_t>{2, 1, 16, 16}));
}

TEST(Generator, InferModeMaskIsBinaryAndBounded) {
  auto cfg = tiny_generator_config();
  cfg.epsilon_pixels = 10;
  auto g = build_generator(cfg, 3);
  auto x = images(3, 16, 4);
  ForwardOptions o;
  auto t = g->forward(x, o);
  EXPECT_TRUE(torch::all((t.mask == 0) | (t.mask == 1)).item<bool>());
  EXPECT_LE(t.magnitude.abs().max().item<double>(), 10.0 / 255.0 + 1e-7);
  auto adv = generate_adversarial(g, x, 0.5);
  EXPECT_GE(adv.min().item<double>(), 0.0);
  EXPECT_LE(adv.max().item<double>(), 1.0);
  EXPECT_LE((adv - x).abs().max().item<double>(), 10.0 / 255.0 + 1e-6);
}

TEST(Generator, SingleDecoderVariantHasFullMask) {
  auto cfg = tiny_generator_config();
  cfg.decoupled = false;
  auto g = build_generator(cfg, 5);
  auto t = g->forward(images(2, 16, 6), {});
  EXPECT_FALSE(t.soft_mask.defined());
  EXPECT_TRUE(torch::all(t.mask == 1).item<bool>());
  EXPECT_THROW(g->soft_mask(g->encode(images(1, 16, 0))), ValidationError);
}

TEST(Generator, RejectsIndivisibleResolution) {
  auto g = build_generator(tiny_generator_config(), 0);
  EXPECT_THROW(g->forward(images(1, 18, 0), {}), ValidationError);
  EXPECT_THROW(g->forward(torch::rand({1, 1, 16, 16}), {}), ValidationError);
}

TEST(Generator, TrainingForwardNeedsRandomGenerator) {
  auto g = build_generator(tiny_generator_config(), 0);
  ForwardOptions o;
  o.mode = ForwardMode::Train;
  EXPECT_THROW(g->forward(images(1, 16, 0), o), ValidationError);
}

TEST(Generator, ConfigValidation) {
  auto cfg = tiny_generator_config();
  cfg.num_up = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = tiny_generator_config();
  cfg.base_width = 4;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Generator, SeededInitIsDeterministic) {
  auto a = build_generator(tiny_generator_config(), 7);
  auto b = build_generator(tiny_generator_config(), 7);
  auto c = build_generator(tiny_generator_config(), 8);
  auto pa = a->parameters(), pb = b->parameters(), pc = c->parameters();
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(torch::equal(pa[i], pb[i]));
    any_diff = any_diff || !torch::equal(pa[i], pc[i]);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Generator, MaskInitBiasSetsInitialDensity) {
  auto cfg = tiny_generator_config();
  cfg.mask_init_bias = 5.0;
  auto g = build_generator(cfg, 0);
  auto soft = g->soft_mask(g->encode(images(1, 16, 1)));
  EXPECT_GT(soft.mean().item<double>(), 0.9);
}

TEST(Generator, SaveLoadRoundTrip) {
  TempDir dir("gen");
  auto cfg = tiny_generator_config();
  auto g = build_generator(cfg, 9);
  save_generator(g, dir.path(), {{"note", "x"}});
  auto loaded = load_generator(dir.path(), cfg);
  EXPECT_EQ(loaded.manifest["note"], "x");
  auto x = images(2, 16, 10);
  EXPECT_TRUE(torch::equal(generate_adversarial(g, x, 0.5),
                           generate_adversarial(loaded.generator, x, 0.5)));

  auto other = cfg;
  other.base_width = 16;
  EXPECT_THROW(load_generator(dir.path(), other), ValidationError);
  EXPECT_THROW(load_generator(dir.path() / "missing"), RuntimeFailure);

  {
    std::ofstream f(dir.path() / "generator.pt", std::ios::app | std::ios::binary);
    f << "tamper";
  }
  EXPECT_THROW(load_generator(dir.path()), RuntimeFailure);
}

TEST(Generator, GradientsReachBothDecoders) {
  auto g = build_generator(tiny_generator_config(), 11);
  auto gen = make_generator(12);
  ForwardOptions o;
  o.mode = ForwardMode::Train;
  o.p = 0.0;
  o.gen = &gen;
  auto t = g->forward(images(1, 16, 13), o);
  (t.perturbation().sum() + t.mask.sum()).backward();
  for (const auto& item : g->named_parameters()) {
    if (item.key().rfind("magnitude_decoder.", 0) == 0 || item.key().rfind("location_decoder.", 0) == 0) {
      ASSERT_TRUE(item.value().grad().defined()) << item.key();
    }
  }
}
