#include <gtest/gtest.h>

#include "sparsegen/baselines.hpp"
#include "sparsegen/evaluation.hpp"
#include "sparsegen/util.hpp"
#include "test_support.hpp"

using namespace sparsegen;
using sparsegen::testing::tiny_classifier;

namespace {

// Per-pixel scores of a [1,1,1,3] perturbation are its squared values.
torch::Tensor row(std::vector<float> v) {
  return torch::tensor(v).view({1, 1, 1, static_cast<int64_t>(v.size())});
}

int64_t changed_pixels(const torch::Tensor& delta) {
  return delta.abs().sum(1).gt(0).sum().item<int64_t>();
}

}  // namespace

TEST(L0Project, KeepsHighestScoringPixel) {
  auto d = torch::sqrt(row({5, 2, 9}));
  auto p = l0_project(d, 1);
  EXPECT_TRUE(torch::equal(p, torch::sqrt(row({0, 0, 9}))));
}

TEST(L0Project, ScoresSumOverChannels) {
  // Pixel 0: 1+1 = 2, pixel 1: 1.5^2 = 2.25.
  auto d = torch::tensor({1.0f, 0.0f, 1.0f, 1.5f}).view({1, 2, 1, 2});
  auto p = l0_project(d, 1);
  EXPECT_TRUE(torch::equal(p, torch::tensor({0.0f, 0.0f, 0.0f, 1.5f}).view({1, 2, 1, 2})));
}

TEST(L0Project, TiesGoToLowestIndex) {
  auto p = l0_project(row({3, -3, 3, 1}), 2);
  EXPECT_TRUE(torch::equal(p, row({3, -3, 0, 0})));
}

TEST(L0Project, EdgeCounts) {
  auto d = row({1, -2, 3});
  EXPECT_TRUE(torch::equal(l0_project(d, 3), d));
  EXPECT_TRUE(torch::equal(l0_project(d, 10), d));
  EXPECT_TRUE(torch::equal(l0_project(d, 0), torch::zeros_like(d)));
  EXPECT_THROW(l0_project(d, -1), ValidationError);
}

TEST(L0Project, IdempotentAndPerImage) {
  auto gen = make_generator(1);
  auto d = torch::randn({4, 3, 6, 6}, gen);
  auto p = l0_project(d, 5);
  EXPECT_TRUE(torch::equal(l0_project(p, 5), p));
  for (int64_t b = 0; b < 4; ++b) EXPECT_EQ(changed_pixels(p[b].unsqueeze(0)), 5);
}

TEST(L0Project, MatchesSortOracle) {
  auto gen = make_generator(2);
  auto d = torch::randn({1, 3, 5, 5}, gen);
  auto p = l0_project(d, 7);
  std::vector<std::pair<float, int64_t>> scores;
  for (int64_t i = 0; i < 25; ++i) {
    scores.emplace_back(d[0].select(1, i / 5).select(1, i % 5).pow(2).sum().item<float>(), i);
  }
  std::stable_sort(scores.begin(), scores.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int64_t r = 0; r < 25; ++r) {
    const int64_t i = scores[r].second;
    auto got = p[0].select(1, i / 5).select(1, i % 5);
    auto want = d[0].select(1, i / 5).select(1, i % 5);
    EXPECT_TRUE(torch::equal(got, r < 7 ? want : torch::zeros_like(want))) << i;
  }
}

TEST(Pgd0, RespectsBudgetsAtEveryIterate) {
  auto f = tiny_classifier(ClassifierArch::SmallResNet);
  auto gen = make_generator(3);
  auto x = torch::rand({4, 3, 32, 32}, gen);
  auto y = f.predict(x);
  Pgd0Config cfg;
  cfg.k = 12;
  cfg.epsilon_pixels = 40;
  cfg.step_size_pixels = 20;
  for (int64_t steps = 1; steps <= 4; ++steps) {
    cfg.steps = steps;
    auto r = pgd0_attack(x, y, f, cfg);
    auto delta = r.adversarial - x;
    EXPECT_LE(delta.abs().max().item<double>(), 40.0 / 255.0 + 1e-6);
    EXPECT_GE(r.adversarial.min().item<double>(), 0.0);
    EXPECT_LE(r.adversarial.max().item<double>(), 1.0);
    for (int64_t b = 0; b < 4; ++b) EXPECT_LE(changed_pixels(delta[b].unsqueeze(0)), 12);
    EXPECT_LE(sparsity_of(x, r.adversarial), 12.0 / 1024.0);
    // The success flag agrees with the classifier on the returned image.
    EXPECT_TRUE(torch::equal(r.success, f.predict(r.adversarial).ne(y)));
  }
}

TEST(Pgd0, SeededRunsAreReproducible) {
  auto f = tiny_classifier();
  auto gen = make_generator(4);
  auto x = torch::rand({2, 3, 32, 32}, gen);
  auto y = torch::tensor({0, 1}, torch::kLong);
  Pgd0Config cfg;
  cfg.seed = 11;
  auto a = pgd0_attack(x, y, f, cfg);
  auto b = pgd0_attack(x, y, f, cfg);
  EXPECT_TRUE(torch::equal(a.adversarial, b.adversarial));
  EXPECT_TRUE(torch::equal(a.success, b.success));
}

TEST(Pgd0, ConfigValidation) {
  Pgd0Config cfg;
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.step_size_pixels = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(RandomSparse, ZeroPixelsLeavesImageUnchanged) {
  auto x = torch::rand({2, 3, 8, 8});
  EXPECT_TRUE(torch::equal(random_sparse_baseline(x, 0, 0.1, 1), x));
}

TEST(RandomSparse, ExactSparsityAwayFromTheBox) {
  auto x = torch::full({3, 3, 16, 16}, 0.5f);
  auto adv = random_sparse_baseline(x, 7, 10.0 / 255.0, 2);
  EXPECT_NEAR(sparsity_of(x, adv), 7.0 / 256.0, 1e-12);
  EXPECT_NEAR((adv - x).abs().max().item<double>(), 10.0 / 255.0, 1e-6);
  EXPECT_TRUE(torch::equal(adv, random_sparse_baseline(x, 7, 10.0 / 255.0, 2)));
  EXPECT_FALSE(torch::equal(adv, random_sparse_baseline(x, 7, 10.0 / 255.0, 3)));
}

TEST(RandomSparse, ClampsToBox) {
  auto x = torch::ones({1, 3, 4, 4});
  auto adv = random_sparse_baseline(x, 16, 1.0, 5);
  EXPECT_GE(adv.min().item<double>(), 0.0);
  EXPECT_LE(adv.max().item<double>(), 1.0);
}
