#include <gtest/gtest.h>

#include <fstream>

#include "sparsegen/classifiers.hpp"
#include "sparsegen/synthetic_shapes.hpp"
#include "sparsegen/util.hpp"
#include "test_support.hpp"

using namespace sparsegen;
using sparsegen::testing::TempDir;
using sparsegen::testing::tiny_classifier;

TEST(Classifier, ArchIdsRoundTrip) {
  EXPECT_EQ(all_archs().size(), 4u);
  for (auto a : all_archs()) EXPECT_EQ(parse_arch(arch_id(a)), a);
  EXPECT_THROW(parse_arch("resnet-9000"), ValidationError);
}

TEST(Classifier, LogitsShapeAndFiniteOnZeroImage) {
  for (auto a : all_archs()) {
    auto f = tiny_classifier(a);
    auto z = f.logits(torch::zeros({3, 3, 32, 32}));
    EXPECT_EQ(z.sizes(), (std::vector<int64_t>{3, 10})) << arch_id(a);
    EXPECT_TRUE(torch::isfinite(z).all().item<bool>()) << arch_id(a);
    EXPECT_EQ(f.predict(torch::zeros({3, 3, 32, 32})).sizes(), (std::vector<int64_t>{3}));
  }
}

TEST(Classifier, InputGradientMatchesFiniteDifferences) {
  for (auto a : all_archs()) {
    auto f = tiny_classifier(a, 1);
    f.net().to(torch::kFloat64);
    auto gen = make_generator(2);
    auto x = torch::rand({1, 3, 32, 32}, gen, torch::kFloat64) * 0.8 + 0.1;
    const int64_t y = 3;
    auto xg = x.clone().requires_grad_(true);
    f.logits(xg)[0][y].backward();
    auto grad = xg.grad();
    const double h = 1e-6;
    for (int64_t i = 12; i < 16; ++i) {
      for (int64_t j = 12; j < 16; ++j) {
        auto p = x.clone(), m = x.clone();
        p[0][1][i][j] += h;
        m[0][1][i][j] -= h;
        const double fd =
            (f.logits(p)[0][y].item<double>() - f.logits(m)[0][y].item<double>()) / (2 * h);
        const double g = grad[0][1][i][j].item<double>();
        EXPECT_NEAR(fd, g, 1e-3 * std::max(std::abs(g), 1e-3)) << arch_id(a) << " " << i << "," << j;
      }
    }
  }
}

TEST(Classifier, ResolutionMismatchNeedsResize) {
  auto f = tiny_classifier(ClassifierArch::SmallResNet);
  EXPECT_THROW(f.logits(torch::zeros({1, 3, 64, 64})), ValidationError);
  f.set_resize(true);
  EXPECT_EQ(f.logits(torch::zeros({1, 3, 64, 64})).sizes(), (std::vector<int64_t>{1, 10}));
}

TEST(Classifier, SaveLoadVerifiesChecksum) {
  TempDir dir("clf");
  auto f = tiny_classifier(ClassifierArch::SmallDenseNet, 4);
  f.save(dir.path());
  auto g = Classifier::load(dir.path());
  auto x = torch::rand({2, 3, 32, 32});
  EXPECT_TRUE(torch::equal(f.logits(x), g.logits(x)));
  EXPECT_EQ(g.manifest().arch, "small-densenet");
  EXPECT_EQ(g.manifest().checksum.size(), 64u);
  {
    std::ofstream out(dir.path() / "classifier.pt", std::ios::app | std::ios::binary);
    out << "x";
  }
  EXPECT_THROW(Classifier::load(dir.path()), RuntimeFailure);
}

TEST(Classifier, TrainingIsSeedDeterministic) {
  SyntheticShapesOptions o;
  o.count = 200;
  auto train = make_synthetic_shapes(o);
  o.seed = 1;
  o.count = 50;
  o.split = "test";
  auto test = make_synthetic_shapes(o);
  ClassifierTrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 50;
  auto a = train_classifier(ClassifierArch::SmallVGG, train, test, 7, opts);
  auto b = train_classifier(ClassifierArch::SmallVGG, train, test, 7, opts);
  EXPECT_EQ(a.manifest().accuracy, b.manifest().accuracy);
  auto pa = a.net().parameters(), pb = b.net().parameters();
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
  EXPECT_EQ(a.manifest().dataset_id, train.info.id);
  // One epoch on 200 images cannot reach the floor; the run is flagged, not rejected.
  EXPECT_TRUE(a.manifest().below_floor);
}

TEST(Classifier, FrozenParameters) {
  auto f = tiny_classifier();
  for (const auto& p : f.net().parameters()) EXPECT_FALSE(p.requires_grad());
  EXPECT_FALSE(f.net().is_training());
}
