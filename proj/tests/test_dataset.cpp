#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "sparsegen/dataset.hpp"
#include "sparsegen/image_io.hpp"
#include "sparsegen/synthetic_shapes.hpp"
#include "sparsegen/util.hpp"
#include "test_support.hpp"

using namespace sparsegen;
using sparsegen::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Dataset small_synthetic(int64_t count, uint64_t seed, const std::string& split = "train") {
  SyntheticShapesOptions o;
  o.count = count;
  o.seed = seed;
  o.split = split;
  return make_synthetic_shapes(o);
}

}  // namespace

TEST(ImageIo, PngRoundTripIsExactOn8BitLevels) {
  TempDir dir("png");
  auto gen = make_generator(1);
  auto img = torch::randint(0, 256, {3, 5, 7}, gen, torch::kFloat32) / 255.0;
  write_png(dir.path() / "a.png", img);
  auto back = read_image(dir.path() / "a.png");
  EXPECT_EQ(back.sizes(), img.sizes());
  EXPECT_TRUE(torch::allclose(back, img, 0, 1e-7));
}

TEST(ImageIo, ReadsBinaryPnm) {
  TempDir dir("pnm");
  {
    std::ofstream f(dir.path() / "a.ppm", std::ios::binary);
    f << "P6\n2 1\n255\n";
    const unsigned char px[] = {255, 0, 0, 0, 128, 255};
    f.write(reinterpret_cast<const char*>(px), sizeof(px));
  }
  auto img = read_image(dir.path() / "a.ppm");
  ASSERT_EQ(img.sizes(), (std::vector<int64_t>{3, 1, 2}));
  EXPECT_FLOAT_EQ(img[0][0][0].item<float>(), 1.0f);
  EXPECT_FLOAT_EQ(img[1][0][1].item<float>(), 128.0f / 255.0f);
}

TEST(ImageIo, UnreadableFileNamesPath) {
  TempDir dir("bad");
  {
    std::ofstream f(dir.path() / "broken.png");
    f << "not an image";
  }
  try {
    read_image(dir.path() / "broken.png");
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos);
  }
}

TEST(LoadDataset, FolderLayoutTenClassesFiveImages) {
  TempDir dir("ds");
  auto d = small_synthetic(50, 3, "train");
  write_dataset_folder(d, dir.path());
  auto loaded = load_dataset(dir.path(), "train");
  EXPECT_EQ(loaded.size(), 50);
  EXPECT_EQ(loaded.info.num_classes, 10);
  EXPECT_EQ(loaded.info.height, 32);
  loaded.validate();
  // Folder order: classes sorted, files sorted within each class.
  auto again = load_dataset(dir.path(), "train");
  EXPECT_EQ(loaded.paths, again.paths);
  EXPECT_TRUE(torch::equal(loaded.images, again.images));
  EXPECT_TRUE(std::is_sorted(loaded.paths.begin(), loaded.paths.end()));
  for (int64_t i = 0; i < 50; ++i) {
    auto rel = fs::path(loaded.paths[i]);
    const auto cls = rel.parent_path().filename().string();
    EXPECT_EQ(loaded.class_names[loaded.labels[i].item<int64_t>()], cls);
  }
}

TEST(LoadDataset, MissingSplitIsAnError) {
  TempDir dir("ds2");
  EXPECT_ANY_THROW(load_dataset(dir.path(), "test"));
}

TEST(LoadDataset, EmptyClassFolderIsAnError) {
  TempDir dir("ds3");
  write_dataset_folder(small_synthetic(20, 4), dir.path());
  fs::create_directories(dir.path() / "train" / "zz_empty");
  EXPECT_ANY_THROW(load_dataset(dir.path(), "train"));
}

TEST(LoadDataset, ShapeMismatchIsAnError) {
  TempDir dir("ds4");
  write_dataset_folder(small_synthetic(20, 5), dir.path());
  auto first_class = dir.path() / "train";
  fs::path cls;
  for (const auto& e : fs::directory_iterator(first_class)) cls = e.path();
  write_png(cls / "odd.png", torch::zeros({3, 8, 8}));
  EXPECT_ANY_THROW(load_dataset(dir.path(), "train"));
}

TEST(Dataset, SubsetAndHead) {
  auto d = small_synthetic(30, 6);
  auto h = d.head(7);
  EXPECT_EQ(h.size(), 7);
  EXPECT_TRUE(torch::equal(h.images, d.images.slice(0, 0, 7)));
  auto s = d.subset(torch::tensor({5, 2}, torch::kLong));
  EXPECT_EQ(s.labels[0].item<int64_t>(), d.labels[5].item<int64_t>());
}

TEST(Dataset, SeededSampleSpansClasses) {
  auto d = small_synthetic(100, 6);
  auto sorted = d.subset(std::get<1>(d.labels.sort(/*stable=*/true, 0, false)));
  auto a = sorted.sample(20, 3);
  auto b = sorted.sample(20, 3);
  EXPECT_EQ(a.size(), 20);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_FALSE(torch::equal(a.images, sorted.sample(20, 4).images));
  // A class-sorted set still yields several classes, unlike head().
  EXPECT_GT(std::get<0>(at::_unique(a.labels)).numel(), 3);
  EXPECT_EQ(std::get<0>(at::_unique(sorted.head(20).labels)).numel(), 2);
  EXPECT_EQ(sorted.sample(500, 3).size(), 100);
}

TEST(SyntheticShapes, DeterministicAndBalanced) {
  auto a = small_synthetic(100, 7);
  auto b = small_synthetic(100, 7);
  auto c = small_synthetic(100, 8);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_FALSE(torch::equal(a.images, c.images));
  EXPECT_EQ(a.info.id, b.info.id);
  EXPECT_NE(a.info.id, c.info.id);
  auto counts = torch::bincount(a.labels, {}, kSyntheticClasses);
  EXPECT_TRUE(torch::all(counts == 10).item<bool>());
  EXPECT_GE(a.images.min().item<double>(), 0.0);
  EXPECT_LE(a.images.max().item<double>(), 1.0);
}

TEST(BatchSampler, EachEpochIsAPermutationAndReproducible) {
  BatchSampler s1(10, 3, 42), s2(10, 3, 42);
  EXPECT_EQ(s1.batches_per_epoch(), 3);
  for (int64_t epoch = 0; epoch < 2; ++epoch) {
    std::set<int64_t> seen;
    for (int64_t k = 0; k < 3; ++k) {
      auto idx = s1.indices(epoch * 3 + k);
      EXPECT_TRUE(torch::equal(idx, s2.indices(epoch * 3 + k)));
      for (int64_t i = 0; i < idx.size(0); ++i) seen.insert(idx[i].item<int64_t>());
    }
    EXPECT_EQ(seen.size(), 9u);
  }
  // Random access gives the same batch as sequential access.
  BatchSampler s3(10, 3, 42);
  EXPECT_TRUE(torch::equal(s3.indices(4), s1.indices(4)));
  EXPECT_FALSE(torch::equal(s1.indices(0), s1.indices(3)));
}
