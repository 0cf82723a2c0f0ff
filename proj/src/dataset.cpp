#include "sparsegen/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sparsegen/image_io.hpp"
#include "sparsegen/util.hpp"

namespace fs = std::filesystem;

namespace sparsegen {

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

const std::vector<std::string> kCifarClasses = {"airplane", "automobile", "bird", "cat",
                                                "deer",     "dog",        "frog", "horse",
                                                "ship",     "truck"};

}  // namespace

Dataset Dataset::subset(const torch::Tensor& indices) const {
  Dataset out;
  out.info = info;
  auto idx = indices.to(torch::kLong);
  out.images = images.index_select(0, idx).contiguous();
  out.labels = labels.index_select(0, idx).contiguous();
  out.class_names = class_names;
  if (!paths.empty()) {
    auto acc = idx.accessor<int64_t, 1>();
    for (int64_t i = 0; i < acc.size(0); ++i) out.paths.push_back(paths[acc[i]]);
  }
  out.info.count = out.images.size(0);
  return out;
}

Dataset Dataset::head(int64_t n) const {
  return subset(torch::arange(std::min(n, info.count), torch::kLong));
}

Dataset Dataset::sample(int64_t n, uint64_t seed) const {
  if (n >= info.count) return head(info.count);
  auto gen = make_generator(derive_seed(seed, streams::kSample));
  auto idx = std::get<0>(torch::randperm(info.count, gen, torch::kLong).slice(0, 0, n).sort());
  return subset(idx);
}

void Dataset::validate() const {
  if (images.dim() != 4) throw ValidationError("dataset images must be [N,C,H,W]");
  if (images.size(0) != info.count || labels.size(0) != info.count) {
    throw ValidationError("dataset count does not match tensors");
  }
  if (images.size(2) != info.height || images.size(3) != info.width) {
    throw ValidationError("dataset images do not match declared resolution");
  }
  if (info.count > 0) {
    if (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= info.num_classes) {
      throw ValidationError("dataset labels outside [0, classes)");
    }
  }
}

Dataset load_dataset(const fs::path& root, const std::string& split) {
  const fs::path split_dir = root / split;
  if (!fs::is_directory(split_dir)) {
    if (fs::exists(root / "data_batch_1.bin") || fs::exists(root / "test_batch.bin")) {
      return load_cifar10_binary(root, split);
    }
    throw RuntimeFailure("missing split directory " + split_dir.string());
  }

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw RuntimeFailure("no class folders under " + split_dir.string());

  Dataset data;
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (size_t c = 0; c < class_dirs.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw RuntimeFailure("empty class folder " + class_dirs[c].string());
    data.class_names.push_back(class_dirs[c].filename().string());
    for (const auto& f : files) {
      auto img = read_image(f);
      if (!images.empty() && !img.sizes().equals(images.front().sizes())) {
        std::ostringstream msg;
        msg << "image " << f.string() << " has shape " << img.sizes() << ", expected "
            << images.front().sizes();
        throw RuntimeFailure(msg.str());
      }
      images.push_back(img);
      labels.push_back(static_cast<int64_t>(c));
      data.paths.push_back(f.string());
    }
  }
  data.images = torch::stack(images);
  data.labels = torch::tensor(labels, torch::kLong);
  data.info.id = "folder:" + fs::weakly_canonical(root).string();
  data.info.split = split;
  data.info.count = data.images.size(0);
  data.info.channels = data.images.size(1);
  data.info.height = data.images.size(2);
  data.info.width = data.images.size(3);
  data.info.num_classes = static_cast<int64_t>(data.class_names.size());
  data.validate();
  return data;
}

Dataset load_cifar10_binary(const fs::path& root, const std::string& split) {
  std::vector<fs::path> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
  } else if (split == "test") {
    files.push_back(root / "test_batch.bin");
  } else {
    throw ValidationError("CIFAR-10 archive has no split '" + split + "'");
  }
  constexpr int64_t kRecord = 1 + 3 * 32 * 32;
  std::vector<uint8_t> bytes;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot read " + f.string());
    std::vector<uint8_t> chunk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (chunk.size() % kRecord != 0) throw RuntimeFailure("truncated CIFAR batch " + f.string());
    bytes.insert(bytes.end(), chunk.begin(), chunk.end());
  }
  const int64_t n = static_cast<int64_t>(bytes.size()) / kRecord;
  auto raw = torch::from_blob(bytes.data(), {n, kRecord}, torch::kUInt8).clone();
  Dataset data;
  data.labels = raw.select(1, 0).to(torch::kLong);
  data.images = raw.slice(1, 1).reshape({n, 3, 32, 32}).to(torch::kFloat32).div_(255.0);
  data.class_names = kCifarClasses;
  data.info = {"cifar10-bin:" + fs::weakly_canonical(root).string(), split, n, 32, 32, 3, 10};
  data.validate();
  return data;
}

void write_dataset_folder(const Dataset& data, const fs::path& root) {
  data.validate();
  std::vector<int64_t> per_class(data.class_names.size(), 0);
  auto labels = data.labels.accessor<int64_t, 1>();
  for (int64_t i = 0; i < data.size(); ++i) {
    const auto c = labels[i];
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << per_class[c]++ << ".png";
    write_png(root / data.info.split / data.class_names[c] / name.str(), data.images[i]);
  }
}

BatchSampler::BatchSampler(int64_t dataset_size, int64_t batch_size, uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (dataset_size <= 0) throw ValidationError("cannot sample from an empty dataset");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");
  batch_size_ = std::min(batch_size_, size_);
  batches_per_epoch_ = size_ / batch_size_;
}

torch::Tensor BatchSampler::indices(int64_t step) {
  const int64_t epoch = step / batches_per_epoch_;
  const int64_t within = step % batches_per_epoch_;
  if (epoch != cached_epoch_) {
    auto gen = make_generator(derive_seed(seed_, streams::kBatchOrder, static_cast<uint64_t>(epoch)));
    permutation_ = torch::randperm(size_, gen, torch::kLong);
    cached_epoch_ = epoch;
  }
  return permutation_.slice(0, within * batch_size_, (within + 1) * batch_size_);
}

}  // namespace sparsegen
