#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "transda/data.hpp"
#include "transda/png_io.hpp"

using namespace transda;
using namespace transda::data;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.per_class = 40;
  spec.image_size = 16;
  spec.num_classes = 4;
  return spec;
}

Dataset indexed(std::size_t n) {
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) ds.push_back(Image(1, 2, 2, static_cast<float>(i) / 100.0f), 0, 0);
  return ds;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

TEST(Data, SyntheticIsDeterministicAndBalanced) {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  ASSERT_EQ(a.size(), synthetic_domain_names().size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    EXPECT_EQ(a[d].name, synthetic_domain_names()[d]);
    ASSERT_EQ(a[d].size(), 160u);
    std::map<int, int> counts;
    for (std::size_t i = 0; i < a[d].size(); ++i) {
      EXPECT_EQ(a[d].images[i].data, b[d].images[i].data);
      EXPECT_TRUE(a[d].images[i].in_unit_range());
      ++counts[a[d].labels[i]];
    }
    for (auto [label, n] : counts) EXPECT_EQ(n, 40) << label;
  }
  DatasetSpec other = small_spec();
  other.seed = 1;
  EXPECT_NE(generate_synthetic(other)[0].images[0].data, a[0].images[0].data);
}

TEST(Data, DomainRolesAndSplit) {
  DatasetSpec spec = small_spec();
  spec.sources = {"clean", "rotated"};
  const DomainData dd = load_domains(spec);
  ASSERT_EQ(dd.source_train.size(), 2u);
  EXPECT_EQ(dd.target.name, "inverted");
  EXPECT_EQ(dd.num_classes, 4u);
  for (int d : dd.target.domains) EXPECT_EQ(d, kTargetDomain);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(dd.source_train[s].size(), 128u);
    EXPECT_EQ(dd.source_test[s].size(), 32u);
    for (int d : dd.source_train[s].domains) EXPECT_EQ(d, static_cast<int>(s));
  }
  // Target labels are withheld from batches.
  const std::vector<std::size_t> idx = {0, 1};
  const ImageBatch b = dd.target.gather(idx);
  EXPECT_FALSE(b.labels[0].has_value());
  EXPECT_TRUE(b.has_target());

  spec.sources = {"inverted"};
  EXPECT_THROW(load_domains(spec), DataError);
  spec.sources = {"missing"};
  EXPECT_THROW(load_domains(spec), DataError);
}

TEST(Data, SpecValidation) {
  DatasetSpec spec = small_spec();
  spec.num_classes = 1;
  EXPECT_THROW(spec.validate(), DataError);
  spec = small_spec();
  spec.train_fraction = 0;
  EXPECT_THROW(spec.validate(), DataError);
  spec = small_spec();
  spec.kind = SourceKind::Directory;
  EXPECT_THROW(spec.validate(), DataError);
}

TEST(Data, CorruptionSeverityIsMonotone) {
  DatasetSpec spec = small_spec();
  spec.per_class = 40;
  const Dataset clean = generate_synthetic(spec)[0];
  Dataset subset;
  for (std::size_t i = 0; i < 100; ++i) subset.push_back(clean.images[i], clean.labels[i], 0);
  for (Corruption kind : all_corruptions()) {
    double previous = -1;
    for (int s = 1; s <= 5; ++s) {
      const Dataset out = corrupt_dataset(subset, kind, s, 3);
      double dist = 0;
      for (std::size_t i = 0; i < subset.size(); ++i) {
        EXPECT_TRUE(out.images[i].in_unit_range());
        dist += mean_abs_diff(out.images[i], subset.images[i]);
      }
      EXPECT_GT(dist, previous) << corruption_name(kind) << " severity " << s;
      previous = dist;
    }
  }
}

TEST(Data, CorruptionNamesAndSeverityBounds) {
  for (Corruption kind : all_corruptions()) EXPECT_EQ(corruption_from_name(corruption_name(kind)), kind);
  EXPECT_FALSE(corruption_from_name("fog").has_value());
  EXPECT_NE(corruption_names().find("gaussian-noise"), std::string::npos);
  Rng rng = make_rng(0, "test");
  const Image img(1, 4, 4, 0.5f);
  EXPECT_THROW(corrupt(img, Corruption::Contrast, 0, rng), std::out_of_range);
  EXPECT_THROW(corrupt(img, Corruption::Contrast, 6, rng), std::out_of_range);
}

TEST(Data, BlurKeepsConstantImage) {
  const Image img(3, 10, 10, 0.4f);
  Rng rng = make_rng(0, "test");
  for (Corruption kind : {Corruption::BoxBlur, Corruption::MotionBlur, Corruption::Pixelate}) {
    const Image out = corrupt(img, kind, 5, rng);
    for (float v : out.data) EXPECT_NEAR(v, 0.4f, 1e-6) << corruption_name(kind);
  }
}

TEST(Data, DirectoryLayout) {
  TempDir dir("transda_unit_dirdata");
  // Two domains x two classes x one image, class folders out of order.
  for (const char* domain : {"photo", "art"}) {
    for (const char* cls : {"zebra", "apple"}) {
      fs::create_directories(dir.path() / domain / cls);
      Image img(3, 5, 5, cls[0] == 'a' ? 0.0f : 1.0f);
      write_png(dir.path() / domain / cls / "0.png", img);
    }
  }
  DatasetSpec spec;
  spec.kind = SourceKind::Directory;
  spec.root = dir.path();
  spec.image_size = 8;
  const auto domains = load_directory(spec);
  ASSERT_EQ(domains.size(), 2u);
  EXPECT_EQ(domains[0].name, "art");
  EXPECT_EQ(domains[1].name, "photo");
  for (const Dataset& d : domains) {
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.labels, (std::vector<int>{0, 1}));  // apple, zebra
    EXPECT_EQ(d.images[0].height, 8u);
    EXPECT_FLOAT_EQ(d.images[0].data[0], 0.0f);
    EXPECT_FLOAT_EQ(d.images[1].data[0], 1.0f);
  }
  spec.target = "art";
  const DomainData dd = load_domains(spec);
  EXPECT_EQ(dd.num_classes, 2u);
  EXPECT_EQ(dd.source_train[0].name, "photo");
}

TEST(Data, DirectoryErrors) {
  TempDir dir("transda_unit_dirbad");
  DatasetSpec spec;
  spec.kind = SourceKind::Directory;
  spec.root = dir.path() / "absent";
  EXPECT_THROW(load_directory(spec), DataError);
  spec.root = dir.path();
  fs::create_directories(dir.path() / "a" / "only");
  EXPECT_THROW(load_directory(spec), DataError);
}

TEST(Data, BatcherSizesAndPartition) {
  const Dataset ds = indexed(10);
  const Batcher batcher(ds, 3, 5);
  EXPECT_EQ(batcher.batches_per_epoch(), 4u);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto batches = batcher.epoch_indices(e);
    std::vector<std::size_t> sizes, all;
    for (const auto& b : batches) {
      sizes.push_back(b.size());
      all.insert(all.end(), b.begin(), b.end());
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(10);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    EXPECT_EQ(all, expect);
  }
  EXPECT_NE(batcher.epoch_indices(0), batcher.epoch_indices(1));
  EXPECT_EQ(batcher.epoch_indices(1), Batcher(ds, 3, 5).epoch_indices(1));
  EXPECT_THROW(Batcher(ds, 0, 0), DataError);
}

TEST(Data, PairedBatcherCyclesSmallerSide) {
  const Dataset src = indexed(10);
  Dataset tgt = indexed(4);
  tgt.set_domain(kTargetDomain);
  const PairedBatcher pb(src, tgt, 3, 1);
  EXPECT_EQ(pb.batches_per_epoch(), 4u);
  const auto batches = pb.epoch(0);
  ASSERT_EQ(batches.size(), 4u);
  std::multiset<float> seen_src;
  for (const PairedBatch& b : batches) {
    EXPECT_EQ(b.source.size(), b.target.size());
    EXPECT_TRUE(b.target.has_target());
    EXPECT_FALSE(b.source.has_target());
    for (const Image& img : b.source.images) seen_src.insert(img.data[0]);
  }
  EXPECT_EQ(seen_src.size(), 10u);
  EXPECT_EQ(std::set<float>(seen_src.begin(), seen_src.end()).size(), 10u);
}

TEST(Data, IndexCyclerSeekMatchesTake) {
  IndexCycler a(7, 3), b(7, 3);
  const auto first = a.take(20);
  b.seek(13);
  const auto tail = b.take(7);
  EXPECT_TRUE(std::equal(tail.begin(), tail.end(), first.begin() + 13));
}

TEST(Data, PngRoundTrip) {
  TempDir dir("transda_unit_png");
  Image img(3, 4, 5);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
  write_png(dir.path() / "x.png", img);
  const Image back = read_png(dir.path() / "x.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255);
  EXPECT_THROW(read_png(dir.path() / "missing.png"), ImageIoError);
}
