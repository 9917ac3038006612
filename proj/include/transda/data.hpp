#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "transda/image.hpp"
#include "transda/rng.hpp"

namespace transda::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Labeled images with a per-sample domain tag. Target-domain labels are
// kept for evaluation only; batches never carry them.
struct Dataset {
  std::string name;
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<int> domains;

  std::size_t size() const { return images.size(); }
  void push_back(Image image, int label, int domain);
  void set_domain(int domain);
  // Copies of the selected samples; labels withheld for the target domain.
  ImageBatch gather(std::span<const std::size_t> indices) const;
  ImageBatch all() const;
};

enum class SourceKind { Synthetic, Directory };

struct DatasetSpec {
  SourceKind kind = SourceKind::Synthetic;
  int num_classes = 7;
  // Synthetic only: samples per class and domain.
  int per_class = 60;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::filesystem::path root;  // directory kind only
  std::string target = "inverted";
  // Empty: every domain other than the target.
  std::vector<std::string> sources;
  // Per-class fraction of each source domain used for training; the rest
  // forms that domain's held-out split.
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DomainData {
  std::vector<Dataset> source_train;
  std::vector<Dataset> source_test;
  Dataset target;

  // All source training samples pooled (domain tags preserved per sample).
  Dataset pooled_sources() const;
  std::size_t num_classes = 0;
};

// Domain names of the synthetic generator, in generation order.
std::span<const std::string_view> synthetic_domain_names();

// Renders K-class glyph images for every synthetic domain: `clean`
// (grayscale), `inverted` (dark glyph on textured light background),
// `rotated` (+-15 degrees, random hue) and `noisy` (low contrast, heavy
// noise). Class balanced and deterministic under spec.seed.
std::vector<Dataset> generate_synthetic(const DatasetSpec& spec);

// Reads root/<domain>/<class>/<image>.png. Domains and classes are ordered
// by name, files by path; class ids follow the sorted class names.
std::vector<Dataset> load_directory(const DatasetSpec& spec);

// Generates or loads the domains and assigns source / target roles.
DomainData load_domains(const DatasetSpec& spec);
DomainData assign_domains(std::vector<Dataset> domains, const DatasetSpec& spec);

// ---------------------------------------------------------------------------
// Corruptions

enum class Corruption {
  GaussianNoise,
  ShotNoise,
  BoxBlur,
  MotionBlur,
  Brightness,
  Contrast,
  Pixelate,
  Jpeg,
};

std::span<const Corruption> all_corruptions();
std::string_view corruption_name(Corruption kind);
std::optional<Corruption> corruption_from_name(std::string_view name);
// Comma-separated list of valid names, for error messages.
std::string corruption_names();

// Severity in 1..5; throws std::out_of_range otherwise.
Image corrupt(const Image& img, Corruption kind, int severity, Rng& rng);
// Corrupts every image with a per-image stream derived from `seed`.
Dataset corrupt_dataset(const Dataset& ds, Corruption kind, int severity, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Batching

// Endless sequence of indices into [0, n) built from consecutive seeded
// shuffles; pass p uses the stream (seed, p).
class IndexCycler {
 public:
  IndexCycler(std::size_t n, std::uint64_t seed);
  std::vector<std::size_t> take(std::size_t count);
  // Jumps to absolute position `position` of the endless sequence.
  void seek(std::size_t position);

 private:
  void load_pass(std::size_t pass);
  std::size_t n_;
  std::uint64_t seed_;
  std::size_t pass_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// One seeded shuffle pass over a dataset per epoch.
class Batcher {
 public:
  Batcher(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed);
  std::size_t batches_per_epoch() const;
  // Index batches of epoch `epoch`; the last one may be short.
  std::vector<std::vector<std::size_t>> epoch_indices(std::size_t epoch) const;
  std::vector<ImageBatch> epoch(std::size_t epoch) const;

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

struct PairedBatch {
  ImageBatch source;
  ImageBatch target;
};

// Paired source / target batches for adaptation. An epoch is one pass over
// the larger set; the smaller one cycles through its own shuffled passes.
// Both halves of a step have the same size.
class PairedBatcher {
 public:
  PairedBatcher(const Dataset& source, const Dataset& target, std::size_t batch_size,
                std::uint64_t seed);
  std::size_t batches_per_epoch() const;
  std::vector<PairedBatch> epoch(std::size_t epoch) const;

 private:
  const Dataset* source_;
  const Dataset* target_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace transda::data
