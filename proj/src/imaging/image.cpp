#include "transda/image.hpp"

#include <algorithm>

#include "transda/rng.hpp"

namespace transda {

void Image::clamp01() {
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
}

bool Image::in_unit_range() const {
  return std::all_of(data.begin(), data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

bool ImageBatch::has_target() const {
  return std::find(domains.begin(), domains.end(), kTargetDomain) != domains.end();
}

void ImageBatch::append(const ImageBatch& other) {
  images.insert(images.end(), other.images.begin(), other.images.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  domains.insert(domains.end(), other.domains.begin(), other.domains.end());
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index) {
  // FNV-1a over the stream name.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(base ^ h) + index);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

bool coin(Rng& rng) { return std::bernoulli_distribution(0.5)(rng); }

}  // namespace transda
