#include <algorithm>
#include <numeric>

#include "transda/data.hpp"

namespace transda::data {

void Dataset::push_back(Image image, int label, int domain) {
  images.push_back(std::move(image));
  labels.push_back(label);
  domains.push_back(domain);
}

void Dataset::set_domain(int domain) { std::fill(domains.begin(), domains.end(), domain); }

ImageBatch Dataset::gather(std::span<const std::size_t> indices) const {
  ImageBatch batch;
  batch.images.reserve(indices.size());
  for (std::size_t i : indices) {
    const int d = domains.at(i);
    batch.images.push_back(images.at(i));
    batch.labels.push_back(d == kTargetDomain ? std::nullopt : std::optional<int>(labels.at(i)));
    batch.domains.push_back(d);
  }
  return batch;
}

ImageBatch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return gather(idx);
}

IndexCycler::IndexCycler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {
  if (n_ == 0) throw DataError("index cycler over an empty dataset");
  load_pass(0);
}

void IndexCycler::load_pass(std::size_t pass) {
  pass_ = pass;
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng = make_rng(seed_, "batcher.shuffle", pass);
  std::shuffle(order_.begin(), order_.end(), rng);
  pos_ = 0;
}

void IndexCycler::seek(std::size_t position) {
  load_pass(position / n_);
  pos_ = position % n_;
}

std::vector<std::size_t> IndexCycler::take(std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (pos_ == n_) load_pass(pass_ + 1);
    out.push_back(order_[pos_++]);
  }
  return out;
}

Batcher::Batcher(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw DataError("batch size must be >= 1");
}

std::size_t Batcher::batches_per_epoch() const {
  return (dataset_->size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> Batcher::epoch_indices(std::size_t epoch) const {
  std::vector<std::vector<std::size_t>> out;
  if (dataset_->size() == 0) return out;
  IndexCycler cycler(dataset_->size(), seed_);
  cycler.seek(epoch * dataset_->size());
  std::size_t remaining = dataset_->size();
  while (remaining > 0) {
    const std::size_t n = std::min(batch_size_, remaining);
    out.push_back(cycler.take(n));
    remaining -= n;
  }
  return out;
}

std::vector<ImageBatch> Batcher::epoch(std::size_t epoch) const {
  std::vector<ImageBatch> out;
  for (const auto& idx : epoch_indices(epoch)) out.push_back(dataset_->gather(idx));
  return out;
}

PairedBatcher::PairedBatcher(const Dataset& source, const Dataset& target, std::size_t batch_size,
                             std::uint64_t seed)
    : source_(&source), target_(&target), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw DataError("batch size must be >= 1");
  if (source.size() == 0 || target.size() == 0) throw DataError("paired batching needs both domains non-empty");
}

std::size_t PairedBatcher::batches_per_epoch() const {
  const std::size_t n = std::max(source_->size(), target_->size());
  return (n + batch_size_ - 1) / batch_size_;
}

std::vector<PairedBatch> PairedBatcher::epoch(std::size_t epoch) const {
  const std::size_t n = std::max(source_->size(), target_->size());
  IndexCycler src(source_->size(), derive_seed(seed_, "paired.source"));
  IndexCycler tgt(target_->size(), derive_seed(seed_, "paired.target"));
  src.seek(epoch * n);
  tgt.seek(epoch * n);
  std::vector<PairedBatch> out;
  std::size_t remaining = n;
  while (remaining > 0) {
    const std::size_t b = std::min(batch_size_, remaining);
    out.push_back({source_->gather(src.take(b)), target_->gather(tgt.take(b))});
    remaining -= b;
  }
  return out;
}

}  // namespace transda::data
