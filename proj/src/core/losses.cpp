#include "transda/losses.hpp"

#include <algorithm>
#include <string>

TRANSDA_CORE_BEGIN

void LossWeights::validate() const {
  if (!(consistency >= 0.0 && entropy >= 0.0 && adversarial >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

std::vector<int> supervised_labels(const ImageBatch& batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.domains[i] == kTargetDomain || !batch.labels[i]) {
      throw DomainContractError("supervised loss received an unlabeled target-domain sample");
    }
    out.push_back(*batch.labels[i]);
  }
  return out;
}

Tensor cross_entropy(const Tensor& logprobs, std::span<const int> labels) {
  if (logprobs.rank() != 2 || logprobs.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logprobs " + shape_str(logprobs.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logprobs.dim(0), k = logprobs.dim(1);
  std::vector<Real> mask(b * k, Real(0));
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    mask[i * k + static_cast<std::size_t>(labels[i])] = Real(-1) / static_cast<Real>(b);
  }
  return sum(mul(logprobs, Tensor::from_data({b, k}, std::move(mask))));
}

Tensor kl_consistency(const Tensor& clean, const Tensor& augmented) {
  if (clean.rank() != 2 || clean.shape() != augmented.shape()) {
    throw ShapeError("kl_consistency: shapes " + shape_str(clean.shape()) + " and " +
                     shape_str(augmented.shape()) + " differ");
  }
  const Real inv_b = Real(1) / static_cast<Real>(clean.dim(0));
  return scale(sum(mul(sub(clean, augmented), exp(clean))), inv_b);
}

Tensor entropy_min(const Tensor& logprobs) {
  if (logprobs.rank() != 2) throw ShapeError("entropy_min: expected [B, K], got " + shape_str(logprobs.shape()));
  const Real inv_b = Real(1) / static_cast<Real>(logprobs.dim(0));
  return scale(sum(mul(logprobs, exp(logprobs))), -inv_b);
}

Tensor total_loss(Mode mode, const LossParts& parts, const LossWeights& weights) {
  weights.validate();
  if (!parts.supervised.defined()) throw std::invalid_argument("total_loss: supervised term missing");
  const bool has_target = std::find(parts.domains.begin(), parts.domains.end(), kTargetDomain) !=
                          parts.domains.end();
  if (mode == Mode::Generalization) {
    if (has_target) throw DomainContractError("generalization loss received target-domain samples");
    if (parts.entropy.defined()) throw DomainContractError("generalization has no entropy term");
  } else if (parts.entropy.defined() && !has_target) {
    throw DomainContractError("adaptation entropy term needs target-domain samples");
  }
  Tensor total = parts.supervised;
  const auto accumulate = [&](const Tensor& term, double w) {
    if (term.defined() && w != 0.0) total = add(total, scale(term, static_cast<Real>(w)));
  };
  accumulate(parts.consistency, weights.consistency);
  if (mode == Mode::Adaptation) accumulate(parts.entropy, weights.entropy);
  accumulate(parts.adversarial, weights.adversarial);
  return total;
}

TRANSDA_CORE_END
