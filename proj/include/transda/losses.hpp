#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "transda/image.hpp"
#include "transda/tensor.hpp"

TRANSDA_CORE_BEGIN

// Violations of the source / target data contract (target labels reaching a
// supervised loss, target samples in a generalization run).
class DomainContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Mode { Adaptation, Generalization };

struct LossWeights {
  double consistency = 1.0;  // lambda_c
  double entropy = 0.1;      // lambda_e, adaptation only
  double adversarial = 0.1;  // lambda_t
  void validate() const;
};

// Labels of a batch; throws DomainContractError if any sample lacks one
// (target-domain samples never expose labels).
std::vector<int> supervised_labels(const ImageBatch& batch);

// Mean over the batch of -logprobs[i, labels[i]].
Tensor cross_entropy(const Tensor& logprobs, std::span<const int> labels);
// Mean over the batch of sum_k p_k (log p_k - log q_k) with p = exp(clean),
// q = exp(augmented). The caller passes the clean side through
// stop_gradient.
Tensor kl_consistency(const Tensor& clean, const Tensor& augmented);
// Mean over the batch of the Shannon entropy -sum_k p_k log p_k.
Tensor entropy_min(const Tensor& logprobs);

struct LossParts {
  Tensor supervised;   // L_m, required
  Tensor consistency;  // L_c, optional
  Tensor entropy;      // L_e, optional, adaptation only
  Tensor adversarial;  // L_adv, optional
  // Domain tags of every sample that fed the unsupervised terms.
  std::vector<int> domains;
};

// L_m + l_c L_c + l_e L_e [adaptation] + l_t L_adv over the parts present.
// Generalization rejects target-tagged samples; adaptation with an entropy
// term requires target samples.
Tensor total_loss(Mode mode, const LossParts& parts, const LossWeights& weights);

TRANSDA_CORE_END
