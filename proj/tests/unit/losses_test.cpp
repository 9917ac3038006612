#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "transda/losses.hpp"

using namespace transda;

namespace {

Tensor logs(Shape shape, std::initializer_list<double> probs) {
  std::vector<Real> v;
  for (double p : probs) v.push_back(static_cast<Real>(std::log(p)));
  return Tensor::from_data(std::move(shape), std::move(v));
}

ImageBatch tagged(std::vector<int> domains) {
  ImageBatch b;
  for (int d : domains) {
    b.images.emplace_back(1, 2, 2);
    b.labels.push_back(d == kTargetDomain ? std::nullopt : std::optional<int>(0));
    b.domains.push_back(d);
  }
  return b;
}

}  // namespace

TEST(Losses, CrossEntropyHandBatch) {
  const Tensor lp = logs({2, 2}, {0.9, 0.1, 0.4, 0.6});
  const std::vector<int> labels = {0, 1};
  EXPECT_NEAR(cross_entropy(lp, labels).item(), -(std::log(0.9) + std::log(0.6)) / 2, 1e-12);
}

TEST(Losses, UniformCrossEntropyIsLogK) {
  const Tensor lp = logs({1, 7}, {1. / 7, 1. / 7, 1. / 7, 1. / 7, 1. / 7, 1. / 7, 1. / 7});
  const std::vector<int> labels = {3};
  EXPECT_NEAR(cross_entropy(lp, labels).item(), std::log(7.0), 1e-12);
}

TEST(Losses, CrossEntropyRejectsBadLabels) {
  const Tensor lp = logs({1, 2}, {0.5, 0.5});
  const std::vector<int> bad = {2};
  EXPECT_THROW(cross_entropy(lp, bad), std::out_of_range);
  const std::vector<int> two = {0, 1};
  EXPECT_THROW(cross_entropy(lp, two), ShapeError);
}

TEST(Losses, KlKnownValue) {
  // p = [1, 0] written with a negligible second entry.
  const Tensor p = Tensor::from_data({1, 2}, {0, -1e4});
  const Tensor q = logs({1, 2}, {0.5, 0.5});
  EXPECT_NEAR(kl_consistency(p, q).item(), std::log(2.0), 1e-9);
  EXPECT_NEAR(kl_consistency(q, q).item(), 0.0, 1e-12);
}

TEST(Losses, EntropyKnownValue) {
  const Tensor lp = logs({1, 2}, {0.75, 0.25});
  EXPECT_NEAR(entropy_min(lp).item(), -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)), 1e-12);
}

TEST(Losses, TotalCombinesWeightedTerms) {
  LossParts parts;
  parts.supervised = Tensor::scalar(1.0);
  parts.consistency = Tensor::scalar(1.0);
  parts.entropy = Tensor::scalar(2.0);
  parts.adversarial = Tensor::scalar(1.0);
  parts.domains = {0, kTargetDomain};
  const LossWeights w{0.5, 0.1, 0.2};
  EXPECT_NEAR(total_loss(Mode::Adaptation, parts, w).item(), 1.0 + 0.5 + 0.2 + 0.2, 1e-12);
}

TEST(Losses, ZeroWeightsLeaveSupervisedOnly) {
  LossParts parts;
  parts.supervised = Tensor::scalar(0.7);
  parts.consistency = Tensor::scalar(3.0);
  parts.adversarial = Tensor::scalar(4.0);
  parts.domains = {0};
  EXPECT_NEAR(total_loss(Mode::Generalization, parts, {0, 0, 0}).item(), 0.7, 1e-12);
}

TEST(Losses, AdversarialWeightScalesReversedGradient) {
  // d total / d theta_t through a reversed branch equals -lambda_t dKL.
  const Tensor raw = Tensor::from_data({1, 2}, {0.3, -0.2}, true);
  const Tensor clean = stop_gradient(logs({1, 2}, {0.6, 0.4}));
  const auto kl_grad = [&](bool reversed, double lt) {
    Tensor(raw).zero_grad();
    const Tensor aug = log_softmax(reversed ? grad_reverse(raw) : raw);
    LossParts parts;
    parts.supervised = Tensor::scalar(0.0);
    parts.adversarial = kl_consistency(clean, aug);
    parts.domains = {0};
    total_loss(Mode::Generalization, parts, {0, 0, lt}).backward();
    return std::vector<Real>(raw.grad().begin(), raw.grad().end());
  };
  const auto plain = kl_grad(false, 1.0);
  const auto adv = kl_grad(true, 0.25);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(adv[i], -0.25 * plain[i], 1e-12);
}

TEST(Losses, DomainContract) {
  EXPECT_THROW(supervised_labels(tagged({0, kTargetDomain})), DomainContractError);
  EXPECT_EQ(supervised_labels(tagged({0, 1})), (std::vector<int>{0, 0}));

  LossParts parts;
  parts.supervised = Tensor::scalar(1.0);
  parts.consistency = Tensor::scalar(1.0);
  parts.domains = {0, kTargetDomain};
  EXPECT_THROW(total_loss(Mode::Generalization, parts, {}), DomainContractError);

  LossParts ent;
  ent.supervised = Tensor::scalar(1.0);
  ent.entropy = Tensor::scalar(1.0);
  ent.domains = {0};
  EXPECT_THROW(total_loss(Mode::Adaptation, ent, {}), DomainContractError);
  EXPECT_THROW(total_loss(Mode::Generalization, ent, {}), DomainContractError);
}

TEST(Losses, NegativeWeightsRejected) {
  EXPECT_THROW((LossWeights{-1, 0, 0}.validate()), std::invalid_argument);
}
