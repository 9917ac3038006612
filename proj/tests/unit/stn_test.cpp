#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "transda/rng.hpp"
#include "transda/stn.hpp"

using namespace transda;

namespace {

const InputShape kInput{1, 8, 8};

Tensor random_input(std::size_t batch, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test.stn");
  std::vector<Real> v(batch * 64);
  for (Real& x : v) x = static_cast<Real>(uniform(rng, 0.0, 1.0));
  return Tensor::from_data({batch, 1, 8, 8}, std::move(v));
}

// Sets every localizer parameter to uniform(-a, a) so the output layer is
// no longer zero.
void randomize(const stn::LocalizationNet& net, double a, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test.stn.params");
  for (const NamedTensor& p : net.parameters()) {
    Tensor t = p.value;
    for (Real& v : t.mutable_data()) v = static_cast<Real>(uniform(rng, -a, a));
  }
}

Tensor theta(std::initializer_list<Real> v) { return Tensor::from_data({1, 2, 3}, v); }

}  // namespace

TEST(Stn, ZeroInitIsIdentity) {
  const auto net = stn::LocalizationNet::init(3, kInput);
  const Tensor x = random_input(2, 0);
  const Tensor phi = stn::localize(x, net);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(phi.data()[b * 6 + k], stn::kIdentity[k]);
  const Tensor y = stn::spatial_transform(x, net);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-12);
}

TEST(Stn, ParametersStayWithinCaps) {
  const auto net = stn::LocalizationNet::init(1, kInput);
  randomize(net, 5.0, 1);
  const Tensor phi = stn::localize(random_input(4, 2), net);
  bool moved = false;
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t k = 0; k < 6; ++k) {
      const double d = phi.data()[b * 6 + k] - stn::kIdentity[k];
      EXPECT_LE(std::abs(d), stn::kCaps[k] + 1e-12);
      moved = moved || std::abs(d) > 1e-3;
    }
  }
  EXPECT_TRUE(moved);
}

TEST(Stn, TranslationMovesSamplingPoint) {
  // u~ = 0.3 at column 13 of 21, v~ = -0.5 at row 1 of 5.
  const Tensor grid = stn::generate_grid(theta({1, 0, 0.5, 0, 1, 0}), 5, 21);
  const Real* g = grid.data().data() + (1 * 21 + 13) * 2;
  EXPECT_NEAR(g[0], 0.8, 1e-12);
  EXPECT_NEAR(g[1], -0.5, 1e-12);
}

TEST(Stn, RotationGrid) {
  // 90 degrees: (u, v) -> (-v, u).
  const Tensor grid = stn::generate_grid(theta({0, -1, 0, 1, 0, 0}), 3, 3);
  const Real* corner = grid.data().data();  // (u~, v~) = (-1, -1)
  EXPECT_NEAR(corner[0], 1.0, 1e-12);
  EXPECT_NEAR(corner[1], -1.0, 1e-12);
}

TEST(Stn, MidpointSampleAveragesNeighbours) {
  // 2x2 image with rows [a, b]; u = 0 lies halfway between the columns.
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {0.2, 0.6, 0.2, 0.6});
  const Tensor grid = Tensor::from_data({1, 1, 2, 2}, {0, -1, 0, 1});
  const Tensor y = stn::bilinear_sample(x, grid);
  EXPECT_NEAR(y.data()[0], 0.4, 1e-12);
  EXPECT_NEAR(y.data()[1], 0.4, 1e-12);
}

TEST(Stn, SamplingOutsideIsZero) {
  const Tensor x = Tensor::full({1, 1, 4, 4}, 1);
  const Tensor grid = Tensor::from_data({1, 1, 1, 2}, {5, 5});
  EXPECT_EQ(stn::bilinear_sample(x, grid).data()[0], 0.0);
}

TEST(Stn, AdversarialTransformNegatesLocalizerGradient) {
  const auto net = stn::LocalizationNet::init(5, kInput);
  randomize(net, 0.3, 6);
  const Tensor x = random_input(2, 7);
  const Tensor w = random_input(2, 8);

  sum(mul(stn::spatial_transform(x, net), w)).backward();
  std::vector<std::vector<Real>> plain;
  for (const NamedTensor& p : net.parameters()) {
    plain.emplace_back(p.value.grad().begin(), p.value.grad().end());
    Tensor(p.value).zero_grad();
  }

  const Tensor y = stn::adversarial_transform(x, net);
  const Tensor ref = stn::spatial_transform(x, net);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.data()[i], ref.data()[i]);
  sum(mul(y, w)).backward();
  for (std::size_t i = 0; i < plain.size(); ++i) {
    const auto g = net.parameters()[i].value.grad();
    ASSERT_EQ(g.size(), plain[i].size());
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], -plain[i][k], 1e-12);
  }
}

TEST(Stn, FromParametersRejectsBadShapes) {
  const auto net = stn::LocalizationNet::init(0, kInput);
  ParameterList params = clone_parameters(net.parameters());
  params[0].value = Tensor::zeros({1, 1, 1, 1}, true);
  EXPECT_THROW(stn::LocalizationNet::from_parameters(params, kInput), ShapeError);
  params.pop_back();
  EXPECT_THROW(stn::LocalizationNet::from_parameters(params, kInput), ShapeError);
}
