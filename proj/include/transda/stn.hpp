#pragma once

#include <array>
#include <cstdint>

#include "transda/model.hpp"
#include "transda/tensor.hpp"

TRANSDA_CORE_BEGIN

namespace stn {

// phi = identity + caps * tanh(raw): linear part within +-0.3, translation
// within +-0.5 normalized units.
inline constexpr std::array<double, 6> kIdentity = {1, 0, 0, 0, 1, 0};
inline constexpr std::array<double, 6> kCaps = {0.3, 0.3, 0.5, 0.3, 0.3, 0.5};

// Regresses raw affine parameters: conv(8)-pool-relu, conv(16)-pool-relu,
// dense(32)-relu, dense(6). The output layer starts at zero so the initial
// transform is the identity.
class LocalizationNet {
 public:
  LocalizationNet() = default;
  static LocalizationNet init(std::uint64_t seed, InputShape input);
  static LocalizationNet from_parameters(const ParameterList& params, InputShape input);

  // [B, 6]
  Tensor raw_output(const Tensor& x) const;
  const ParameterList& parameters() const { return params_; }
  const InputShape& input_shape() const { return input_; }
  LocalizationNet clone() const;

 private:
  static ParameterList layout(InputShape input);
  const Tensor& param(std::size_t i) const { return params_[i].value; }
  ParameterList params_;
  InputShape input_;
};

// [B, 2, 3] affine parameters, bounded by the caps.
Tensor localize(const Tensor& x, const LocalizationNet& net);
Tensor generate_grid(const Tensor& phi, std::size_t out_h, std::size_t out_w);
Tensor bilinear_sample(const Tensor& x, const Tensor& grid);
// T(x): localize, grid, sample at the input resolution.
Tensor spatial_transform(const Tensor& x, const LocalizationNet& net);
// R(T(x)): forward equals T(x); gradients reaching the localization net are
// negated, turning the descent step into ascent for it.
Tensor adversarial_transform(const Tensor& x, const LocalizationNet& net);

}  // namespace stn

TRANSDA_CORE_END
