#include "transda/stn.hpp"

#include <algorithm>

TRANSDA_CORE_BEGIN

namespace stn {

namespace {

enum LocParam : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kFc2W, kFc2B };
constexpr std::size_t kConv1 = 8, kConv2 = 16, kHidden = 32, kKernel = 3;

Tensor constant_row(const std::array<double, 6>& v) {
  return Tensor::from_data({2, 3}, std::vector<Real>(v.begin(), v.end()));
}

}  // namespace

ParameterList LocalizationNet::layout(InputShape in) {
  const std::size_t feat = kConv2 * (in.height / 4) * (in.width / 4);
  return {
      {"localizer.conv1.weight", Tensor::zeros({kConv1, in.channels, kKernel, kKernel}, true)},
      {"localizer.conv1.bias", Tensor::zeros({kConv1}, true)},
      {"localizer.conv2.weight", Tensor::zeros({kConv2, kConv1, kKernel, kKernel}, true)},
      {"localizer.conv2.bias", Tensor::zeros({kConv2}, true)},
      {"localizer.fc1.weight", Tensor::zeros({feat, kHidden}, true)},
      {"localizer.fc1.bias", Tensor::zeros({kHidden}, true)},
      {"localizer.fc2.weight", Tensor::zeros({kHidden, 6}, true)},
      {"localizer.fc2.bias", Tensor::zeros({6}, true)},
  };
}

LocalizationNet LocalizationNet::init(std::uint64_t seed, InputShape input) {
  if (input.height < 4 || input.width < 4) throw ShapeError("localizer: input must be at least 4x4");
  LocalizationNet n;
  n.input_ = input;
  n.params_ = layout(input);
  for (std::size_t i : {kConv1W, kConv2W, kFc1W}) {
    auto& p = n.params_[i];
    const Shape& s = p.value.shape();
    const std::size_t fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
    p.value = kaiming_uniform(s, fan_in, seed, p.name);
  }
  return n;
}

LocalizationNet LocalizationNet::from_parameters(const ParameterList& params, InputShape input) {
  LocalizationNet n;
  n.input_ = input;
  n.params_ = layout(input);
  for (auto& slot : n.params_) {
    const auto it = std::find_if(params.begin(), params.end(),
                                 [&](const NamedTensor& p) { return p.name == slot.name; });
    if (it == params.end()) throw ShapeError("localizer: missing parameter " + slot.name);
    if (it->value.shape() != slot.value.shape()) {
      throw ShapeError("localizer: parameter " + slot.name + " has shape " +
                       shape_str(it->value.shape()) + ", expected " + shape_str(slot.value.shape()));
    }
    slot.value = Tensor::from_data(it->value.shape(), {it->value.data().begin(), it->value.data().end()}, true);
  }
  return n;
}

LocalizationNet LocalizationNet::clone() const {
  LocalizationNet n = *this;
  n.params_ = clone_parameters(params_);
  return n;
}

Tensor LocalizationNet::raw_output(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != input_.channels || x.dim(2) != input_.height ||
      x.dim(3) != input_.width) {
    throw ShapeError("localizer: input " + shape_str(x.shape()) + " does not match [B, " +
                     std::to_string(input_.channels) + ", " + std::to_string(input_.height) + ", " +
                     std::to_string(input_.width) + "]");
  }
  Tensor h = relu(max_pool2x2(conv2d(x, param(kConv1W), param(kConv1B), Padding::Same)));
  h = relu(max_pool2x2(conv2d(h, param(kConv2W), param(kConv2B), Padding::Same)));
  h = reshape(h, {x.dim(0), h.numel() / x.dim(0)});
  h = relu(add(matmul(h, param(kFc1W)), param(kFc1B)));
  return add(matmul(h, param(kFc2W)), param(kFc2B));
}

Tensor localize(const Tensor& x, const LocalizationNet& net) {
  const Tensor raw = net.raw_output(x);
  const Tensor bounded = mul(reshape(tanh(raw), {x.dim(0), 2, 3}), constant_row(kCaps));
  return add(bounded, constant_row(kIdentity));
}

Tensor generate_grid(const Tensor& phi, std::size_t out_h, std::size_t out_w) {
  return affine_grid(phi, out_h, out_w);
}

Tensor bilinear_sample(const Tensor& x, const Tensor& grid) { return grid_sample(x, grid); }

Tensor spatial_transform(const Tensor& x, const LocalizationNet& net) {
  return bilinear_sample(x, generate_grid(localize(x, net), x.dim(2), x.dim(3)));
}

Tensor adversarial_transform(const Tensor& x, const LocalizationNet& net) {
  return grad_reverse(spatial_transform(x, net));
}

}  // namespace stn

TRANSDA_CORE_END
