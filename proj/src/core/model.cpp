#include "transda/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string_view>

#include "transda/rng.hpp"

TRANSDA_CORE_BEGIN

namespace {

enum ClassifierParam : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kFc2W, kFc2B };

constexpr std::size_t kConv1 = 16, kConv2 = 32, kHidden = 64, kKernel = 3;

std::size_t pooled_features(const InputShape& in, std::size_t channels) {
  return channels * (in.height / 4) * (in.width / 4);
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

}  // namespace

ParameterList clone_parameters(const ParameterList& params) {
  ParameterList out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({p.name, Tensor::from_data(p.value.shape(),
                                             {p.value.data().begin(), p.value.data().end()},
                                             p.value.requires_grad())});
  }
  return out;
}

Tensor images_to_tensor(std::span<const Image> images, const InputShape& shape) {
  const std::size_t per = shape.channels * shape.height * shape.width;
  std::vector<Real> data(images.size() * per);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = images[b];
    if (img.channels != shape.channels || img.height != shape.height || img.width != shape.width) {
      throw ShapeError("images_to_tensor: image " + std::to_string(b) + " is " +
                       shape_str({img.channels, img.height, img.width}) + ", expected " +
                       shape_str({shape.channels, shape.height, shape.width}));
    }
    std::copy(img.data.begin(), img.data.end(), data.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return Tensor::from_data({images.size(), shape.channels, shape.height, shape.width}, std::move(data));
}

std::vector<Image> tensor_to_images(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("tensor_to_images: expected [B, C, H, W], got " + shape_str(x.shape()));
  std::vector<Image> out;
  const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3), per = c * h * w;
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    Image img(c, h, w);
    for (std::size_t i = 0; i < per; ++i) img.data[i] = static_cast<float>(x.data()[b * per + i]);
    img.clamp01();
    out.push_back(std::move(img));
  }
  return out;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, std::string_view stream) {
  Rng rng = make_rng(seed, stream);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<Real> data(shape_numel(shape));
  for (Real& v : data) v = static_cast<Real>(uniform(rng, -bound, bound));
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

ParameterList Classifier::layout(std::size_t num_classes, InputShape in) {
  const std::size_t feat = pooled_features(in, kConv2);
  return {
      {"classifier.conv1.weight", Tensor::zeros({kConv1, in.channels, kKernel, kKernel}, true)},
      {"classifier.conv1.bias", Tensor::zeros({kConv1}, true)},
      {"classifier.conv2.weight", Tensor::zeros({kConv2, kConv1, kKernel, kKernel}, true)},
      {"classifier.conv2.bias", Tensor::zeros({kConv2}, true)},
      {"classifier.fc1.weight", Tensor::zeros({feat, kHidden}, true)},
      {"classifier.fc1.bias", Tensor::zeros({kHidden}, true)},
      {"classifier.fc2.weight", Tensor::zeros({kHidden, num_classes}, true)},
      {"classifier.fc2.bias", Tensor::zeros({num_classes}, true)},
  };
}

Classifier Classifier::init(std::uint64_t seed, std::size_t num_classes, InputShape input) {
  if (num_classes < 2) throw std::invalid_argument("classifier: num_classes must be >= 2");
  if (input.height < 4 || input.width < 4) throw ShapeError("classifier: input must be at least 4x4");
  Classifier c;
  c.num_classes_ = num_classes;
  c.input_ = input;
  c.params_ = layout(num_classes, input);
  for (auto& p : c.params_) {
    if (p.value.rank() == 1) continue;  // biases stay zero
    const Shape& s = p.value.shape();
    const std::size_t fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
    p.value = kaiming_uniform(s, fan_in, seed, p.name);
  }
  return c;
}

Classifier Classifier::from_parameters(const ParameterList& params, std::size_t num_classes,
                                       InputShape input) {
  Classifier c;
  c.num_classes_ = num_classes;
  c.input_ = input;
  c.params_ = layout(num_classes, input);
  for (auto& slot : c.params_) {
    const auto it = std::find_if(params.begin(), params.end(),
                                 [&](const NamedTensor& p) { return p.name == slot.name; });
    if (it == params.end()) throw ShapeError("classifier: missing parameter " + slot.name);
    if (it->value.shape() != slot.value.shape()) {
      throw ShapeError("classifier: parameter " + slot.name + " has shape " +
                       shape_str(it->value.shape()) + ", expected " + shape_str(slot.value.shape()));
    }
    slot.value = Tensor::from_data(it->value.shape(), {it->value.data().begin(), it->value.data().end()}, true);
  }
  return c;
}

Classifier Classifier::clone() const {
  Classifier c = *this;
  c.params_ = clone_parameters(params_);
  return c;
}

Tensor Classifier::predict_logprobs(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != input_.channels || x.dim(2) != input_.height ||
      x.dim(3) != input_.width) {
    throw ShapeError("classifier: input " + shape_str(x.shape()) + " does not match [B, " +
                     std::to_string(input_.channels) + ", " + std::to_string(input_.height) + ", " +
                     std::to_string(input_.width) + "]");
  }
  Tensor h = relu(max_pool2x2(conv2d(x, param(kConv1W), param(kConv1B), Padding::Same)));
  h = relu(max_pool2x2(conv2d(h, param(kConv2W), param(kConv2B), Padding::Same)));
  h = reshape(h, {x.dim(0), h.numel() / x.dim(0)});
  h = relu(dense(h, param(kFc1W), param(kFc1B)));
  return log_softmax(dense(h, param(kFc2W), param(kFc2B)));
}

std::vector<std::size_t> Classifier::predict(std::span<const Image> images) const {
  NoGradGuard no_grad;
  constexpr std::size_t kChunk = 128;
  std::vector<std::size_t> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto part = images.subspan(start, std::min(kChunk, images.size() - start));
    const Tensor lp = predict_logprobs(images_to_tensor(part, input_));
    for (std::size_t b = 0; b < part.size(); ++b) {
      const auto row = lp.data().subspan(b * num_classes_, num_classes_);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

TRANSDA_CORE_END
