#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "transda/image.hpp"
#include "transda/tensor.hpp"

TRANSDA_CORE_BEGIN

struct InputShape {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  bool operator==(const InputShape&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};
using ParameterList = std::vector<NamedTensor>;

// Deep copy of parameter values into fresh leaves.
ParameterList clone_parameters(const ParameterList& params);

// [B, C, H, W] tensor of the batch (no gradient). Throws ShapeError when an
// image does not match `shape`.
Tensor images_to_tensor(std::span<const Image> images, const InputShape& shape);
std::vector<Image> tensor_to_images(const Tensor& x);

// Uniform(-b, b) with b = sqrt(6 / fan_in), i.e. std sqrt(2 / fan_in).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, std::string_view stream);

// The task classifier: conv(16)-pool-relu, conv(32)-pool-relu,
// dense(64)-relu, dense(K), log-softmax. 3x3 same-padded convolutions.
class Classifier {
 public:
  Classifier() = default;
  static Classifier init(std::uint64_t seed, std::size_t num_classes, InputShape input);
  // Rebuilds from named tensors (checkpoint load); validates every shape.
  static Classifier from_parameters(const ParameterList& params, std::size_t num_classes,
                                    InputShape input);

  Tensor predict_logprobs(const Tensor& x) const;
  std::vector<std::size_t> predict(std::span<const Image> images) const;

  const ParameterList& parameters() const { return params_; }
  std::size_t num_classes() const { return num_classes_; }
  const InputShape& input_shape() const { return input_; }
  Classifier clone() const;

 private:
  static ParameterList layout(std::size_t num_classes, InputShape input);
  const Tensor& param(std::size_t i) const { return params_[i].value; }

  ParameterList params_;
  std::size_t num_classes_ = 0;
  InputShape input_;
};

TRANSDA_CORE_END
