#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace transda {

// Planar (channel-major) raster with values in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }
  void clamp01();
  bool in_unit_range() const;
};

// Domain tag of the (single) target domain; source domains use their index.
inline constexpr int kTargetDomain = -1;

struct ImageBatch {
  std::vector<Image> images;
  // Absent for target-domain samples.
  std::vector<std::optional<int>> labels;
  std::vector<int> domains;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  bool has_target() const;
  void append(const ImageBatch& other);
};

}  // namespace transda
