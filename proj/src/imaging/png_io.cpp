#include "transda/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "transda/augment.hpp"

namespace transda {

Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  const std::size_t ch = gray ? 1 : 3;
  Image out(ch, image.height, image.width);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < ch; ++c)
        out.at(c, y, x) = static_cast<float>(buffer[(y * out.width + x) * ch + c]) / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ImageIoError("write_png: unsupported channel count " + std::to_string(img.channels));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(img.data.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        buffer[(y * img.width + x) * img.channels + c] = static_cast<png_byte>(
            std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  if (img.height == height && img.width == width) return img;
  Image out(img.channels, height, width);
  const auto coord = [](std::size_t i, std::size_t out_n, std::size_t in_n) {
    if (out_n <= 1 || in_n <= 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = coord(y, height, img.height);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = coord(x, width, img.width);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
                         fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
        out.at(c, y, x) = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Image convert_channels(const Image& img, std::size_t channels) {
  if (img.channels == channels) return img;
  if (channels == 1) {
    Image out(1, img.height, img.width);
    out.data = augment::detail::luma(img);
    return out;
  }
  if (channels == 3 && img.channels == 1) {
    Image out(3, img.height, img.width);
    for (std::size_t c = 0; c < 3; ++c)
      std::copy(img.data.begin(), img.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(c * img.plane()));
    return out;
  }
  throw ImageIoError("convert_channels: cannot map " + std::to_string(img.channels) + " to " +
                     std::to_string(channels) + " channels");
}

}  // namespace transda
