#pragma once

#include <filesystem>
#include <stdexcept>

#include "transda/image.hpp"

namespace transda {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decodes any PNG into 1 (gray) or 3 (RGB) channels; alpha is dropped.
Image read_png(const std::filesystem::path& path);
// 8-bit gray or RGB depending on img.channels; values are rounded.
void write_png(const std::filesystem::path& path, const Image& img);

// Bilinear resize with edge clamping (align-corners mapping).
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);
// Converts between 1 and 3 channels (luma / replication).
Image convert_channels(const Image& img, std::size_t channels);

}  // namespace transda
