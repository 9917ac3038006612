#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "transda/data.hpp"

namespace transda::data {
namespace {

constexpr std::array<Corruption, 8> kAll = {
    Corruption::GaussianNoise, Corruption::ShotNoise,  Corruption::BoxBlur,
    Corruption::MotionBlur,    Corruption::Brightness, Corruption::Contrast,
    Corruption::Pixelate,      Corruption::Jpeg,
};

constexpr std::array<std::string_view, 8> kNames = {
    "gaussian-noise", "shot-noise", "box-blur", "motion-blur",
    "brightness",     "contrast",   "pixelate", "jpeg",
};

// Severity tables, index 0 = severity 1.
constexpr std::array<double, 5> kGaussianSigma = {0.08, 0.12, 0.18, 0.26, 0.38};
constexpr std::array<double, 5> kShotPhotons = {60.0, 25.0, 12.0, 6.0, 3.0};
constexpr std::array<int, 5> kBoxSide = {2, 3, 4, 5, 7};
constexpr std::array<int, 5> kMotionLength = {3, 5, 7, 9, 13};
constexpr std::array<double, 5> kBrightnessShift = {0.1, 0.2, 0.3, 0.4, 0.5};
constexpr std::array<double, 5> kContrastFactor = {0.6, 0.45, 0.3, 0.2, 0.1};
constexpr std::array<double, 5> kPixelateScale = {0.9, 0.75, 0.6, 0.45, 0.3};
constexpr std::array<double, 5> kJpegStep = {0.04, 0.08, 0.15, 0.25, 0.4};

// Separable mean filter over window [x - before, x + after], clipped at the
// border and renormalized.
Image window_mean(const Image& img, int before_x, int after_x, int before_y, int after_y) {
  Image tmp = img;
  const auto w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        int n = 0;
        for (long k = std::max(0L, x - before_x); k <= std::min(w - 1, x + after_x); ++k, ++n)
          acc += img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(k));
        tmp.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc / n);
      }
    }
  }
  Image out = tmp;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        int n = 0;
        for (long k = std::max(0L, y - before_y); k <= std::min(h - 1, y + after_y); ++k, ++n)
          acc += tmp.at(c, static_cast<std::size_t>(k), static_cast<std::size_t>(x));
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc / n);
      }
    }
  }
  return out;
}

Image pixelate(const Image& img, double scale) {
  const auto small_w = std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(img.width) * scale));
  const auto small_h = std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(img.height) * scale));
  // Box-average down, nearest-neighbour up.
  Image small(img.channels, small_h, small_w);
  std::vector<int> counts(small_h * small_w, 0);
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::size_t sy = y * small_h / img.height;
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t sx = x * small_w / img.width;
      ++counts[sy * small_w + sx];
      for (std::size_t c = 0; c < img.channels; ++c) small.at(c, sy, sx) += img.at(c, y, x);
    }
  }
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t i = 0; i < small_h * small_w; ++i)
      small.data[c * small_h * small_w + i] /= static_cast<float>(std::max(1, counts[i]));
  Image out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(c, y, x) = small.at(c, y * small_h / img.height, x * small_w / img.width);
  return out;
}

// 8x8 block DCT-II, coefficients quantized with a step growing with
// frequency, then inverted. Partial border blocks are processed in place.
Image jpeg_quantize(const Image& img, double step) {
  constexpr int kB = 8;
  std::array<std::array<double, kB>, kB> basis{};
  for (int k = 0; k < kB; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / kB) : std::sqrt(2.0 / kB);
    for (int n = 0; n < kB; ++n) basis[k][n] = a * std::cos(std::numbers::pi * (n + 0.5) * k / kB);
  }
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t by = 0; by < img.height; by += kB) {
      for (std::size_t bx = 0; bx < img.width; bx += kB) {
        double block[kB][kB] = {};
        for (int y = 0; y < kB; ++y)
          for (int x = 0; x < kB; ++x) {
            const std::size_t yy = std::min(by + y, img.height - 1);
            const std::size_t xx = std::min(bx + x, img.width - 1);
            block[y][x] = img.at(c, yy, xx) - 0.5;
          }
        double coef[kB][kB] = {};
        for (int u = 0; u < kB; ++u)
          for (int v = 0; v < kB; ++v) {
            double s = 0;
            for (int y = 0; y < kB; ++y)
              for (int x = 0; x < kB; ++x) s += basis[u][y] * basis[v][x] * block[y][x];
            const double q = step * (1.0 + u + v);
            coef[u][v] = std::round(s / q) * q;
          }
        for (int y = 0; y < kB; ++y)
          for (int x = 0; x < kB; ++x) {
            if (by + y >= img.height || bx + x >= img.width) continue;
            double s = 0;
            for (int u = 0; u < kB; ++u)
              for (int v = 0; v < kB; ++v) s += basis[u][y] * basis[v][x] * coef[u][v];
            out.at(c, by + y, bx + x) = static_cast<float>(s + 0.5);
          }
      }
    }
  }
  return out;
}

}  // namespace

std::span<const Corruption> all_corruptions() { return kAll; }

std::string_view corruption_name(Corruption kind) { return kNames[static_cast<std::size_t>(kind)]; }

std::optional<Corruption> corruption_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return kAll[i];
  return std::nullopt;
}

std::string corruption_names() {
  std::string out;
  for (std::string_view n : kNames) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

Image corrupt(const Image& img, Corruption kind, int severity, Rng& rng) {
  if (severity < 1 || severity > 5) {
    throw std::out_of_range("corrupt: severity must be in 1..5, got " + std::to_string(severity));
  }
  const auto s = static_cast<std::size_t>(severity - 1);
  Image out = img;
  switch (kind) {
    case Corruption::GaussianNoise:
      for (float& v : out.data) v += static_cast<float>(normal(rng, 0.0, kGaussianSigma[s]));
      break;
    case Corruption::ShotNoise: {
      const double lambda = kShotPhotons[s];
      for (float& v : out.data) {
        std::poisson_distribution<int> dist(std::max(0.0, static_cast<double>(v)) * lambda);
        v = static_cast<float>(dist(rng) / lambda);
      }
      break;
    }
    case Corruption::BoxBlur: {
      const int k = kBoxSide[s];
      out = window_mean(img, (k - 1) / 2, k / 2, (k - 1) / 2, k / 2);
      break;
    }
    case Corruption::MotionBlur: {
      const int k = kMotionLength[s];
      out = window_mean(img, k / 2, k / 2, 0, 0);
      break;
    }
    case Corruption::Brightness:
      for (float& v : out.data) v += static_cast<float>(kBrightnessShift[s]);
      break;
    case Corruption::Contrast: {
      for (std::size_t c = 0; c < img.channels; ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < img.plane(); ++i) mean += img.data[c * img.plane() + i];
        mean /= static_cast<double>(img.plane());
        for (std::size_t i = 0; i < img.plane(); ++i) {
          float& v = out.data[c * img.plane() + i];
          v = static_cast<float>((v - mean) * kContrastFactor[s] + mean);
        }
      }
      break;
    }
    case Corruption::Pixelate:
      out = pixelate(img, kPixelateScale[s]);
      break;
    case Corruption::Jpeg:
      out = jpeg_quantize(img, kJpegStep[s]);
      break;
  }
  out.clamp01();
  return out;
}

Dataset corrupt_dataset(const Dataset& ds, Corruption kind, int severity, std::uint64_t seed) {
  Dataset out = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng = make_rng(seed, "corrupt." + std::string(corruption_name(kind)), i);
    out.images[i] = corrupt(ds.images[i], kind, severity, rng);
  }
  return out;
}

}  // namespace transda::data
