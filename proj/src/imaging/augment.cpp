#include "transda/augment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace transda::augment {
namespace {

constexpr std::array<OpInfo, kNumOps> kOps = {{
    {Op::ShearX, "ShearX", MagnitudeType::Continuous, 0.0, 0.3, Group::Geometric},
    {Op::ShearY, "ShearY", MagnitudeType::Continuous, 0.0, 0.3, Group::Geometric},
    {Op::TranslateX, "TranslateX", MagnitudeType::Continuous, 0.0, 100.0, Group::Geometric},
    {Op::TranslateY, "TranslateY", MagnitudeType::Continuous, 0.0, 100.0, Group::Geometric},
    {Op::Rotate, "Rotate", MagnitudeType::Continuous, 0.0, 30.0, Group::Geometric},
    {Op::Flip, "Flip", MagnitudeType::None, 0.0, 0.0, Group::Geometric},
    {Op::Solarize, "Solarize", MagnitudeType::Discrete, 0.0, 255.0, Group::Color},
    {Op::Posterize, "Posterize", MagnitudeType::Discrete, 0.0, 4.0, Group::Color},
    {Op::Invert, "Invert", MagnitudeType::None, 0.0, 0.0, Group::Color},
    {Op::Contrast, "Contrast", MagnitudeType::Continuous, 0.1, 1.9, Group::Color},
    {Op::Color, "Color", MagnitudeType::Continuous, 0.1, 1.9, Group::Color},
    {Op::Brightness, "Brightness", MagnitudeType::Continuous, 0.1, 1.9, Group::Color},
    {Op::Sharpness, "Sharpness", MagnitudeType::Continuous, 0.1, 1.9, Group::Color},
    {Op::AutoContrast, "AutoContrast", MagnitudeType::None, 0.0, 0.0, Group::Color},
    {Op::Equalize, "Equalize", MagnitudeType::None, 0.0, 0.0, Group::Color},
    {Op::CutOut, "CutOut", MagnitudeType::Discrete, 0.0, 40.0, Group::Other},
    {Op::SamplePairing, "SamplePairing", MagnitudeType::Continuous, 0.0, 0.4, Group::Other},
}};

// Pixel magnitudes are defined against a 224-pixel-wide reference image.
constexpr double kReferenceExtent = 224.0;

std::atomic<std::uint64_t> g_skipped_pairings{0};

double signed_magnitude(double m, Rng& rng) { return coin(rng) ? m : -m; }

int to_byte(float v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

std::span<const OpInfo> op_table() { return kOps; }

const OpInfo& info(Op op) { return kOps[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(std::string_view name) {
  for (const OpInfo& i : kOps) {
    if (i.name == name) return i.op;
  }
  return std::nullopt;
}

std::optional<double> denormalize_magnitude(Op op, double m) {
  if (!(m >= 0.0 && m <= 10.0)) {
    throw std::out_of_range("denormalize_magnitude: normalized magnitude " + std::to_string(m) +
                            " outside [0, 10] for " + std::string(info(op).name));
  }
  const OpInfo& i = info(op);
  switch (i.type) {
    case MagnitudeType::None:
      return std::nullopt;
    case MagnitudeType::Continuous:
      return i.lo + (m / 10.0) * (i.hi - i.lo);
    case MagnitudeType::Discrete:
      return std::round(i.lo + (m / 10.0) * (i.hi - i.lo));
  }
  return std::nullopt;
}

std::vector<Op> ops_in(OpSet set) {
  std::vector<Op> out;
  for (const OpInfo& i : kOps) {
    if (set == OpSet::All || (set == OpSet::Color && i.group == Group::Color) ||
        (set == OpSet::Geometric && i.group == Group::Geometric)) {
      out.push_back(i.op);
    }
  }
  return out;
}

void Policy::validate() const {
  if (n_aug < 0) throw std::invalid_argument("policy: n_aug must be >= 0");
  if (!(m_aug >= 0.0 && m_aug <= 10.0)) {
    throw std::invalid_argument("policy: m_aug must lie in [0, 10], got " + std::to_string(m_aug));
  }
}

std::vector<SampledOp> sample_policy(const Policy& policy, std::span<const Op> op_set, Rng& rng) {
  policy.validate();
  if (op_set.empty()) throw std::invalid_argument("sample_policy: empty op set");
  std::vector<SampledOp> out;
  out.reserve(static_cast<std::size_t>(policy.n_aug));
  for (int i = 0; i < policy.n_aug; ++i) {
    const Op op = op_set[uniform_index(rng, op_set.size())];
    out.push_back({op, denormalize_magnitude(op, policy.m_aug)});
  }
  return out;
}

Image apply_transform(Op op, std::optional<double> magnitude, const Image& img, Rng& rng,
                      std::span<const Image> batch) {
  const OpInfo& i = info(op);
  double m = 0.0;
  if (i.type != MagnitudeType::None) {
    if (!magnitude) {
      throw std::invalid_argument("apply_transform: " + std::string(i.name) + " needs a magnitude");
    }
    m = *magnitude;
    if (m < i.lo - 1e-9 || m > i.hi + 1e-9) {
      throw std::out_of_range("apply_transform: magnitude " + std::to_string(m) + " outside [" +
                              std::to_string(i.lo) + ", " + std::to_string(i.hi) + "] for " +
                              std::string(i.name));
    }
  }
  const double sx = static_cast<double>(img.width) / kReferenceExtent;
  const double sy = static_cast<double>(img.height) / kReferenceExtent;
  switch (op) {
    case Op::ShearX:
      return detail::shear_x(img, signed_magnitude(m, rng));
    case Op::ShearY:
      return detail::shear_y(img, signed_magnitude(m, rng));
    case Op::TranslateX:
      return detail::translate(img, signed_magnitude(m * sx, rng), 0.0);
    case Op::TranslateY:
      return detail::translate(img, 0.0, signed_magnitude(m * sy, rng));
    case Op::Rotate:
      return detail::rotate(img, signed_magnitude(m, rng));
    case Op::Flip:
      return detail::flip_horizontal(img);
    case Op::Solarize:
      return detail::solarize(img, m);
    case Op::Posterize:
      return detail::posterize(img, static_cast<int>(m));
    case Op::Invert:
      return detail::invert(img);
    case Op::Contrast:
      return detail::contrast(img, m);
    case Op::Color:
      return detail::color(img, m);
    case Op::Brightness:
      return detail::brightness(img, m);
    case Op::Sharpness:
      return detail::sharpness(img, m);
    case Op::AutoContrast:
      return detail::auto_contrast(img);
    case Op::Equalize:
      return detail::equalize(img);
    case Op::CutOut: {
      const long side = std::lround(m * sx);
      const long cx = static_cast<long>(uniform_index(rng, img.width));
      const long cy = static_cast<long>(uniform_index(rng, img.height));
      return detail::cutout(img, cx, cy, side);
    }
    case Op::SamplePairing: {
      if (batch.size() < 2) {
        if (g_skipped_pairings.fetch_add(1) == 0) {
          std::clog << "augment: SamplePairing needs a batch of at least 2 images; skipped\n";
        }
        return img;
      }
      const Image& partner = batch[uniform_index(rng, batch.size())];
      return detail::sample_pairing(img, partner, m);
    }
  }
  return img;
}

ImageBatch augment_batch(const ImageBatch& batch, const Policy& policy, std::span<const Op> op_set,
                         std::uint64_t seed) {
  policy.validate();
  ImageBatch out = batch;
  if (policy.n_aug == 0) return out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng = make_rng(seed, "augment.image", i);
    for (const SampledOp& s : sample_policy(policy, op_set, rng)) {
      out.images[i] = apply_transform(s.op, s.magnitude, out.images[i], rng, batch.images);
    }
  }
  return out;
}

Image baseline_jitter(const Image& img, Rng& rng, int max_shift) {
  Image out = coin(rng) ? detail::flip_horizontal(img) : img;
  const auto shift = [&] {
    return static_cast<double>(static_cast<int>(uniform_index(rng, 2 * max_shift + 1)) - max_shift);
  };
  const double dx = shift();
  const double dy = shift();
  if (dx != 0.0 || dy != 0.0) out = detail::translate(out, dx, dy);
  const float factor = static_cast<float>(uniform(rng, 0.9, 1.1));
  for (float& v : out.data) v = std::clamp(v * factor, 0.0f, 1.0f);
  return out;
}

std::uint64_t skipped_sample_pairings() { return g_skipped_pairings.load(); }

namespace detail {

namespace {

// Removes rounding noise so exact lattice points sample exactly.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

Image warp_affine(const Image& img, const double (&m)[6]) {
  Image out(img.channels, img.height, img.width);
  const auto h = static_cast<long>(img.height);
  const auto w = static_cast<long>(img.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double sxp = snap(m[0] * x + m[1] * y + m[2]);
      const double syp = snap(m[3] * x + m[4] * y + m[5]);
      const double fx0 = std::floor(sxp), fy0 = std::floor(syp);
      const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      const double fx = sxp - fx0, fy = syp - fy0;
      const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (std::size_t c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int q = 0; q < 4; ++q) {
          if (wts[q] == 0.0 || xs[q] < 0 || ys[q] < 0 || xs[q] >= w || ys[q] >= h) continue;
          acc += wts[q] * img.at(c, static_cast<std::size_t>(ys[q]), static_cast<std::size_t>(xs[q]));
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            std::clamp(static_cast<float>(acc), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Image shear_x(const Image& img, double factor) {
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double m[6] = {1.0, factor, -factor * cy, 0.0, 1.0, 0.0};
  return warp_affine(img, m);
}

Image shear_y(const Image& img, double factor) {
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double m[6] = {1.0, 0.0, 0.0, factor, 1.0, -factor * cx};
  return warp_affine(img, m);
}

Image translate(const Image& img, double dx, double dy) {
  const double m[6] = {1.0, 0.0, -dx, 0.0, 1.0, -dy};
  return warp_affine(img, m);
}

Image rotate(const Image& img, double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  // Source offset = R(-t) applied to the output offset in y-down coordinates.
  const double m[6] = {c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy};
  return warp_affine(img, m);
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image solarize(const Image& img, double threshold_255) {
  Image out = img;
  const float t = static_cast<float>(threshold_255 / 255.0);
  for (float& v : out.data) {
    if (v >= t) v = 1.0f - v;
  }
  return out;
}

Image posterize(const Image& img, int bits) {
  bits = std::clamp(bits, 1, 8);
  const int mask = ~((1 << (8 - bits)) - 1) & 0xff;
  Image out = img;
  for (float& v : out.data) v = static_cast<float>(to_byte(v) & mask) / 255.0f;
  return out;
}

Image invert(const Image& img) {
  Image out = img;
  for (float& v : out.data) v = 1.0f - v;
  return out;
}

Image blend(const Image& degenerate, const Image& img, double factor) {
  Image out = img;
  const auto f = static_cast<float>(factor);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float d = degenerate.data[i];
    out.data[i] = std::clamp(d + f * (img.data[i] - d), 0.0f, 1.0f);
  }
  return out;
}

std::vector<float> luma(const Image& img) {
  const std::size_t n = img.plane();
  if (img.channels < 3) return {img.data.begin(), img.data.begin() + static_cast<std::ptrdiff_t>(n)};
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299f * img.data[i] + 0.587f * img.data[n + i] + 0.114f * img.data[2 * n + i];
  }
  return out;
}

Image contrast(const Image& img, double factor) {
  const std::vector<float> l = luma(img);
  double mean = 0.0;
  for (float v : l) mean += v;
  mean /= static_cast<double>(l.size());
  const Image gray(img.channels, img.height, img.width, static_cast<float>(mean));
  return blend(gray, img, factor);
}

Image color(const Image& img, double factor) {
  const std::vector<float> l = luma(img);
  Image gray(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    std::copy(l.begin(), l.end(), gray.data.begin() + static_cast<std::ptrdiff_t>(c * img.plane()));
  return blend(gray, img, factor);
}

Image brightness(const Image& img, double factor) {
  const Image black(img.channels, img.height, img.width, 0.0f);
  return blend(black, img, factor);
}

Image sharpness(const Image& img, double factor) {
  // 3x3 smoothing kernel [[1,1,1],[1,5,1],[1,1,1]] / 13; border pixels keep
  // their original value.
  Image smooth = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 1; y + 1 < img.height; ++y) {
      for (std::size_t x = 1; x + 1 < img.width; ++x) {
        float acc = 4.0f * img.at(c, y, x);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            acc += img.at(c, static_cast<std::size_t>(static_cast<long>(y) + dy),
                          static_cast<std::size_t>(static_cast<long>(x) + dx));
        smooth.at(c, y, x) = acc / 13.0f;
      }
    }
  }
  return blend(smooth, img, factor);
}

Image auto_contrast(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    auto first = out.data.begin() + static_cast<std::ptrdiff_t>(c * img.plane());
    auto last = first + static_cast<std::ptrdiff_t>(img.plane());
    const auto [lo_it, hi_it] = std::minmax_element(first, last);
    const float lo = *lo_it, hi = *hi_it;
    if (hi <= lo) continue;
    const float inv = 1.0f / (hi - lo);
    for (auto it = first; it != last; ++it) *it = std::clamp((*it - lo) * inv, 0.0f, 1.0f);
    // Exact endpoints regardless of rounding in the scale.
    *(first + (lo_it - first)) = 0.0f;
    *(first + (hi_it - first)) = 1.0f;
  }
  return out;
}

Image equalize(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    std::array<long, 256> hist{};
    float* plane = out.data.data() + c * img.plane();
    for (std::size_t i = 0; i < img.plane(); ++i) ++hist[static_cast<std::size_t>(to_byte(plane[i]))];
    long last_nonzero = 0;
    for (std::size_t b = 0; b < 256; ++b)
      if (hist[b] > 0) last_nonzero = hist[b];
    const long total = static_cast<long>(img.plane());
    const long step = (total - last_nonzero) / 255;
    if (step == 0) continue;
    std::array<int, 256> lut{};
    long n = step / 2;
    for (std::size_t b = 0; b < 256; ++b) {
      lut[b] = static_cast<int>(std::min(255L, n / step));
      n += hist[b];
    }
    for (std::size_t i = 0; i < img.plane(); ++i)
      plane[i] = static_cast<float>(lut[static_cast<std::size_t>(to_byte(plane[i]))]) / 255.0f;
  }
  return out;
}

Image cutout(const Image& img, long cx, long cy, long side) {
  Image out = img;
  if (side <= 0) return out;
  const long x0 = std::max(0L, cx - side / 2);
  const long y0 = std::max(0L, cy - side / 2);
  const long x1 = std::min(static_cast<long>(img.width), cx - side / 2 + side);
  const long y1 = std::min(static_cast<long>(img.height), cy - side / 2 + side);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (long y = y0; y < y1; ++y)
      for (long x = x0; x < x1; ++x) out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 0.0f;
  return out;
}

Image sample_pairing(const Image& img, const Image& partner, double weight) {
  if (!img.same_shape(partner)) {
    throw std::invalid_argument("sample_pairing: partner image shape differs");
  }
  Image out = img;
  const auto w = static_cast<float>(weight);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::clamp((1.0f - w) * img.data[i] + w * partner.data[i], 0.0f, 1.0f);
  }
  return out;
}

}  // namespace detail

}  // namespace transda::augment
