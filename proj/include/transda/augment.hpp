#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "transda/image.hpp"
#include "transda/rng.hpp"

namespace transda::augment {

enum class Op {
  ShearX,
  ShearY,
  TranslateX,
  TranslateY,
  Rotate,
  Flip,
  Solarize,
  Posterize,
  Invert,
  Contrast,
  Color,
  Brightness,
  Sharpness,
  AutoContrast,
  Equalize,
  CutOut,
  SamplePairing,
};

inline constexpr std::size_t kNumOps = 17;

enum class MagnitudeType { Continuous, Discrete, None };
enum class Group { Geometric, Color, Other };

struct OpInfo {
  Op op;
  std::string_view name;
  MagnitudeType type;
  double lo;
  double hi;
  Group group;
};

std::span<const OpInfo> op_table();
const OpInfo& info(Op op);
std::optional<Op> op_from_name(std::string_view name);

// Linear map of a normalized magnitude m in [0, 10] onto the op's range;
// discrete ops round to the nearest integer. Ops without a magnitude yield
// nullopt. Throws std::out_of_range when m is outside [0, 10].
std::optional<double> denormalize_magnitude(Op op, double m);

enum class OpSet { All, Color, Geometric };
std::vector<Op> ops_in(OpSet set);

struct Policy {
  int n_aug = 2;
  double m_aug = 9.0;
  // Throws std::invalid_argument on n_aug < 0 or m_aug outside [0, 10].
  void validate() const;
};

struct SampledOp {
  Op op;
  std::optional<double> magnitude;
};

// n_aug ops drawn uniformly with replacement from `op_set`, each paired
// with the denormalized m_aug.
std::vector<SampledOp> sample_policy(const Policy& policy, std::span<const Op> op_set, Rng& rng);

// Applies one op. Directional ops pick their sign from `rng`; SamplePairing
// draws its partner from `batch` and is skipped when fewer than two images
// are available. Output shape equals the input shape, values in [0, 1].
Image apply_transform(Op op, std::optional<double> magnitude, const Image& img, Rng& rng,
                      std::span<const Image> batch = {});

// Per-image independent policies; image i uses the stream derived from
// (seed, i). Labels and domain tags are carried through.
ImageBatch augment_batch(const ImageBatch& batch, const Policy& policy,
                         std::span<const Op> op_set, std::uint64_t seed);

// Mild jitter used by every strategy on the supervised branch: random
// horizontal flip, integer shift of up to `max_shift` pixels and a
// brightness factor in [0.9, 1.1].
Image baseline_jitter(const Image& img, Rng& rng, int max_shift = 2);

// Number of SamplePairing applications skipped for lack of a partner.
std::uint64_t skipped_sample_pairings();

// Pixel-level primitives behind the ops. Coordinates are pixel indices
// with pixel centers on integers.
namespace detail {

// out(x, y) = in(a*x + b*y + c, d*x + e*y + f), bilinear, zero fill.
Image warp_affine(const Image& img, const double (&inverse)[6]);
Image shear_x(const Image& img, double factor);
Image shear_y(const Image& img, double factor);
Image translate(const Image& img, double dx, double dy);
// Counter-clockwise as displayed (rows grow downward), about the center.
Image rotate(const Image& img, double degrees);
Image flip_horizontal(const Image& img);
Image solarize(const Image& img, double threshold_255);
Image posterize(const Image& img, int bits);
Image invert(const Image& img);
// degenerate + factor * (img - degenerate), clamped.
Image blend(const Image& degenerate, const Image& img, double factor);
Image contrast(const Image& img, double factor);
Image color(const Image& img, double factor);
Image brightness(const Image& img, double factor);
Image sharpness(const Image& img, double factor);
Image auto_contrast(const Image& img);
Image equalize(const Image& img);
// Zeroes the square [cx - side/2, cx - side/2 + side) x [...], clipped.
Image cutout(const Image& img, long cx, long cy, long side);
Image sample_pairing(const Image& img, const Image& partner, double weight);
// Per-pixel ITU-R 601 luma (the image itself when single-channel).
std::vector<float> luma(const Image& img);

}  // namespace detail

}  // namespace transda::augment
