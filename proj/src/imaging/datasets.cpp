#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>

#include "transda/augment.hpp"
#include "transda/data.hpp"
#include "transda/png_io.hpp"

namespace transda::data {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 4> kSyntheticDomains = {"clean", "inverted", "rotated",
                                                               "noisy"};

// Glyph geometry in pixel units around the glyph center.
struct Glyph {
  double r;  // outer radius
  double t;  // half stroke width
};

using Shape = std::function<bool(double, double, const Glyph&)>;

bool in_triangle(double x, double y, double r) {
  // Upright triangle with apex (0, -r) and base corners (+-0.87r, 0.5r).
  const double ax = 0, ay = -r, bx = 0.87 * r, by = 0.5 * r, cx = -0.87 * r, cy = 0.5 * r;
  const auto side = [](double px, double py, double qx, double qy, double x0, double y0) {
    return (qx - px) * (y0 - py) - (qy - py) * (x0 - px);
  };
  const double d1 = side(ax, ay, bx, by, x, y);
  const double d2 = side(bx, by, cx, cy, x, y);
  const double d3 = side(cx, cy, ax, ay, x, y);
  return (d1 >= 0 && d2 >= 0 && d3 >= 0) || (d1 <= 0 && d2 <= 0 && d3 <= 0);
}

bool in_plus(double x, double y, const Glyph& g) {
  return (std::abs(x) <= g.t && std::abs(y) <= g.r) || (std::abs(y) <= g.t && std::abs(x) <= g.r);
}

const std::vector<Shape>& shapes() {
  static const std::vector<Shape> table = {
      [](double x, double y, const Glyph& g) { return std::hypot(x, y) <= g.r; },
      [](double x, double y, const Glyph& g) {
        return std::max(std::abs(x), std::abs(y)) <= 0.8 * g.r;
      },
      [](double x, double y, const Glyph& g) { return in_triangle(x, y, g.r); },
      [](double x, double y, const Glyph& g) { return in_plus(x, y, g); },
      [](double x, double y, const Glyph& g) {
        const double s = std::numbers::sqrt2 / 2;
        return in_plus(s * (x + y), s * (y - x), g);
      },
      [](double x, double y, const Glyph& g) {
        const double d = std::hypot(x, y);
        return d <= g.r && d >= g.r - 2.2 * g.t;
      },
      [](double x, double y, const Glyph& g) {
        return std::abs(x) <= g.r && std::abs(std::abs(y) - 0.45 * g.r) <= g.t;
      },
      [](double x, double y, const Glyph& g) {
        const double m = std::max(std::abs(x), std::abs(y));
        return m <= 0.8 * g.r && m >= 0.8 * g.r - 2.2 * g.t;
      },
      [](double x, double y, const Glyph& g) {
        return std::abs(y) <= g.r && std::abs(std::abs(x) - 0.45 * g.r) <= g.t;
      },
      [](double x, double y, const Glyph& g) { return std::abs(x) + std::abs(y) <= g.r; },
  };
  return table;
}

// Supersampled coverage in [0, 1] of a glyph rotated by `angle` radians and
// centered at (cx, cy).
std::vector<float> render_coverage(std::size_t size, const Shape& shape, const Glyph& g, double cx,
                                   double cy, double angle) {
  constexpr int kSub = 4;
  std::vector<float> cov(size * size, 0.0f);
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSub - 0.5 - cx;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSub - 0.5 - cy;
          // Rotate the sample point into the glyph frame.
          hits += shape(c * px + s * py, -s * px + c * py, g) ? 1 : 0;
        }
      }
      cov[y * size + x] = static_cast<float>(hits) / (kSub * kSub);
    }
  }
  return cov;
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh);
  const double f = hh - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {float(v), float(t), float(p)};
    case 1: return {float(q), float(v), float(p)};
    case 2: return {float(p), float(v), float(t)};
    case 3: return {float(p), float(q), float(v)};
    case 4: return {float(t), float(p), float(v)};
    default: return {float(v), float(p), float(q)};
  }
}

Image render_sample(std::size_t domain, int label, std::size_t size, Rng& rng) {
  const double sz = static_cast<double>(size);
  const Glyph g{uniform(rng, 0.28, 0.38) * sz, uniform(rng, 0.05, 0.075) * sz};
  const double cx = (sz - 1) / 2 + uniform(rng, -0.08, 0.08) * sz;
  const double cy = (sz - 1) / 2 + uniform(rng, -0.08, 0.08) * sz;
  double angle = uniform(rng, -5.0, 5.0);
  if (domain == 2) angle += uniform(rng, -15.0, 15.0);
  const std::vector<float> cov =
      render_coverage(size, shapes()[static_cast<std::size_t>(label)], g, cx, cy, angle * std::numbers::pi / 180.0);

  Image img(3, size, size);
  const std::size_t n = size * size;
  switch (domain) {
    case 0: {  // clean grayscale
      const auto fg = static_cast<float>(uniform(rng, 0.75, 1.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) img.data[c * n + i] = fg * cov[i];
      break;
    }
    case 1: {  // dark glyph on light striped texture
      const double freq = uniform(rng, 0.3, 0.8);
      const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
      const double dir = uniform(rng, 0.0, std::numbers::pi);
      const auto fg = static_cast<float>(uniform(rng, 0.0, 0.15));
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double t = std::cos(dir) * static_cast<double>(x) + std::sin(dir) * static_cast<double>(y);
          const auto bg = static_cast<float>(0.8 + 0.12 * std::sin(freq * t + phase) + normal(rng, 0.0, 0.03));
          const std::size_t i = y * size + x;
          for (std::size_t c = 0; c < 3; ++c) img.data[c * n + i] = bg * (1 - cov[i]) + fg * cov[i];
        }
      }
      break;
    }
    case 2: {  // rotated, hue-shifted
      const double hue = uniform(rng, 0.0, 1.0);
      const auto fg = hsv_to_rgb(hue, 0.8, uniform(rng, 0.75, 1.0));
      const auto bg = hsv_to_rgb(hue + 0.5, 0.6, uniform(rng, 0.1, 0.3));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) img.data[c * n + i] = bg[c] * (1 - cov[i]) + fg[c] * cov[i];
      break;
    }
    default: {  // low contrast, heavy noise
      const auto bg = static_cast<float>(uniform(rng, 0.35, 0.5));
      const auto fg = bg + static_cast<float>(uniform(rng, 0.18, 0.28));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c)
          img.data[c * n + i] = bg * (1 - cov[i]) + fg * cov[i] + static_cast<float>(normal(rng, 0.0, 0.12));
      break;
    }
  }
  img.clamp01();
  return img;
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 2) throw DataError("dataset: num_classes must be >= 2");
  if (image_size < 8) throw DataError("dataset: image_size must be >= 8");
  if (channels != 1 && channels != 3) throw DataError("dataset: channels must be 1 or 3");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw DataError("dataset: train_fraction must lie in (0, 1]");
  }
  if (target.empty()) throw DataError("dataset: a target domain is required");
  if (kind == SourceKind::Synthetic) {
    if (num_classes > static_cast<int>(shapes().size())) {
      throw DataError("dataset: synthetic generator supports at most " +
                      std::to_string(shapes().size()) + " classes");
    }
    if (per_class < 40) throw DataError("dataset: synthetic per_class must be >= 40");
  } else if (root.empty()) {
    throw DataError("dataset: directory kind needs a root");
  }
}

std::span<const std::string_view> synthetic_domain_names() { return kSyntheticDomains; }

std::vector<Dataset> generate_synthetic(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Dataset> out;
  for (std::size_t d = 0; d < kSyntheticDomains.size(); ++d) {
    Dataset ds;
    ds.name = std::string(kSyntheticDomains[d]);
    for (int k = 0; k < spec.num_classes; ++k) {
      for (int i = 0; i < spec.per_class; ++i) {
        const std::uint64_t index = (static_cast<std::uint64_t>(d) << 40) |
                                    (static_cast<std::uint64_t>(k) << 20) |
                                    static_cast<std::uint64_t>(i);
        Rng rng = make_rng(spec.seed, "synthetic.sample", index);
        Image img = render_sample(d, k, spec.image_size, rng);
        ds.push_back(convert_channels(img, spec.channels), k, static_cast<int>(d));
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<Dataset> load_directory(const DatasetSpec& spec) {
  const fs::path& root = spec.root;
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  const auto sorted_dirs = [](const fs::path& p) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
  };
  std::vector<Dataset> out;
  std::vector<std::string> class_names;
  for (const fs::path& domain_dir : sorted_dirs(root)) {
    Dataset ds;
    ds.name = domain_dir.filename().string();
    const auto class_dirs = sorted_dirs(domain_dir);
    if (class_dirs.size() < 2) {
      throw DataError("domain " + domain_dir.string() + " needs at least 2 class directories");
    }
    std::vector<std::string> names;
    for (const auto& c : class_dirs) names.push_back(c.filename().string());
    if (class_names.empty()) {
      class_names = names;
    } else if (names != class_names) {
      throw DataError("domain " + domain_dir.string() + " has a different class list than " +
                      out.front().name);
    }
    for (std::size_t k = 0; k < class_dirs.size(); ++k) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(class_dirs[k]))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const fs::path& f : files) {
        Image img;
        try {
          img = read_png(f);
        } catch (const ImageIoError& e) {
          throw DataError(e.what());
        }
        img = resize_bilinear(convert_channels(img, spec.channels), spec.image_size, spec.image_size);
        ds.push_back(std::move(img), static_cast<int>(k), static_cast<int>(out.size()));
      }
    }
    if (ds.size() == 0) throw DataError("domain " + domain_dir.string() + " contains no images");
    out.push_back(std::move(ds));
  }
  if (out.empty()) throw DataError("dataset root " + root.string() + " has no domain directories");
  return out;
}

Dataset DomainData::pooled_sources() const {
  Dataset pooled;
  pooled.name = "sources";
  for (const Dataset& d : source_train) {
    pooled.images.insert(pooled.images.end(), d.images.begin(), d.images.end());
    pooled.labels.insert(pooled.labels.end(), d.labels.begin(), d.labels.end());
    pooled.domains.insert(pooled.domains.end(), d.domains.begin(), d.domains.end());
  }
  return pooled;
}

DomainData assign_domains(std::vector<Dataset> domains, const DatasetSpec& spec) {
  DomainData out;
  int num_classes = spec.num_classes;
  if (spec.kind == SourceKind::Directory) {
    // Directory layouts define their own class list.
    num_classes = 0;
    for (const Dataset& d : domains)
      for (int label : d.labels) num_classes = std::max(num_classes, label + 1);
  }
  out.num_classes = static_cast<std::size_t>(num_classes);
  const auto find = [&](const std::string& name) -> Dataset& {
    for (Dataset& d : domains)
      if (d.name == name) return d;
    throw DataError("unknown domain '" + name + "'");
  };
  Dataset& target = find(spec.target);
  for (int label : target.labels) {
    if (label >= num_classes) {
      throw DataError("domain " + target.name + " has more classes than num_classes");
    }
  }
  std::vector<std::string> sources = spec.sources;
  if (sources.empty()) {
    for (const Dataset& d : domains)
      if (d.name != spec.target) sources.push_back(d.name);
  }
  if (sources.empty()) throw DataError("at least one source domain is required");
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s] == spec.target) throw DataError("domain '" + spec.target + "' is both source and target");
    Dataset& src = find(sources[s]);
    // Stratified split: per class, a seeded shuffle then the leading fraction.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < src.size(); ++i) by_class[src.labels[i]].push_back(i);
    Dataset train, test;
    train.name = test.name = src.name;
    for (auto& [label, idx] : by_class) {
      if (label >= num_classes) {
        throw DataError("domain " + src.name + " has more classes than num_classes");
      }
      Rng rng = make_rng(spec.seed, "split." + src.name, static_cast<std::uint64_t>(label));
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(idx.size())));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        Dataset& dst = j < n_train ? train : test;
        dst.push_back(src.images[idx[j]], label, static_cast<int>(s));
      }
    }
    out.source_train.push_back(std::move(train));
    out.source_test.push_back(std::move(test));
  }
  out.target = target;
  out.target.set_domain(kTargetDomain);
  return out;
}

DomainData load_domains(const DatasetSpec& spec) {
  spec.validate();
  auto domains = spec.kind == SourceKind::Synthetic ? generate_synthetic(spec) : load_directory(spec);
  return assign_domains(std::move(domains), spec);
}

}  // namespace transda::data
