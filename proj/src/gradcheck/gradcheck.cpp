#include "transda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "transda/losses.hpp"
#include "transda/model.hpp"
#include "transda/rng.hpp"
#include "transda/stn.hpp"
#include "transda/tensor.hpp"

namespace transda::gradcheck {
namespace {

static_assert(std::is_same_v<Real, double>, "the gradient suite must be built in double precision");

using Fn = std::function<Tensor()>;

constexpr std::size_t kMaxCoordinates = 192;

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi, bool grad = true) {
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = uniform(rng, lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

// Values bounded away from zero, for inputs that feed a relu directly.
Tensor away_from_zero(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = (coin(rng) ? 1 : -1) * uniform(rng, lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

// Scalar probe sum(R * out) with fixed random R, so every output entry
// contributes with a distinct weight.
Tensor probe(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

// Discrete decisions taken by the forward pass: relu signs, pooling argmax
// and sampler cells. Equal signatures mean no kink lies between two points.
std::vector<std::int64_t> signature(const Tensor& root) {
  std::vector<std::int64_t> sig;
  for (const Node* n : topological_order(root)) {
    switch (n->kind) {
      case OpKind::Relu:
        for (Real v : n->inputs[0]->value) sig.push_back(v > 0 ? 1 : 0);
        break;
      case OpKind::MaxPool2x2: {
        const Node& in = *n->inputs[0];
        const std::size_t planes = in.shape[0] * in.shape[1], h = in.shape[2], w = in.shape[3];
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t i = 0; i < h / 2; ++i)
            for (std::size_t j = 0; j < w / 2; ++j) {
              std::size_t best = 0;
              Real bv = -std::numeric_limits<Real>::infinity();
              for (std::size_t k = 0; k < 4; ++k) {
                const Real v = in.value[p * h * w + (2 * i + k / 2) * w + 2 * j + k % 2];
                if (v > bv) bv = v, best = k;
              }
              sig.push_back(static_cast<std::int64_t>(best));
            }
        break;
      }
      case OpKind::GridSample: {
        const Node& x = *n->inputs[0];
        const Node& grid = *n->inputs[1];
        const Real h = static_cast<Real>(x.shape[2]), w = static_cast<Real>(x.shape[3]);
        for (std::size_t i = 0; i < grid.value.size(); i += 2) {
          sig.push_back(static_cast<std::int64_t>(std::floor((grid.value[i] + 1) * (w - 1) / 2)));
          sig.push_back(static_cast<std::int64_t>(std::floor((grid.value[i + 1] + 1) * (h - 1) / 2)));
        }
        break;
      }
      default:
        break;
    }
  }
  return sig;
}

struct CaseOutcome {
  double rel_error = 0;
  std::size_t skipped = 0;
  std::size_t checked = 0;
};

// Central differences over (a sample of) the coordinates of every input.
// `sign` is the expected ratio analytic / numeric (-1 under a gradient
// reversal).
CaseOutcome compare(const Fn& f, const std::vector<Tensor>& inputs, double h, Rng& rng,
                    double sign = 1.0) {
  for (const auto& t : inputs) Tensor(t).zero_grad();
  const Tensor loss = f();
  loss.backward();
  const auto base_sig = signature(loss);

  CaseOutcome out;
  double max_diff = 0, max_num = 0;
  for (const auto& input : inputs) {
    Tensor t = input;
    const std::vector<Real> analytic =
        t.has_grad() ? std::vector<Real>(t.grad().begin(), t.grad().end()) : std::vector<Real>(t.numel(), 0);
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > kMaxCoordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(kMaxCoordinates);
      std::sort(coords.begin(), coords.end());
    }
    auto data = t.mutable_data();
    for (std::size_t i : coords) {
      const Real saved = data[i];
      data[i] = saved + h;
      const Tensor plus = f();
      data[i] = saved - h;
      const Tensor minus = f();
      data[i] = saved;
      if (signature(plus) != base_sig || signature(minus) != base_sig) {
        ++out.skipped;
        continue;
      }
      const double numeric = (plus.item() - minus.item()) / (2 * h);
      max_diff = std::max(max_diff, std::abs(analytic[i] - sign * numeric));
      max_num = std::max(max_num, std::abs(numeric));
      ++out.checked;
    }
    t.zero_grad();
  }
  out.rel_error = max_diff / std::max(max_num, 1e-10);
  return out;
}

struct Check {
  std::string name;
  std::size_t cases;
  // Builds and evaluates one randomized case.
  std::function<CaseOutcome(Rng& rng, double h)> run;
};

// Generic case: build inputs, then compare the probe of `op` on them.
template <typename Build>
std::function<CaseOutcome(Rng&, double)> generic(Build build, double sign = 1.0) {
  return [build, sign](Rng& rng, double h) {
    std::vector<Tensor> inputs;
    std::function<Tensor()> out;
    build(rng, inputs, out);
    const Tensor shape_probe = [&] {
      NoGradGuard ng;
      return out();
    }();
    const Tensor weights = random_tensor(rng, shape_probe.shape(), -1, 1, false);
    return compare([&] { return probe(out(), weights); }, inputs, h, rng, sign);
  };
}

// Grid for the sampler with every pixel-space coordinate at least 0.1 away
// from an integer, some of them outside the image.
Tensor safe_grid(Rng& rng, std::size_t b, std::size_t oh, std::size_t ow, std::size_t h, std::size_t w) {
  std::vector<Real> g(b * oh * ow * 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t extent = i % 2 == 0 ? w : h;
    const double cell = std::floor(uniform(rng, -1.0, static_cast<double>(extent)));
    const double px = cell + uniform(rng, 0.1, 0.9);
    g[i] = 2 * px / static_cast<double>(extent - 1) - 1;
  }
  return Tensor::from_data({b, oh, ow, 2}, std::move(g), true);
}

void randomize(const ParameterList& params, Rng& rng, double scale) {
  for (const auto& p : params) {
    Tensor t = p.value;
    for (Real& v : t.mutable_data()) v = uniform(rng, -scale, scale);
  }
}

std::vector<Tensor> values(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

Tensor random_logprobs(Rng& rng, std::size_t b, std::size_t k) {
  NoGradGuard ng;
  return log_softmax(random_tensor(rng, {b, k}, -2, 2, false));
}

std::vector<Check> all_checks() {
  std::vector<Check> checks;
  const auto add_check = [&](std::string name, std::size_t cases, auto fn) {
    checks.push_back({std::move(name), cases, fn});
  };

  add_check("add", 6, generic([](Rng& rng, auto& in, auto& out) {
    const bool broadcast = coin(rng);
    in = {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, broadcast ? Shape{4} : Shape{3, 4}, -1, 1)};
    out = [in] { return add(in[0], in[1]); };
  }));
  add_check("sub", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {2, 3, 2}, -1, 1), random_tensor(rng, {3, 2}, -1, 1)};
    out = [in] { return sub(in[0], in[1]); };
  }));
  add_check("mul", 6, generic([](Rng& rng, auto& in, auto& out) {
    const bool broadcast = coin(rng);
    in = {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, broadcast ? Shape{4} : Shape{3, 4}, -1, 1)};
    out = [in] { return mul(in[0], in[1]); };
  }));
  add_check("scale", 4, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {5}, -1, 1)};
    const Real f = uniform(rng, -2, 2);
    out = [in, f] { return scale(in[0], f); };
  }));
  add_check("matmul", 6, generic([](Rng& rng, auto& in, auto& out) {
    const std::size_t m = 1 + uniform_index(rng, 4), k = 1 + uniform_index(rng, 5), n = 1 + uniform_index(rng, 4);
    in = {random_tensor(rng, {m, k}, -1, 1), random_tensor(rng, {k, n}, -1, 1)};
    out = [in] { return matmul(in[0], in[1]); };
  }));
  add_check("conv2d", 8, generic([](Rng& rng, auto& in, auto& out) {
    const Padding pad = coin(rng) ? Padding::Same : Padding::Valid;
    const bool with_bias = coin(rng);
    const std::size_t c = 1 + uniform_index(rng, 2), o = 1 + uniform_index(rng, 3);
    const std::size_t k = coin(rng) ? 3 : 1;
    in = {random_tensor(rng, {2, c, 5, 4}, -1, 1), random_tensor(rng, {o, c, k, k}, -1, 1)};
    if (with_bias) in.push_back(random_tensor(rng, {o}, -1, 1));
    out = [in, pad] { return conv2d(in[0], in[1], in.size() > 2 ? in[2] : Tensor(), pad); };
  }));
  add_check("max_pool", 6, generic([](Rng& rng, auto& in, auto& out) {
    // Distinct values at least 0.05 apart keep every argmax stable.
    const Shape s{2, 2, 4, 5};
    std::vector<Real> v(shape_numel(s));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i) - 1;
    std::shuffle(v.begin(), v.end(), rng);
    in = {Tensor::from_data(s, std::move(v), true)};
    out = [in] { return max_pool2x2(in[0]); };
  }));
  add_check("relu", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {away_from_zero(rng, {3, 5}, 0.05, 1.0)};
    out = [in] { return relu(in[0]); };
  }));
  add_check("tanh", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {7}, -2, 2)};
    out = [in] { return tanh(in[0]); };
  }));
  add_check("exp", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {7}, -2, 1)};
    out = [in] { return exp(in[0]); };
  }));
  add_check("reshape", 3, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {2, 6}, -1, 1)};
    out = [in] { return reshape(in[0], {3, 4}); };
  }));
  add_check("sum", 3, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {2, 3}, -1, 1)};
    out = [in] { return sum(in[0]); };
  }));
  add_check("mean", 3, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {2, 3}, -1, 1)};
    out = [in] { return mean(in[0]); };
  }));
  add_check("log_softmax", 6, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {3, 1 + 1 + uniform_index(rng, 6)}, -3, 3)};
    out = [in] { return log_softmax(in[0]); };
  }));
  add_check("concat", 4, generic([](Rng& rng, auto& in, auto& out) {
    const std::size_t axis = uniform_index(rng, 2);
    in = {random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 3}, -1, 1)};
    out = [in, axis] { return concat({in[0], in[1], in[2]}, axis); };
  }));
  // Gradient must be exactly zero through the stopped branch: the only
  // gradient reaching x is the direct term.
  add_check("stop_gradient", 4, [](Rng& rng, double) {
    Tensor x = random_tensor(rng, {3, 4}, -1, 1);
    const Tensor r1 = random_tensor(rng, {3, 4}, -1, 1, false);
    const Tensor r2 = random_tensor(rng, {3, 4}, -1, 1, false);
    probe(add(stop_gradient(tanh(x)), mul(x, r2)), r1).backward();
    double err = 0;
    for (std::size_t i = 0; i < x.numel(); ++i)
      err = std::max(err, std::abs(static_cast<double>(x.grad()[i] - r1.data()[i] * r2.data()[i])));
    return CaseOutcome{err, 0, x.numel()};
  });
  add_check("grad_reverse", 5, generic(
      [](Rng& rng, auto& in, auto& out) {
        in = {random_tensor(rng, {2, 3}, -1.5, 1.5)};
        out = [in] { return grad_reverse(tanh(in[0])); };
      },
      -1.0));
  add_check("affine_grid", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {2, 2, 3}, -1.2, 1.2)};
    out = [in] { return affine_grid(in[0], 3, 4); };
  }));
  // Sampler with respect to the image and the grid.
  add_check("bilinear", 8, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {2, 2, 4, 5}, -1, 1), safe_grid(rng, 2, 3, 3, 4, 5)};
    out = [in] { return grid_sample(in[0], in[1]); };
  }));
  // Sampler with respect to phi, through the grid generator.
  add_check("bilinear_phi", 8, generic([](Rng& rng, auto& in, auto& out) {
    std::vector<Real> phi = {1, 0, 0, 0, 1, 0};
    for (Real& v : phi) v += uniform(rng, -0.3, 0.3);
    in = {random_tensor(rng, {1, 1, 6, 6}, -1, 1), Tensor::from_data({1, 2, 3}, phi, true)};
    out = [in] { return grid_sample(in[0], affine_grid(in[1], 5, 5)); };
  }));
  add_check("localize", 6, [](Rng& rng, double h) {
    const InputShape shape{1, 6, 6};
    const auto net = stn::LocalizationNet::init(rng(), shape);
    randomize(net.parameters(), rng, 0.6);
    const Tensor x = random_tensor(rng, {1, 1, 6, 6}, 0, 1, false);
    const Tensor w = random_tensor(rng, {1, 2, 3}, -1, 1, false);
    return compare([&] { return probe(stn::localize(x, net), w); }, values(net.parameters()), h, rng);
  });
  // Full adversarial chain: d loss / d theta_t through sampler, grid,
  // localizer and the classifier, with the reversal in place.
  add_check("stn_chain", 20, [](Rng& rng, double h) {
    const InputShape shape{1, 4, 4};
    const auto net = stn::LocalizationNet::init(rng(), shape);
    randomize(net.parameters(), rng, 0.3);
    const auto clf = Classifier::init(rng(), 3, shape);
    const Tensor x = random_tensor(rng, {1, 1, 4, 4}, 0, 1, false);
    const Tensor clean = random_logprobs(rng, 1, 3);
    return compare([&] { return kl_consistency(clean, clf.predict_logprobs(stn::adversarial_transform(x, net))); },
                   values(net.parameters()), h, rng, -1.0);
  });
  add_check("cross_entropy", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {4, 3}, -2, 2)};
    std::vector<int> labels(4);
    for (int& l : labels) l = static_cast<int>(uniform_index(rng, 3));
    out = [in, labels] { return cross_entropy(log_softmax(in[0]), labels); };
  }));
  add_check("kl_consistency", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {3, 4}, -2, 2)};
    const Tensor clean = random_logprobs(rng, 3, 4);
    out = [in, clean] { return kl_consistency(stop_gradient(clean), log_softmax(in[0])); };
  }));
  add_check("entropy_min", 5, generic([](Rng& rng, auto& in, auto& out) {
    in = {random_tensor(rng, {3, 4}, -2, 2)};
    out = [in] { return entropy_min(log_softmax(in[0])); };
  }));
  add_check("classifier", 4, [](Rng& rng, double h) {
    const InputShape shape{1, 4, 4};
    const auto clf = Classifier::init(rng(), 3, shape);
    randomize(clf.parameters(), rng, 0.5);
    const Tensor x = random_tensor(rng, {2, 1, 4, 4}, 0, 1, false);
    const std::vector<int> labels = {static_cast<int>(uniform_index(rng, 3)), static_cast<int>(uniform_index(rng, 3))};
    return compare([&] { return cross_entropy(clf.predict_logprobs(x), labels); }, values(clf.parameters()), h, rng);
  });
  return checks;
}

}  // namespace

std::vector<std::string> check_names() {
  std::vector<std::string> out;
  for (const auto& c : all_checks()) out.push_back(c.name);
  return out;
}

Report run(const Options& options) {
  const auto checks = all_checks();
  for (const auto& name : options.only) {
    if (std::none_of(checks.begin(), checks.end(), [&](const Check& c) { return c.name == name; })) {
      throw std::invalid_argument("unknown gradient check '" + name + "'");
    }
  }
  std::optional<ScopedBackwardFault> fault;
  if (options.fault_op) {
    const auto kind = op_from_name(*options.fault_op);
    if (!kind) throw std::invalid_argument("unknown op '" + *options.fault_op + "'");
    fault.emplace(*kind, static_cast<Real>(options.fault_factor));
  }

  Report report;
  for (const auto& check : checks) {
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), check.name) == options.only.end()) {
      continue;
    }
    CheckResult r;
    r.name = check.name;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < check.cases; ++i) {
      Rng rng = make_rng(options.seed, "gradcheck." + check.name, i);
      const CaseOutcome o = check.run(rng, options.step);
      r.max_rel_error = std::max(r.max_rel_error, o.rel_error);
      r.skipped_coordinates += o.skipped;
      checked += o.checked;
      ++r.cases;
    }
    // A case where kinks hid most coordinates proves nothing.
    r.passed = r.max_rel_error < options.threshold && checked > 0 && r.skipped_coordinates * 10 <= checked;
    report.passed = report.passed && r.passed;
    report.total_cases += r.cases;
    report.checks.push_back(r);
  }
  return report;
}

}  // namespace transda::gradcheck
