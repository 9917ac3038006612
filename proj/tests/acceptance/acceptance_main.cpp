// Acceptance suite: one PASS/FAIL line per criterion.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "criteria.hpp"
#include "transda/augment.hpp"
#include "transda/cli.hpp"
#include "transda/gradcheck.hpp"
#include "transda/stn.hpp"
#include "transda/trainer.hpp"

namespace fs = std::filesystem;
using namespace transda;
using acceptance::Outcome;

namespace {

fs::path g_work;
const fs::path g_configs = TRANSDA_ACCEPTANCE_DIR;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "transda");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

CliResult cli_ok(const std::vector<std::string>& args) {
  CliResult r = cli(args);
  if (r.code != 0) {
    std::string joined;
    for (const auto& a : args) joined += " " + a;
    throw std::runtime_error("transda" + joined + " exited " + std::to_string(r.code) + ": " + r.err);
  }
  return r;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  return nlohmann::json::parse(in);
}

std::vector<double> seed_target_acc(const fs::path& dir) {
  std::vector<double> out;
  const nlohmann::json report = read_json(dir / "report.json");
  for (const auto& s : report["seeds"]) out.push_back(s["target_acc"].get<double>());
  return out;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt(x, 1);
  return s;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = gradcheck::run({});
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string failed;
  for (const auto& c : report.checks) {
    worst = std::max(worst, c.max_rel_error);
    if (!c.passed) failed += " " + c.name;
  }
  const bool pass = report.passed && report.total_cases >= 100 && secs < 120;
  return {pass, std::to_string(report.checks.size()) + " ops, " + std::to_string(report.total_cases) +
                    " cases, worst rel err " + sci(worst) + ", " + fmt(secs, 1) + " s" +
                    (failed.empty() ? "" : ", failing:" + failed)};
}

Outcome stn_identity() {
  double worst = 0;
  std::size_t batches = 0;
  const std::pair<std::size_t, std::size_t> sizes[] = {{32, 32}, {17, 23}, {8, 8}, {31, 9}};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto [h, w] = sizes[seed % 4];
    const InputShape in{seed % 2 ? 1u : 3u, h, w};
    const auto net = stn::LocalizationNet::init(seed, in);
    Rng rng = make_rng(seed, "acceptance.identity");
    const std::size_t b = 1 + uniform_index(rng, 6);
    std::vector<Real> v(b * in.channels * h * w);
    for (Real& x : v) x = static_cast<Real>(uniform(rng, 0, 1));
    const Tensor x = Tensor::from_data({b, in.channels, h, w}, v);
    for (const Tensor& y : {stn::spatial_transform(x, net), stn::adversarial_transform(x, net)}) {
      for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(double(y.data()[i]) - v[i]));
      ++batches;
    }
  }
  return {worst == 0.0, std::to_string(batches) + " random batches, max |T(x) - x| = " + fmt(worst, 9)};
}

Outcome grid_oracle() {
  double worst_ulps = 0;
  Rng rng = make_rng(3, "acceptance.grid");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t oh = 2 + uniform_index(rng, 30), ow = 2 + uniform_index(rng, 30);
    std::vector<Real> phi(6);
    for (Real& p : phi) p = static_cast<Real>(uniform(rng, -1.5, 1.5));
    const Tensor grid = stn::generate_grid(Tensor::from_data({1, 2, 3}, phi), oh, ow);
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        // Matrix-vector product in double on the same (float) inputs.
        const double ut = 2.0 * j / (ow - 1) - 1, vt = 2.0 * i / (oh - 1) - 1;
        const double u = double(phi[0]) * ut + double(phi[1]) * vt + double(phi[2]);
        const double v = double(phi[3]) * ut + double(phi[4]) * vt + double(phi[5]);
        const double got_u = grid.data()[(i * ow + j) * 2], got_v = grid.data()[(i * ow + j) * 2 + 1];
        // Error in units of float epsilon times the term magnitude.
        const double scale_u = std::abs(phi[0] * ut) + std::abs(phi[1] * vt) + std::abs(phi[2]) + 1e-30;
        const double scale_v = std::abs(phi[3] * ut) + std::abs(phi[4] * vt) + std::abs(phi[5]) + 1e-30;
        const double eps = std::numeric_limits<float>::epsilon();
        worst_ulps = std::max({worst_ulps, std::abs(got_u - u) / (eps * scale_u), std::abs(got_v - v) / (eps * scale_v)});
      }
  }
  return {worst_ulps <= 4.0, "20 random phi, worst deviation " + fmt(worst_ulps, 2) + " float eps (bound 4)"};
}

Outcome adversarial_ascent() {
  const auto t0 = std::chrono::steady_clock::now();
  data::DatasetSpec spec;
  spec.per_class = 40;
  const data::DomainData domains = data::load_domains(spec);
  std::vector<double> before, after;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TrainConfig tc;
    tc.mode = Mode::Generalization;
    tc.strategy = Strategy::None;
    tc.epochs = 3;
    tc.lr = 0.05;
    tc.lr_final = 0.05;
    const Classifier clf = train_seed(tc, domains, seed).model;
    const InputShape in = clf.input_shape();
    const auto net = stn::LocalizationNet::init(derive_seed(seed, "acceptance.localizer"), in);

    // Fixed jittered batch: at the identity transform the clean view has
    // zero divergence and zero gradient.
    const data::Dataset pool = domains.pooled_sources();
    std::vector<std::size_t> idx(64);
    Rng pick = make_rng(seed, "acceptance.pick");
    for (auto& i : idx) i = uniform_index(pick, pool.size());
    const ImageBatch batch = pool.gather(idx);
    ImageBatch jittered = batch;
    Rng jr = make_rng(seed, "acceptance.jitter");
    for (Image& img : jittered.images) img = augment::baseline_jitter(img, jr);
    const Tensor x = images_to_tensor(batch.images, in), xj = images_to_tensor(jittered.images, in);
    Tensor clean;
    {
      NoGradGuard ng;
      clean = stop_gradient(clf.predict_logprobs(x));
    }
    const auto kl_now = [&] {
      NoGradGuard ng;
      return double(kl_consistency(clean, clf.predict_logprobs(stn::spatial_transform(xj, net))).item());
    };
    before.push_back(kl_now());
    for (int step = 0; step < 50; ++step) {
      kl_consistency(clean, clf.predict_logprobs(stn::adversarial_transform(xj, net))).backward();
      sgd_step(net.parameters(), 0.05);
      for (const auto& p : clf.parameters()) Tensor(p.value).zero_grad();
    }
    after.push_back(kl_now());
  }
  const double secs = seconds_since(t0);
  return {mean(after) >= mean(before) && secs < 300,
          "mean KL step 0 " + fmt(mean(before), 4) + " -> step 50 " + fmt(mean(after), 4) + " (per seed " +
              fmt(before[0], 4) + "->" + fmt(after[0], 4) + ", " + fmt(before[1], 4) + "->" + fmt(after[1], 4) +
              ", " + fmt(before[2], 4) + "->" + fmt(after[2], 4) + "), " + fmt(secs, 1) + " s"};
}

Outcome adaptation_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string conf = (g_configs / "shift.conf").string();
  const fs::path base = g_work / "c6_none", ours = g_work / "c6_rnd_all";
  cli_ok({"train-da", "--config", conf, "--strategy", "none", "--out", base.string(), "--quiet"});
  cli_ok({"train-da", "--config", conf, "--strategy", "rnd-all", "--out", ours.string(), "--quiet"});
  const double secs = seconds_since(t0);
  const auto b = seed_target_acc(base), o = seed_target_acc(ours);
  bool each = b.size() == 3 && o.size() == 3;
  for (std::size_t i = 0; each && i < b.size(); ++i) each = o[i] > b[i];
  const double margin = mean(o) - mean(b);
  return {each && margin >= 5.0 && secs < 1800,
          "target acc rnd-all " + list(o) + " vs none " + list(b) + ", mean margin " + fmt(margin) + " points (>= 5), " +
              fmt(secs, 0) + " s"};
}

Outcome generalization_direction() {
  const std::string conf = (g_configs / "shift.conf").string();
  const fs::path base = g_work / "c7_none", ours = g_work / "c7_adv_stn_color";
  cli_ok({"train-dg", "--config", conf, "--strategy", "none", "--out", base.string(), "--quiet"});
  cli_ok({"train-dg", "--config", conf, "--strategy", "adv-stn-color", "--out", ours.string(), "--quiet"});
  const auto b = seed_target_acc(base), o = seed_target_acc(ours);
  const double margin = mean(o) - mean(b);
  return {margin >= 3.0, "mean target acc adv-stn-color " + fmt(mean(o)) + " (" + list(o) + ") vs none " + fmt(mean(b)) +
                             " (" + list(b) + "), margin " + fmt(margin) + " points (>= 3)"};
}

// Mean error over the 8 corruption kinds at severity 5, per seed.
std::vector<double> corrupted_error(const fs::path& run) {
  std::vector<double> out;
  const nlohmann::json report = read_json(run / "report.json");
  for (const auto& s : report["seeds"]) {
    const fs::path csv = run / ("eval_seed" + std::to_string(s["seed"].get<int>()) + ".csv");
    cli_ok({"eval", "--checkpoint", (run / s["checkpoint"].get<std::string>()).string(), "--domain", "source",
            "--corrupt", "all:5", "--out", csv.string()});
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    double sum = 0;
    int n = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
      if (f.size() == 5 && f[1] != "none") sum += std::stod(f[4]), ++n;
    }
    if (n != 8) throw std::runtime_error("expected 8 corruption rows in " + csv.string());
    out.push_back(sum / n);
  }
  return out;
}

Outcome robustness_direction() {
  const std::string conf = (g_configs / "robust.conf").string();
  const fs::path base = g_work / "c8_none", ours = g_work / "c8_rnd_all";
  cli_ok({"train-dg", "--config", conf, "--strategy", "none", "--out", base.string(), "--quiet"});
  cli_ok({"train-dg", "--config", conf, "--strategy", "rnd-all", "--out", ours.string(), "--quiet"});
  const auto b = corrupted_error(base), o = corrupted_error(ours);
  return {mean(o) < mean(b), "mean severity-5 error rnd-all " + fmt(mean(o)) + "% (" + list(o) + ") vs none " +
                                 fmt(mean(b)) + "% (" + list(b) + ")"};
}

Outcome augmentation_conformance() {
  using namespace augment;
  int bearing = 0, exact = 0;
  for (const auto& info : op_table()) {
    if (info.type == MagnitudeType::None) continue;
    ++bearing;
    exact += (denormalize_magnitude(info.op, 0.0) == info.lo && denormalize_magnitude(info.op, 10.0) == info.hi) ? 1 : 0;
  }
  const auto ops = ops_in(OpSet::All);
  std::vector<double> counts(ops.size(), 0);
  Rng rng = make_rng(9, "acceptance.chi2");
  const Policy policy{1, 9.0};
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const auto sampled = sample_policy(policy, ops, rng);
    counts[static_cast<std::size_t>(sampled[0].op)] += 1;
  }
  double chi2 = 0;
  const double expected = double(kDraws) / ops.size();
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with 16 degrees of freedom.
  constexpr double kCritical = 32.0;
  return {bearing == 13 && exact == 13 && chi2 < kCritical,
          std::to_string(exact) + "/" + std::to_string(bearing) + " magnitude ops hit both endpoints exactly, chi2 = " +
              fmt(chi2) + " over " + std::to_string(kDraws) + " draws (critical " + fmt(kCritical, 1) + ", df 16)"};
}

Outcome determinism() {
  const std::string conf = (g_configs / "determinism.conf").string();
  const fs::path dir = g_work / "c10";
  std::vector<std::string> differing;
  std::size_t compared = 0;
  const auto twice = [&](const std::string& name, const std::vector<std::string>& args, const fs::path& out_dir) {
    std::map<std::string, std::string> first;
    std::string first_out;
    for (int round = 0; round < 2; ++round) {
      fs::remove_all(out_dir);
      const CliResult r = cli_ok(args);
      const auto files = out_dir.empty() ? std::map<std::string, std::string>{} : snapshot(out_dir);
      if (round == 0) {
        first = files;
        first_out = r.out;
      } else {
        if (files != first || r.out != first_out || files.size() != first.size()) differing.push_back(name);
        compared += files.size() + 1;
      }
    }
  };
  const fs::path train_da = dir / "train_da", train_dg = dir / "train_dg";
  twice("train-da", {"train-da", "--config", conf, "--out", train_da.string(), "--quiet"}, train_da);
  twice("train-dg", {"train-dg", "--config", conf, "--out", train_dg.string(), "--quiet"}, train_dg);
  // Keep a checkpoint for the commands that consume one.
  fs::create_directories(dir / "keep");
  cli_ok({"train-da", "--config", conf, "--out", (dir / "keep").string(), "--quiet"});
  const std::string ckpt = (dir / "keep" / "checkpoint_seed0.txt").string();
  twice("eval", {"eval", "--checkpoint", ckpt, "--domain", "all", "--corrupt", "all:5", "--out",
                 (dir / "eval" / "eval.csv").string()},
        dir / "eval");
  twice("augment-preview rnd-all", {"augment-preview", "--strategy", "rnd-all", "--seed", "7", "--out",
                                    (dir / "preview").string()},
        dir / "preview");
  twice("augment-preview adv-stn-color", {"augment-preview", "--strategy", "adv-stn-color", "--checkpoint", ckpt,
                                          "--out", (dir / "preview_stn").string()},
        dir / "preview_stn");
  twice("sweep", {"sweep", "--config", conf, "--mode", "dg", "--epochs", "1", "--seeds", "0", "--grid-c", "0.1,1",
                  "--grid-t", "0.1", "--out", (dir / "sweep").string(), "--quiet"},
        dir / "sweep");
  twice("gradcheck", {"gradcheck", "--ops", "bilinear"}, {});
  return {differing.empty(), "7 commands run twice, " + std::to_string(compared) + " outputs compared" +
                                 (differing.empty() ? ", all byte-identical" : ", differing:") +
                                 [&] {
                                   std::string s;
                                   for (const auto& d : differing) s += " " + d;
                                   return s;
                                 }()};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  std::string work = "acceptance_work";
  app.add_option("--criterion", selected, "criterion number (repeatable); default all");
  app.add_option("--work", work, "scratch directory for training outputs");
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  const std::vector<Criterion> criteria = {
      {1, "gradient suite", gradient_suite},
      {2, "STN identity at initialization", stn_identity},
      {3, "affine grid oracle", grid_oracle},
      {4, "loss identities", acceptance::loss_identities},
      {5, "adversarial ascent", adversarial_ascent},
      {6, "adaptation beats baseline", adaptation_direction},
      {7, "generalization beats baseline", generalization_direction},
      {8, "robustness to corruptions", robustness_direction},
      {9, "augmentation conformance", augmentation_conformance},
      {10, "determinism", determinism},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail
              << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
