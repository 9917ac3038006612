#include "transda/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "config.hpp"
#include "transda/checkpoint.hpp"
#include "transda/gradcheck.hpp"
#include "transda/png_io.hpp"

namespace transda::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create directory " + dir.string() + ": " + ec.message());
}

// Options shared by the training-style commands.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> strategy, seeds, out, epochs, lr, lambda_c, lambda_e, lambda_t;
  bool quiet = false;

  void attach(CLI::App& app, bool with_strategy = true) {
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--set", sets, "override any config key: key=value (repeatable)");
    if (with_strategy) app.add_option("--strategy", strategy, "training strategy");
    app.add_option("--seeds", seeds, "comma-separated seeds, e.g. 0,1,2");
    app.add_option("--out", out, "output directory");
    app.add_option("--epochs", epochs, "training epochs");
    app.add_option("--lr", lr, "initial learning rate");
    app.add_option("--lambda-c", lambda_c, "consistency weight");
    app.add_option("--lambda-e", lambda_e, "entropy weight");
    app.add_option("--lambda-t", lambda_t, "adversarial transformer weight");
    app.add_flag("--quiet", quiet, "no per-epoch progress on stderr");
  }

  Config resolve() const {
    Config cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    const std::pair<const std::optional<std::string>*, const char*> flags[] = {
        {&strategy, "strategy"}, {&seeds, "seeds"},       {&out, "out"},
        {&epochs, "epochs"},     {&lr, "lr"},             {&lambda_c, "lambda_c"},
        {&lambda_e, "lambda_e"}, {&lambda_t, "lambda_t"},
    };
    for (const auto& [value, key] : flags)
      if (*value) cfg.set(key, **value);
    return cfg;
  }
};

std::string mode_name(Mode m) { return m == Mode::Adaptation ? "adaptation" : "generalization"; }

data::DomainData load_data(const data::DatasetSpec& spec) {
  try {
    return data::load_domains(spec);
  } catch (const data::DataError& e) {
    throw RuntimeFailure(std::string("dataset: ") + e.what());
  }
}

json epoch_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},
          {"lr", m.lr},
          {"L_m", m.supervised},
          {"L_c", m.consistency},
          {"L_e", m.entropy},
          {"L_adv", m.adversarial},
          {"total", m.total},
          {"source_acc", m.source_acc},
          {"target_acc", m.target_acc}};
}

json config_json(const Config& cfg) {
  json j = json::object();
  for (const auto& d : Config::keys()) j[d.key] = cfg.get(d.key);
  return j;
}

int cmd_train(Mode mode, const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  const Config cfg = opts.resolve();
  const TrainConfig tc = cfg.train_config(mode);
  const data::DatasetSpec spec = cfg.dataset_spec();
  const fs::path dir = cfg.get("out");
  const data::DomainData domains = load_data(spec);

  const RunReport report = train(tc, domains, [&](std::uint64_t seed, const EpochMetrics& m) {
    if (opts.quiet) return;
    err << "seed " << seed << " epoch " << m.epoch << "/" << tc.epochs << " lr " << m.lr << " L_m " << m.supervised
        << " L_c " << m.consistency << " L_e " << m.entropy << " L_adv " << m.adversarial << " source_acc "
        << m.source_acc << " target_acc " << m.target_acc << "\n";
  });

  make_dir(dir);
  write_file(dir / "config.resolved", cfg.resolved_text());

  std::string csv = "seed,epoch,lr,L_m,L_c,L_e,L_adv,total,source_acc,target_acc\n";
  json seeds = json::array();
  for (const auto& s : report.seeds) {
    json history = json::array();
    for (const auto& m : s.history) {
      csv += std::to_string(s.seed) + "," + std::to_string(m.epoch) + "," + num(m.lr) + "," + num(m.supervised) +
             "," + num(m.consistency) + "," + num(m.entropy) + "," + num(m.adversarial) + "," + num(m.total) +
             "," + num(m.source_acc) + "," + num(m.target_acc) + "\n";
      history.push_back(epoch_json(m));
    }
    json per_domain = json::array();
    for (const auto& d : s.domains) per_domain.push_back({{"domain", d.domain}, {"role", d.role}, {"accuracy", d.accuracy}});
    const std::string ckpt_name = "checkpoint_seed" + std::to_string(s.seed) + ".txt";
    seeds.push_back({{"seed", s.seed},
                     {"source_acc", s.source_acc},
                     {"target_acc", s.target_acc},
                     {"domains", per_domain},
                     {"checkpoint", ckpt_name},
                     {"epochs", history}});

    Checkpoint ckpt = make_checkpoint(s.model, s.localizer ? &*s.localizer : nullptr);
    ckpt.meta["mode"] = mode_name(mode);
    ckpt.meta["strategy"] = std::string(strategy_name(tc.strategy));
    ckpt.meta["seed"] = std::to_string(s.seed);
    for (const auto& d : Config::keys())
      if (d.key.rfind("data.", 0) == 0) ckpt.meta[d.key] = cfg.get(d.key);
    save_checkpoint(dir / ckpt_name, ckpt);
  }
  write_file(dir / "metrics.csv", csv);

  const json doc = {{"mode", mode_name(mode)},
                    {"strategy", std::string(strategy_name(tc.strategy))},
                    {"target_domain", domains.target.name},
                    {"num_classes", domains.num_classes},
                    {"config", config_json(cfg)},
                    {"seeds", seeds},
                    {"mean", {{"source_acc", report.mean_source_acc}, {"target_acc", report.mean_target_acc}}}};
  write_file(dir / "report.json", doc.dump(2) + "\n");
  out << "mean source_acc " << num(report.mean_source_acc) << " target_acc " << num(report.mean_target_acc)
      << " over " << report.seeds.size() << " seed(s); outputs in " << dir.string() << "\n";
  return 0;
}

struct CorruptionRequest {
  std::optional<data::Corruption> kind;  // nullopt: clean
  int severity = 0;
};

std::vector<CorruptionRequest> parse_corruptions(const std::vector<std::string>& items) {
  std::vector<CorruptionRequest> out = {{std::nullopt, 0}};
  // Repeated requests are evaluated once.
  const auto push = [&out](std::optional<data::Corruption> kind, int sev) {
    for (const auto& r : out)
      if (r.kind == kind && r.severity == sev) return;
    out.push_back({kind, sev});
  };
  for (const auto& item : items) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--corrupt expects kind:severity, got '" + item + "'");
    const std::string name = item.substr(0, colon), sev_text = item.substr(colon + 1);
    int sev = 0;
    const auto res = std::from_chars(sev_text.data(), sev_text.data() + sev_text.size(), sev);
    if (res.ec != std::errc() || res.ptr != sev_text.data() + sev_text.size() || sev < 1 || sev > 5) {
      throw ConfigError("--corrupt severity must be an integer in 1..5, got '" + sev_text + "'");
    }
    if (name == "all") {
      for (auto k : data::all_corruptions()) push(k, sev);
      continue;
    }
    const auto kind = data::corruption_from_name(name);
    if (!kind) {
      throw ConfigError("unknown corruption kind '" + name + "' (valid: " + data::corruption_names() + ", all)");
    }
    push(*kind, sev);
  }
  return out;
}

Checkpoint load_ckpt(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    throw RuntimeFailure(e.what());
  }
}

// Dataset keys recorded in a checkpoint become the defaults.
Config config_from_checkpoint(const Checkpoint& ckpt) {
  Config cfg;
  for (const auto& d : Config::keys()) {
    const auto it = ckpt.meta.find(d.key);
    if (d.key.rfind("data.", 0) == 0 && it != ckpt.meta.end()) cfg.set(d.key, it->second);
  }
  return cfg;
}

struct EvalOptions {
  std::string checkpoint;
  std::vector<std::string> data;
  std::vector<std::string> corrupt;
  std::string domain = "target";
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalOptions& opts, std::ostream& out) {
  const auto requests = parse_corruptions(opts.corrupt);
  if (opts.domain != "target" && opts.domain != "source" && opts.domain != "all") {
    throw ConfigError("--domain must be target, source or all");
  }
  const Checkpoint ckpt = load_ckpt(opts.checkpoint);
  Config cfg = config_from_checkpoint(ckpt);
  for (const auto& item : opts.data) apply_data_override(cfg, item);
  const data::DatasetSpec spec = cfg.dataset_spec();
  Classifier model;
  try {
    model = classifier_from(ckpt);
  } catch (const CheckpointError& e) {
    throw RuntimeFailure(e.what());
  }
  const data::DomainData domains = load_data(spec);

  std::vector<const data::Dataset*> sets;
  if (opts.domain != "target")
    for (const auto& d : domains.source_test) sets.push_back(&d);
  if (opts.domain != "source") sets.push_back(&domains.target);

  std::string csv = "domain,corruption,severity,accuracy,error\n";
  for (const data::Dataset* ds : sets) {
    for (const auto& req : requests) {
      double acc = 0;
      try {
        if (!req.kind) {
          acc = evaluate(model, *ds);
        } else {
          const auto stream = derive_seed(opts.seed, "eval." + ds->name);
          acc = evaluate(model, data::corrupt_dataset(*ds, *req.kind, req.severity, stream));
        }
      } catch (const ShapeError& e) {
        throw RuntimeFailure(std::string("checkpoint does not match the data: ") + e.what());
      }
      csv += ds->name + "," + (req.kind ? std::string(data::corruption_name(*req.kind)) : "none") + "," +
             std::to_string(req.severity) + "," + num(acc) + "," + num(100.0 - acc) + "\n";
    }
  }
  if (!opts.out.empty()) {
    const fs::path p = opts.out;
    if (p.has_parent_path()) make_dir(p.parent_path());
    write_file(p, csv);
  }
  out << csv;
  return 0;
}

struct PreviewOptions {
  std::string strategy = "rnd-all";
  std::size_t n = 8;
  std::uint64_t seed = 0;
  std::string out = "preview";
  std::string checkpoint;
  std::vector<std::string> data;
  int n_aug = 2;
  double m_aug = 9.0;
};

Image tile(const std::vector<Image>& top, const std::vector<Image>& bottom) {
  constexpr std::size_t gap = 2;
  const Image& a = top.front();
  const std::size_t cols = top.size();
  Image grid(a.channels, 2 * a.height + gap, cols * a.width + (cols - 1) * gap, 1.0f);
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t row = 0; row < 2; ++row) {
      const Image& img = row == 0 ? top[i] : bottom[i];
      for (std::size_t c = 0; c < a.channels; ++c)
        for (std::size_t y = 0; y < a.height; ++y)
          for (std::size_t x = 0; x < a.width; ++x)
            grid.at(c, row * (a.height + gap) + y, i * (a.width + gap) + x) = img.at(c, y, x);
    }
  return grid;
}

int cmd_preview(const PreviewOptions& opts, std::ostream& out) {
  const auto strategy = strategy_from_name(opts.strategy);
  if (!strategy) throw ConfigError("unknown strategy '" + opts.strategy + "' (valid: " + strategy_names() + ")");
  if (opts.n == 0) throw ConfigError("--n must be >= 1");
  const augment::Policy policy{opts.n_aug, opts.m_aug};
  try {
    policy.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (uses_stn(*strategy) && opts.checkpoint.empty()) {
    throw ConfigError("strategy " + opts.strategy + " previews a trained transformer: --checkpoint is required");
  }
  std::optional<Checkpoint> ckpt;
  if (!opts.checkpoint.empty()) ckpt = load_ckpt(opts.checkpoint);
  Config cfg = ckpt ? config_from_checkpoint(*ckpt) : Config();
  for (const auto& item : opts.data) apply_data_override(cfg, item);
  const data::DatasetSpec spec = cfg.dataset_spec();
  std::optional<stn::LocalizationNet> localizer;
  if (uses_stn(*strategy)) {
    try {
      localizer = localizer_from(*ckpt);
    } catch (const CheckpointError& e) {
      throw RuntimeFailure(e.what());
    }
    if (!localizer) throw RuntimeFailure("checkpoint " + opts.checkpoint + " holds no transformer parameters");
  }

  const data::Dataset pool = load_data(spec).pooled_sources();
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pick = make_rng(opts.seed, "preview.pick");
  std::shuffle(order.begin(), order.end(), pick);
  order.resize(std::min(opts.n, order.size()));
  const ImageBatch originals = pool.gather(order);

  ImageBatch transformed = originals;
  if (const auto ops = random_ops(*strategy)) {
    transformed = augment::augment_batch(originals, policy, augment::ops_in(*ops),
                                         derive_seed(opts.seed, "preview.augment"));
  }
  if (localizer) {
    NoGradGuard no_grad;
    try {
      const Tensor x = images_to_tensor(transformed.images, localizer->input_shape());
      transformed.images = tensor_to_images(stn::spatial_transform(x, *localizer));
    } catch (const ShapeError& e) {
      throw RuntimeFailure(std::string("checkpoint does not match the data: ") + e.what());
    }
  }

  const fs::path dir = opts.out;
  make_dir(dir);
  try {
    for (std::size_t i = 0; i < originals.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "pair_%03zu", i);
      write_png(dir / (std::string(stem) + "_original.png"), originals.images[i]);
      write_png(dir / (std::string(stem) + "_transformed.png"), transformed.images[i]);
    }
    write_png(dir / "grid.png", tile(originals.images, transformed.images));
  } catch (const ImageIoError& e) {
    throw RuntimeFailure(e.what());
  }
  out << "wrote " << originals.size() << " pairs and grid.png to " << dir.string() << "\n";
  return 0;
}

struct GradcheckOptions {
  std::vector<std::string> ops;
  std::uint64_t seed = 0;
  std::string fault_op;
};

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out, std::ostream& err) {
  gradcheck::Options o;
  o.seed = opts.seed;
  const auto names = gradcheck::check_names();
  // "bilinear" selects bilinear and bilinear_phi.
  for (const auto& token : opts.ops) {
    bool matched = false;
    for (const auto& n : names) {
      if (n == token || n.rfind(token + "_", 0) == 0) {
        if (std::find(o.only.begin(), o.only.end(), n) == o.only.end()) o.only.push_back(n);
        matched = true;
      }
    }
    if (!matched) {
      std::string valid;
      for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
      throw ConfigError("unknown gradient check '" + token + "' (valid: " + valid + ")");
    }
  }
  if (!opts.fault_op.empty()) {
    if (!op_from_name(opts.fault_op)) throw ConfigError("unknown op '" + opts.fault_op + "'");
    o.fault_op = opts.fault_op;
  }
  const gradcheck::Report report = gradcheck::run(o);
  out << "check,cases,max_rel_error,skipped_coordinates,status\n";
  std::string failed;
  for (const auto& c : report.checks) {
    out << c.name << "," << c.cases << "," << num(c.max_rel_error) << "," << c.skipped_coordinates << ","
        << (c.passed ? "pass" : "FAIL") << "\n";
    if (!c.passed) failed += (failed.empty() ? "" : ", ") + c.name;
  }
  out << "total cases " << report.total_cases << "\n";
  if (!report.passed) {
    err << "gradient check failed: " << failed << "\n";
    return 2;
  }
  return 0;
}

struct SweepOptions {
  CommonOptions common;
  std::string mode = "da";
  std::optional<std::string> grid_c, grid_t;
};

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
  Config cfg = opts.common.resolve();
  if (opts.grid_c) cfg.set("sweep.lambda_c", *opts.grid_c);
  if (opts.grid_t) cfg.set("sweep.lambda_t", *opts.grid_t);
  if (opts.mode != "da" && opts.mode != "dg") throw ConfigError("--mode must be da or dg");
  const Mode mode = opts.mode == "da" ? Mode::Adaptation : Mode::Generalization;
  const TrainConfig tc = cfg.train_config(mode);
  const auto lc = cfg.get_doubles("sweep.lambda_c");
  const auto lt = cfg.get_doubles("sweep.lambda_t");
  const data::DatasetSpec spec = cfg.dataset_spec();
  const fs::path dir = cfg.get("out");
  const data::DomainData domains = load_data(spec);

  std::vector<SweepCell> cells;
  for (double c : lc) {
    for (double t : lt) {
      auto cell = sweep(tc, domains, {c}, {t}).front();
      if (!opts.common.quiet) {
        err << "lambda_c " << num(c) << " lambda_t " << num(t) << " mean target_acc " << num(cell.mean_target_acc)
            << "\n";
      }
      cells.push_back(std::move(cell));
    }
  }
  make_dir(dir);
  write_file(dir / "config.resolved", cfg.resolved_text() + "# sweep mode: " + opts.mode + "\n");
  std::string csv = "lambda_c,lambda_t,mean_target_acc";
  for (auto s : tc.seeds) csv += ",target_acc_seed" + std::to_string(s);
  csv += "\n";
  for (const auto& cell : cells) {
    csv += num(cell.lambda_c) + "," + num(cell.lambda_t) + "," + num(cell.mean_target_acc);
    for (double a : cell.target_acc) csv += "," + num(a);
    csv += "\n";
  }
  write_file(dir / "sweep.csv", csv);
  out << "wrote " << cells.size() << " cells to " << (dir / "sweep.csv").string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"transda: consistency training with random and adversarial spatial transformations "
               "for domain adaptation and generalization",
               "transda"};
  app.footer(help_footer());
  app.require_subcommand(1);

  CommonOptions da_opts, dg_opts;
  auto* da = app.add_subcommand("train-da", "train with labeled sources and the unlabeled target domain");
  da_opts.attach(*da);
  auto* dg = app.add_subcommand("train-dg", "train on source domains only");
  dg_opts.attach(*dg);

  EvalOptions eval_opts;
  auto* ev = app.add_subcommand("eval", "accuracy of a checkpoint per domain and corruption");
  ev->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
  ev->add_option("--data", eval_opts.data,
                 "dataset override: key=value or a config file (repeatable); defaults to the checkpoint's dataset");
  ev->add_option("--corrupt", eval_opts.corrupt, "kind:severity or all:severity (repeatable)");
  ev->add_option("--domain", eval_opts.domain, "target | source | all")->capture_default_str();
  ev->add_option("--out", eval_opts.out, "also write the CSV to this file");
  ev->add_option("--seed", eval_opts.seed, "corruption seed")->capture_default_str();

  PreviewOptions prev_opts;
  auto* pv = app.add_subcommand("augment-preview", "write (original, transformed) PNG pairs");
  pv->add_option("--strategy", prev_opts.strategy, "strategy to preview")->capture_default_str();
  pv->add_option("--n", prev_opts.n, "number of pairs")->capture_default_str();
  pv->add_option("--seed", prev_opts.seed, "sampling seed")->capture_default_str();
  pv->add_option("--out", prev_opts.out, "output directory")->capture_default_str();
  pv->add_option("--checkpoint", prev_opts.checkpoint, "checkpoint with transformer parameters (adv-stn*)");
  pv->add_option("--data", prev_opts.data, "dataset override: key=value or a config file (repeatable)");
  pv->add_option("--n-aug", prev_opts.n_aug, "random ops per image")->capture_default_str();
  pv->add_option("--m-aug", prev_opts.m_aug, "normalized magnitude")->capture_default_str();

  GradcheckOptions gc_opts;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc->add_option("--ops", gc_opts.ops, "only these checks (comma-separated)")->delimiter(',');
  gc->add_option("--seed", gc_opts.seed, "case seed")->capture_default_str();
  gc->add_option("--fault-op", gc_opts.fault_op)->group("");

  SweepOptions sw_opts;
  auto* sw = app.add_subcommand("sweep", "grid of (lambda_c, lambda_t) training runs");
  sw_opts.common.attach(*sw);
  sw->add_option("--mode", sw_opts.mode, "da | dg")->capture_default_str();
  sw->add_option("--grid-c", sw_opts.grid_c, "lambda_c values: list or log:lo:hi:n");
  sw->add_option("--grid-t", sw_opts.grid_t, "lambda_t values: list or log:lo:hi:n");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (da->parsed()) return cmd_train(Mode::Adaptation, da_opts, out, err);
    if (dg->parsed()) return cmd_train(Mode::Generalization, dg_opts, out, err);
    if (ev->parsed()) return cmd_eval(eval_opts, out);
    if (pv->parsed()) return cmd_preview(prev_opts, out);
    if (gc->parsed()) return cmd_gradcheck(gc_opts, out, err);
    if (sw->parsed()) return cmd_sweep(sw_opts, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace transda::cli
