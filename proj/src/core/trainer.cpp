#include "transda/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

TRANSDA_CORE_BEGIN

namespace {

struct StrategyInfo {
  Strategy strategy;
  std::string_view name;
};

constexpr std::array<StrategyInfo, 6> kStrategies = {{
    {Strategy::None, "none"},
    {Strategy::RndAll, "rnd-all"},
    {Strategy::RndColor, "rnd-color"},
    {Strategy::RndGeo, "rnd-geo"},
    {Strategy::AdvStn, "adv-stn"},
    {Strategy::AdvStnColor, "adv-stn-color"},
}};

ImageBatch jitter_batch(const ImageBatch& batch, std::uint64_t seed, std::string_view stream,
                        std::size_t step) {
  ImageBatch out = batch;
  Rng rng = make_rng(seed, stream, step);
  for (Image& img : out.images) img = augment::baseline_jitter(img, rng);
  return out;
}

struct StepTerms {
  Tensor total;
  double supervised = 0;
  double consistency = 0;
  double entropy = 0;
  double adversarial = 0;
};

double value_of(const Tensor& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; }

class Step {
 public:
  Step(const TrainConfig& config, const Classifier& model, const stn::LocalizationNet* localizer,
       std::uint64_t seed)
      : config_(config), model_(model), localizer_(localizer), seed_(seed) {}

  StepTerms run(const ImageBatch& source, const ImageBatch* target, std::size_t step) const {
    const InputShape& in = model_.input_shape();
    const bool adapt = config_.mode == Mode::Adaptation;
    if (!adapt && (source.has_target() || target != nullptr)) {
      throw DomainContractError("generalization step received target-domain samples");
    }
    const LossWeights& w = config_.weights;
    LossParts parts;

    const ImageBatch labeled = config_.jitter ? jitter_batch(source, seed_, "train.jitter", step) : source;
    parts.supervised = cross_entropy(model_.predict_logprobs(images_to_tensor(labeled.images, in)),
                                     supervised_labels(source));
    if (config_.strategy == Strategy::None) return finish(parts);

    // Fixed-copy predictions on clean inputs; the target forward keeps its
    // graph when the entropy term needs it.
    Tensor clean;
    {
      NoGradGuard no_grad;
      clean = model_.predict_logprobs(images_to_tensor(source.images, in));
    }
    ImageBatch pool = source;
    if (adapt && target != nullptr) {
      const bool need_entropy = w.entropy != 0.0;
      Tensor target_lp;
      if (need_entropy) {
        target_lp = model_.predict_logprobs(images_to_tensor(target->images, in));
        parts.entropy = entropy_min(target_lp);
      } else {
        NoGradGuard no_grad;
        target_lp = model_.predict_logprobs(images_to_tensor(target->images, in));
      }
      clean = concat({clean, stop_gradient(target_lp)}, 0);
      pool.append(*target);
    }
    clean = stop_gradient(clean);
    parts.domains = pool.domains;

    const auto ops = random_ops(config_.strategy);
    ImageBatch augmented;
    if (ops) {
      const auto op_set = augment::ops_in(*ops);
      augmented = augment::augment_batch(pool, config_.policy, op_set,
                                         derive_seed(seed_, "train.augment", step));
      if (w.consistency != 0.0) {
        parts.consistency =
            kl_consistency(clean, model_.predict_logprobs(images_to_tensor(augmented.images, in)));
      }
    }
    if (localizer_ != nullptr && w.adversarial != 0.0) {
      // At the identity transform the divergence and its gradient both
      // vanish, so the transformer sees a perturbed view.
      const ImageBatch stn_input =
          ops ? augmented : jitter_batch(pool, seed_, "train.stn_jitter", step);
      const Tensor moved = stn::adversarial_transform(images_to_tensor(stn_input.images, in), *localizer_);
      parts.adversarial = kl_consistency(clean, model_.predict_logprobs(moved));
    }
    return finish(parts);
  }

 private:
  StepTerms finish(const LossParts& parts) const {
    StepTerms t;
    t.total = total_loss(config_.mode, parts, config_.weights);
    t.supervised = value_of(parts.supervised);
    t.consistency = value_of(parts.consistency);
    t.entropy = value_of(parts.entropy);
    t.adversarial = value_of(parts.adversarial);
    return t;
  }

  const TrainConfig& config_;
  const Classifier& model_;
  const stn::LocalizationNet* localizer_;
  std::uint64_t seed_;
};

std::string batch_stats(const ImageBatch& batch) {
  double lo = INFINITY, hi = -INFINITY, sum = 0;
  std::size_t n = 0;
  for (const Image& img : batch.images)
    for (float v : img.data) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
      sum += v;
      ++n;
    }
  std::ostringstream s;
  s << batch.size() << " images, pixel min " << lo << " max " << hi << " mean " << (n ? sum / n : 0.0);
  return s.str();
}

std::string parameter_stats(const ParameterList& params) {
  std::ostringstream s;
  for (const auto& p : params) {
    double sq = 0;
    bool finite = true;
    for (Real v : p.value.data()) {
      sq += static_cast<double>(v) * v;
      finite = finite && std::isfinite(v);
    }
    s << "\n  " << p.name << " norm " << std::sqrt(sq) << (finite ? "" : " (non-finite)");
  }
  return s.str();
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (const auto& info : kStrategies)
    if (info.strategy == s) return info.name;
  return "?";
}

std::optional<Strategy> strategy_from_name(std::string_view name) {
  for (const auto& info : kStrategies)
    if (info.name == name) return info.strategy;
  return std::nullopt;
}

std::string strategy_names() {
  std::string out;
  for (const auto& info : kStrategies) {
    if (!out.empty()) out += ", ";
    out += info.name;
  }
  return out;
}

std::optional<augment::OpSet> random_ops(Strategy s) {
  switch (s) {
    case Strategy::RndAll:
      return augment::OpSet::All;
    case Strategy::RndColor:
    case Strategy::AdvStnColor:
      return augment::OpSet::Color;
    case Strategy::RndGeo:
      return augment::OpSet::Geometric;
    default:
      return std::nullopt;
  }
}

bool uses_stn(Strategy s) { return s == Strategy::AdvStn || s == Strategy::AdvStnColor; }

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0) || !(lr_final > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(lr_decay_at >= 0.0 && lr_decay_at <= 1.0)) throw std::invalid_argument("lr_decay_at must be in [0, 1]");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  policy.validate();
  weights.validate();
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  const auto decay = static_cast<std::size_t>(std::llround(config.lr_decay_at * static_cast<double>(config.epochs)));
  return epoch < decay ? config.lr : config.lr_final;
}

void sgd_step(const ParameterList& params, double lr) {
  for (const auto& p : params) {
    Tensor t = p.value;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto v = t.mutable_data();
    const auto step = static_cast<Real>(lr);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
    t.zero_grad();
  }
}

double evaluate(const Classifier& model, const data::Dataset& dataset) {
  if (dataset.size() == 0) throw data::DataError("evaluate: empty dataset " + dataset.name);
  const auto pred = model.predict(dataset.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    correct += static_cast<int>(pred[i]) == dataset.labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(dataset.size());
}

SeedResult train_seed(const TrainConfig& config, const data::DomainData& data, std::uint64_t seed,
                      const EpochCallback& on_epoch) {
  config.validate();
  const bool adapt = config.mode == Mode::Adaptation;
  const data::Dataset sources = data.pooled_sources();
  if (sources.size() == 0) throw data::DataError("training needs at least one source sample");
  if (adapt && data.target.size() == 0) {
    throw DomainContractError("adaptation needs unlabeled target-domain data");
  }
  const bool use_target = adapt && config.strategy != Strategy::None;
  data::Dataset source_test;
  for (const auto& d : data.source_test)
    for (std::size_t i = 0; i < d.size(); ++i) source_test.push_back(d.images[i], d.labels[i], d.domains[i]);

  const Image& first = sources.images.front();
  const InputShape in{first.channels, first.height, first.width};

  SeedResult result;
  result.seed = seed;
  result.model = Classifier::init(derive_seed(seed, "init.classifier"), data.num_classes, in);
  if (uses_stn(config.strategy)) {
    result.localizer = stn::LocalizationNet::init(derive_seed(seed, "init.localizer"), in);
  }
  ParameterList params = result.model.parameters();
  if (result.localizer) {
    params.insert(params.end(), result.localizer->parameters().begin(), result.localizer->parameters().end());
  }
  const Step step_fn(config, result.model, result.localizer ? &*result.localizer : nullptr, seed);

  const std::uint64_t batch_seed = derive_seed(seed, "train.batches");
  const data::Batcher batcher(sources, config.batch_size, batch_seed);
  std::optional<data::PairedBatcher> paired;
  if (use_target) paired.emplace(sources, data.target, config.batch_size, batch_seed);

  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = learning_rate(config, epoch);
    std::vector<data::PairedBatch> steps;
    if (paired) {
      steps = paired->epoch(epoch);
    } else {
      for (auto& b : batcher.epoch(epoch)) steps.push_back({std::move(b), {}});
    }
    for (const auto& batch : steps) {
      const StepTerms terms = step_fn.run(batch.source, paired ? &batch.target : nullptr, global_step);
      const double total = terms.total.item();
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << m.epoch << " step " << global_step << " (seed " << seed
            << "): L_m " << terms.supervised << " L_c " << terms.consistency << " L_e " << terms.entropy
            << " L_adv " << terms.adversarial << "\nsource batch: " << batch_stats(batch.source);
        if (paired) msg << "\ntarget batch: " << batch_stats(batch.target);
        msg << "\nparameters:" << parameter_stats(params);
        throw TrainingDiverged(msg.str());
      }
      terms.total.backward();
      sgd_step(params, m.lr);
      m.supervised += terms.supervised;
      m.consistency += terms.consistency;
      m.entropy += terms.entropy;
      m.adversarial += terms.adversarial;
      m.total += total;
      ++global_step;
    }
    const auto n = static_cast<double>(steps.size());
    m.supervised /= n;
    m.consistency /= n;
    m.entropy /= n;
    m.adversarial /= n;
    m.total /= n;
    m.source_acc = source_test.size() ? evaluate(result.model, source_test) : 0.0;
    m.target_acc = data.target.size() ? evaluate(result.model, data.target) : 0.0;
    result.history.push_back(m);
    if (on_epoch) on_epoch(seed, m);
  }

  for (const auto& d : data.source_test) {
    if (d.size()) result.domains.push_back({d.name, "source", evaluate(result.model, d)});
  }
  if (data.target.size()) result.domains.push_back({data.target.name, "target", evaluate(result.model, data.target)});
  result.source_acc = result.history.back().source_acc;
  result.target_acc = result.history.back().target_acc;
  return result;
}

RunReport train(const TrainConfig& config, const data::DomainData& data, const EpochCallback& on_epoch) {
  config.validate();
  RunReport report;
  report.config = config;
  for (std::uint64_t seed : config.seeds) {
    report.seeds.push_back(train_seed(config, data, seed, on_epoch));
    report.mean_source_acc += report.seeds.back().source_acc;
    report.mean_target_acc += report.seeds.back().target_acc;
  }
  report.mean_source_acc /= static_cast<double>(report.seeds.size());
  report.mean_target_acc /= static_cast<double>(report.seeds.size());
  return report;
}

std::vector<SweepCell> sweep(const TrainConfig& config, const data::DomainData& data,
                             const std::vector<double>& lambda_c, const std::vector<double>& lambda_t) {
  if (lambda_c.empty() || lambda_t.empty()) throw std::invalid_argument("sweep grid must be nonempty");
  std::vector<SweepCell> cells;
  for (double lc : lambda_c) {
    for (double lt : lambda_t) {
      TrainConfig cfg = config;
      cfg.weights.consistency = lc;
      cfg.weights.adversarial = lt;
      const RunReport r = train(cfg, data);
      SweepCell cell{lc, lt, {}, r.mean_target_acc};
      for (const auto& s : r.seeds) cell.target_acc.push_back(s.target_acc);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (n == 0 || !(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("log_grid: need n >= 1 and 0 < lo <= hi");
  if (n == 1) return {lo};
  std::vector<double> out(n);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

TRANSDA_CORE_END
