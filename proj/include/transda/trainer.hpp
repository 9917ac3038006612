#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "transda/augment.hpp"
#include "transda/data.hpp"
#include "transda/losses.hpp"
#include "transda/model.hpp"
#include "transda/stn.hpp"

TRANSDA_CORE_BEGIN

enum class Strategy { None, RndAll, RndColor, RndGeo, AdvStn, AdvStnColor };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(std::string_view name);
std::string strategy_names();
// Random ops used for the consistency branch; nullopt when there is none.
std::optional<augment::OpSet> random_ops(Strategy s);
bool uses_stn(Strategy s);

struct TrainConfig {
  Mode mode = Mode::Adaptation;
  Strategy strategy = Strategy::RndAll;
  std::size_t epochs = 60;
  double lr = 0.001;
  // Epoch round(lr_decay_at * epochs) and later use lr_final.
  double lr_decay_at = 0.8;
  double lr_final = 0.0001;
  std::size_t batch_size = 32;
  augment::Policy policy;
  LossWeights weights;
  std::vector<std::uint64_t> seeds = {0};
  // Flip / shift / brightness jitter on the supervised branch.
  bool jitter = true;

  void validate() const;
};

// 0-based epoch index.
double learning_rate(const TrainConfig& config, std::size_t epoch);

// Epoch means of the loss terms; absent terms report 0.
struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double supervised = 0;
  double consistency = 0;
  double entropy = 0;
  double adversarial = 0;
  double total = 0;
  double source_acc = 0;  // held-out source splits, pooled
  double target_acc = 0;
};

struct DomainAccuracy {
  std::string domain;
  std::string role;  // "source" (held-out split) or "target"
  double accuracy = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> history;
  std::vector<DomainAccuracy> domains;
  double source_acc = 0;
  double target_acc = 0;
  Classifier model;
  std::optional<stn::LocalizationNet> localizer;
};

struct RunReport {
  TrainConfig config;
  std::vector<SeedResult> seeds;
  double mean_source_acc = 0;
  double mean_target_acc = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(std::uint64_t seed, const EpochMetrics&)>;

// Plain SGD: p -= lr * grad for every parameter holding a gradient, then
// clears the gradients.
void sgd_step(const ParameterList& params, double lr);

// Percentage of correctly classified samples, no augmentation.
double evaluate(const Classifier& model, const data::Dataset& dataset);

SeedResult train_seed(const TrainConfig& config, const data::DomainData& data, std::uint64_t seed,
                      const EpochCallback& on_epoch = {});
RunReport train(const TrainConfig& config, const data::DomainData& data,
                const EpochCallback& on_epoch = {});

struct SweepCell {
  double lambda_c = 0;
  double lambda_t = 0;
  std::vector<double> target_acc;  // per seed
  double mean_target_acc = 0;
};

// One training run per (lambda_c, lambda_t, seed); row-major over lambda_c.
std::vector<SweepCell> sweep(const TrainConfig& config, const data::DomainData& data,
                             const std::vector<double>& lambda_c, const std::vector<double>& lambda_t);

// n values logarithmically spaced over [lo, hi], endpoints included.
std::vector<double> log_grid(double lo, double hi, std::size_t n);

TRANSDA_CORE_END
