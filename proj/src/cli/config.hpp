#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "transda/data.hpp"
#include "transda/trainer.hpp"

namespace transda::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyDef {
  std::string key;
  std::string default_value;
  std::string help;
};

// Flat key = value settings. Every key has a documented default; unknown
// keys are rejected.
class Config {
 public:
  static const std::vector<KeyDef>& keys();
  static bool known(const std::string& key);

  Config();
  // '#' starts a comment; blank lines are ignored.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  // One "key = value" line per key, in documentation order.
  std::string resolved_text() const;

  TrainConfig train_config(Mode mode) const;
  data::DatasetSpec dataset_spec() const;

  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::uint64_t> get_seeds() const;

 private:
  std::map<std::string, std::string> values_;
};

// `item` is key=value (the "data." prefix is optional) or the path of a
// config file whose data.* keys are copied.
void apply_data_override(Config& config, const std::string& item);

std::string help_footer();

}  // namespace transda::cli
