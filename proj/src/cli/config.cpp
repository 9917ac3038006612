#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace transda::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config key '" + key + "': '" + text + "' is not an integer");
  }
  return v;
}

}  // namespace

const std::vector<KeyDef>& Config::keys() {
  static const std::vector<KeyDef> defs = {
      {"strategy", "rnd-all", "none | rnd-all | rnd-color | rnd-geo | adv-stn | adv-stn-color"},
      {"epochs", "60", "training epochs"},
      {"lr", "0.001", "initial SGD learning rate"},
      {"lr_decay_at", "0.8", "fraction of epochs after which lr_final applies"},
      {"lr_final", "0.0001", "learning rate after the decay point"},
      {"batch_size", "32", "samples per batch (per domain side in adaptation)"},
      {"n_aug", "2", "random ops per image"},
      {"m_aug", "9", "shared normalized magnitude in [0, 10]"},
      {"lambda_c", "1.0", "consistency weight"},
      {"lambda_e", "0.1", "entropy weight (adaptation only)"},
      {"lambda_t", "0.1", "adversarial transformer weight"},
      {"seeds", "0", "comma-separated training seeds"},
      {"jitter", "true", "flip / shift / brightness jitter on the supervised branch"},
      {"out", "out", "output directory"},
      {"data.kind", "synthetic", "synthetic | directory"},
      {"data.root", "", "dataset root for the directory kind: <root>/<domain>/<class>/*.png"},
      {"data.num_classes", "7", "classes (synthetic; directory datasets use their class folders)"},
      {"data.per_class", "60", "synthetic samples per class and domain"},
      {"data.image_size", "32", "input height and width"},
      {"data.channels", "3", "input channels, 1 or 3"},
      {"data.target", "inverted", "target domain name"},
      {"data.sources", "", "comma-separated source domains; empty means all others"},
      {"data.train_fraction", "0.8", "per-class training fraction of each source domain"},
      {"data.seed", "0", "dataset generation and split seed"},
      {"sweep.lambda_c", "log:0.01:10:10", "sweep values for lambda_c: a list or log:lo:hi:n"},
      {"sweep.lambda_t", "log:0.01:10:10", "sweep values for lambda_t: a list or log:lo:hi:n"},
  };
  return defs;
}

bool Config::known(const std::string& key) {
  const auto& defs = keys();
  return std::any_of(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.key == key; });
}

Config::Config() {
  for (const auto& d : keys()) values_[d.key] = d.default_value;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::string Config::resolved_text() const {
  std::string out;
  for (const auto& d : keys()) out += d.key + " = " + get(d.key) + "\n";
  return out;
}

double Config::get_double(const std::string& key) const { return parse_double(key, get(key)); }
long long Config::get_int(const std::string& key) const { return parse_int(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  const std::string& v = get(key);
  if (v.rfind("log:", 0) == 0) {
    const auto parts = split(v.substr(4), ':');
    if (parts.size() != 3) throw ConfigError("config key '" + key + "': expected log:lo:hi:n");
    const long long n = parse_int(key, parts[2]);
    if (n < 1) throw ConfigError("config key '" + key + "': n must be >= 1");
    try {
      return log_grid(parse_double(key, parts[0]), parse_double(key, parts[1]), static_cast<std::size_t>(n));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one value");
  return out;
}

std::vector<std::uint64_t> Config::get_seeds() const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(get("seeds"), ',')) {
    const long long s = parse_int("seeds", item);
    if (s < 0) throw ConfigError("config key 'seeds': seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(s));
  }
  if (out.empty()) throw ConfigError("config key 'seeds' needs at least one seed");
  return out;
}

TrainConfig Config::train_config(Mode mode) const {
  TrainConfig c;
  c.mode = mode;
  const auto strategy = strategy_from_name(get("strategy"));
  if (!strategy) {
    throw ConfigError("unknown strategy '" + get("strategy") + "' (valid: " + strategy_names() + ")");
  }
  c.strategy = *strategy;
  const long long epochs = get_int("epochs"), batch = get_int("batch_size"), n_aug = get_int("n_aug");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch_size must be >= 1");
  c.epochs = static_cast<std::size_t>(epochs);
  c.batch_size = static_cast<std::size_t>(batch);
  c.lr = get_double("lr");
  c.lr_decay_at = get_double("lr_decay_at");
  c.lr_final = get_double("lr_final");
  c.policy.n_aug = static_cast<int>(n_aug);
  c.policy.m_aug = get_double("m_aug");
  c.weights.consistency = get_double("lambda_c");
  c.weights.entropy = get_double("lambda_e");
  c.weights.adversarial = get_double("lambda_t");
  c.seeds = get_seeds();
  c.jitter = get_bool("jitter");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

data::DatasetSpec Config::dataset_spec() const {
  data::DatasetSpec s;
  const std::string& kind = get("data.kind");
  if (kind == "synthetic") {
    s.kind = data::SourceKind::Synthetic;
  } else if (kind == "directory") {
    s.kind = data::SourceKind::Directory;
  } else {
    throw ConfigError("data.kind must be synthetic or directory, got '" + kind + "'");
  }
  s.root = get("data.root");
  const long long k = get_int("data.num_classes"), per = get_int("data.per_class");
  const long long size = get_int("data.image_size"), ch = get_int("data.channels");
  const long long seed = get_int("data.seed");
  if (k < 0 || per < 0 || size < 0 || ch < 0 || seed < 0) throw ConfigError("data.* integers must be non-negative");
  s.num_classes = static_cast<int>(k);
  s.per_class = static_cast<int>(per);
  s.image_size = static_cast<std::size_t>(size);
  s.channels = static_cast<std::size_t>(ch);
  s.target = get("data.target");
  s.sources = split(get("data.sources"), ',');
  s.train_fraction = get_double("data.train_fraction");
  s.seed = static_cast<std::uint64_t>(seed);
  try {
    s.validate();
  } catch (const data::DataError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

void apply_data_override(Config& config, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos) {
    // A config file; only its data.* keys are taken.
    Config file;
    file.load_file(item);
    for (const auto& d : Config::keys())
      if (d.key.rfind("data.", 0) == 0) config.set(d.key, file.get(d.key));
    return;
  }
  std::string key = trim(item.substr(0, eq));
  if (key.rfind("data.", 0) != 0) key = "data." + key;
  if (!Config::known(key)) throw ConfigError("--data: unknown dataset key '" + key + "'");
  config.set(key, trim(item.substr(eq + 1)));
}

std::string help_footer() {
  std::string out = "\nConfig keys (key = value, '#' comments), with defaults:\n";
  for (const auto& d : Config::keys()) {
    out += "  " + d.key + " = " + (d.default_value.empty() ? "\"\"" : d.default_value) + "\n      " + d.help + "\n";
  }
  out += "\nExit codes: 0 success, 1 configuration error, 2 runtime failure.\n";
  return out;
}

}  // namespace transda::cli
