#include "freqsr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "freqsr/data.hpp"
#include "freqsr/errors.hpp"

namespace freqsr {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) {
    c.*field = parse_number<T>(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["steps"] = number(&TrainConfig::steps);
    t["batch_size"] = number(&TrainConfig::batch_size);
    t["patch_size"] = number(&TrainConfig::patch_size);
    t["lr"] = number(&TrainConfig::lr);
    t["lr_floor"] = number(&TrainConfig::lr_floor);
    t["lambda_orth"] = number(&TrainConfig::lambda_orth);
    t["mu_var"] = number(&TrainConfig::mu_var);
    t["omega"] = number(&TrainConfig::omega);
    t["seed"] = number(&TrainConfig::seed);
    t["train_scale"] = number(&TrainConfig::train_scale);
    t["calibration_patches"] = number(&TrainConfig::calibration_patches);
    t["prefetch"] = number(&TrainConfig::prefetch);
    t["checkpoint_every"] = number(&TrainConfig::checkpoint_every);
    t["train_dir"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.train_dir = v; };
    t["log_path"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.log_path = v; };
    t["checkpoint_path"] = [](TrainConfig& c, const std::string&, const std::string& v) {
      c.checkpoint_path = v;
    };
    auto sfr_int = [](int SfrConfig::*field) -> Setter {
      return [field](TrainConfig& c, const std::string& k, const std::string& v) {
        c.model.sfr.*field = parse_number<int>(k, v);
      };
    };
    t["num_dense_groups"] = sfr_int(&SfrConfig::num_dense_groups);
    t["blocks_per_group"] = sfr_int(&SfrConfig::blocks_per_group);
    t["channels"] = sfr_int(&SfrConfig::channels);
    t["expansion"] = sfr_int(&SfrConfig::expansion);
    t["se_reduction"] = sfr_int(&SfrConfig::se_reduction);
    t["num_experts"] = sfr_int(&SfrConfig::num_experts);
    t["recursion_depth"] = sfr_int(&SfrConfig::recursion_depth);
    t["dense"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.sfr.dense = parse_bool(k, v);
    };
    t["sfa"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.sfr.sfa = parse_bool(k, v);
    };
    t["min_action"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.sfd.min_action = parse_number<int>(k, v);
    };
    t["max_action"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.sfd.max_action = parse_number<int>(k, v);
    };
    t["hidden"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.sfd.hidden = parse_number<int>(k, v);
    };
    t["beta"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.sfd.beta = parse_number<double>(k, v);
    };
    t["fixed_action"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.fixed_action = parse_number<int>(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (steps <= 0) throw ConfigError("steps must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (patch_size <= 0 || patch_size % 8 != 0) throw ConfigError("patch_size must be a positive multiple of 8");
  if (!(lr > 0.0) || lr_floor < 0.0 || lr_floor > lr) throw ConfigError("need 0 <= lr_floor <= lr, lr > 0");
  if (lambda_orth < 0.0 || mu_var < 0.0 || omega < 0.0) throw ConfigError("loss weights must be non-negative");
  if (train_scale != 0.0) {
    try {
      check_scale(train_scale);
    } catch (const RangeError& e) {
      throw ConfigError(std::string("train_scale: ") + e.what());
    }
  }
  if (calibration_patches < 0) throw ConfigError("calibration_patches must be non-negative");
  if (prefetch <= 0) throw ConfigError("prefetch must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
}

void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path.string() + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  const auto& s = c.model.sfr;
  const auto& d = c.model.sfd;
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"patch_size", c.patch_size},
          {"lr", c.lr},
          {"lr_floor", c.lr_floor},
          {"lambda_orth", c.lambda_orth},
          {"mu_var", c.mu_var},
          {"omega", c.omega},
          {"seed", c.seed},
          {"train_scale", c.train_scale},
          {"calibration_patches", c.calibration_patches},
          {"prefetch", c.prefetch},
          {"checkpoint_every", c.checkpoint_every},
          {"train_dir", c.train_dir},
          {"log_path", c.log_path},
          {"checkpoint_path", c.checkpoint_path},
          {"num_dense_groups", s.num_dense_groups},
          {"blocks_per_group", s.blocks_per_group},
          {"channels", s.channels},
          {"expansion", s.expansion},
          {"se_reduction", s.se_reduction},
          {"num_experts", s.num_experts},
          {"recursion_depth", s.recursion_depth},
          {"dense", s.dense},
          {"sfa", s.sfa},
          {"bias", s.bias},
          {"min_action", d.min_action},
          {"max_action", d.max_action},
          {"hidden", d.hidden},
          {"beta", d.beta},
          {"fixed_action", c.model.fixed_action}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.steps = j.at("steps");
    c.batch_size = j.at("batch_size");
    c.patch_size = j.at("patch_size");
    c.lr = j.at("lr");
    c.lr_floor = j.at("lr_floor");
    c.lambda_orth = j.at("lambda_orth");
    c.mu_var = j.at("mu_var");
    c.omega = j.at("omega");
    c.seed = j.at("seed");
    c.train_scale = j.at("train_scale");
    c.calibration_patches = j.at("calibration_patches");
    c.prefetch = j.at("prefetch");
    c.checkpoint_every = j.at("checkpoint_every");
    c.train_dir = j.at("train_dir");
    c.log_path = j.at("log_path");
    c.checkpoint_path = j.at("checkpoint_path");
    auto& s = c.model.sfr;
    s.num_dense_groups = j.at("num_dense_groups");
    s.blocks_per_group = j.at("blocks_per_group");
    s.channels = j.at("channels");
    s.expansion = j.at("expansion");
    s.se_reduction = j.at("se_reduction");
    s.num_experts = j.at("num_experts");
    s.recursion_depth = j.at("recursion_depth");
    s.dense = j.at("dense");
    s.sfa = j.at("sfa");
    s.bias = j.at("bias");
    auto& d = c.model.sfd;
    d.min_action = j.at("min_action");
    d.max_action = j.at("max_action");
    d.hidden = j.at("hidden");
    d.beta = j.at("beta");
    c.model.fixed_action = j.at("fixed_action");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config snapshot: ") + e.what());
  }
  return c;
}

}  // namespace freqsr
