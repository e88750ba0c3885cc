#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "freqsr/model.hpp"

namespace freqsr {

struct TrainConfig {
  ModelConfig model;

  int64_t steps = 1000;
  int64_t batch_size = 16;
  int64_t patch_size = 96;
  double lr = 2e-4;
  double lr_floor = 1e-6;
  double lambda_orth = 1e-3;  // Gram off-diagonal weight
  double mu_var = 1e-3;       // variance-matching weight
  double omega = 0.1;         // weight of the actor-critic loss
  uint64_t seed = 0;
  // 0 draws every patch's scale from the 30-value grid; otherwise fixed.
  double train_scale = 0.0;
  int64_t calibration_patches = 64;
  int64_t prefetch = 2;
  int64_t checkpoint_every = 0;  // 0 = only at the end
  std::string train_dir;
  std::string log_path;
  std::string checkpoint_path;

  void validate() const;
};

/// Applies one `key = value` assignment. Unknown keys raise ConfigError.
void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Keyed text file: one `key = value` per line, `#` starts a comment.
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

}  // namespace freqsr
