#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "freqsr/config.hpp"
#include "freqsr/data.hpp"
#include "freqsr/model.hpp"

namespace freqsr {

inline constexpr int kCheckpointFormatVersion = 1;

/// lambda * 1/2 * sum_{i != j} (w_i . w_j)^2 + mu * 1/2 * sum_t (var(w_t) - var(w_t^dct))^2
torch::Tensor l_dct(const torch::Tensor& filters, double lambda, double mu);

/// 1/2 * mean((sr - hr)^2).
torch::Tensor l_sfr(const torch::Tensor& sr, const torch::Tensor& hr);

struct LossBreakdown {
  double l_sfr = 0.0;
  double l_dct = 0.0;
  double l_sfd = 0.0;
  double l_total = 0.0;
  double lambda = 0.0;
  double mu = 0.0;
  double omega = 0.0;
  double beta = 0.0;
  torch::Tensor total;  // differentiable total
};

/// L_total = L_SFR + L_DCT + omega * L_SFD. Throws NumericError naming the
/// first non-finite term.
LossBreakdown total_loss(const torch::Tensor& sfr, const torch::Tensor& dct, const torch::Tensor& sfd,
                         double omega);

/// Cosine annealing from `base` at step 0 to `floor` at total_steps.
double lr_schedule(int64_t step, int64_t total_steps, double base = 2e-4, double floor = 1e-6);

struct StepMetrics {
  int64_t step = 0;  // 1-based
  double lr = 0.0;
  LossBreakdown losses;
  double mean_action = 0.0;
  double mean_reward = 0.0;
};

/// All loss terms of one forward pass, before any optimizer step.
struct StepLosses {
  ForwardResult forward;
  torch::Tensor sfr;
  torch::Tensor dct;
  torch::Tensor sfd;
  torch::Tensor rewards;  // per patch
};

/// Runs the model on a batch and assembles L_SFR, L_DCT and L_SFD (rewards
/// from the current reconstruction, broadcast to every block of a patch).
StepLosses compute_losses(FreqSR& model, const BatchTensors& batch, const TrainConfig& config,
                          ActionMode mode, std::mt19937_64& rng);

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const StepMetrics& m);

/// Joint single-writer training loop.
class Trainer {
 public:
  /// Fresh model seeded from config.seed; calibrates the spectral scale on
  /// `config.calibration_patches` sampled patches.
  Trainer(TrainConfig config, DatasetManifest manifest);

  StepMetrics train_step(const BatchTensors& batch);

  /// Runs until config.steps, streaming log rows (and writing checkpoints
  /// when configured). `on_step` is called after every step.
  std::vector<StepMetrics> run(std::ostream* log = nullptr,
                               const std::function<void(const StepMetrics&)>& on_step = {});

  FreqSR& model() { return model_; }
  torch::optim::Adam& optimizer() { return *optimizer_; }
  const TrainConfig& config() const { return config_; }
  int64_t step() const { return step_; }

  void save(const std::filesystem::path& path) const;
  /// Restores model weights, optimizer moments and the step counter.
  void restore(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  FreqSR model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  PatchSampler sampler_;
  std::mt19937_64 action_rng_;
  int64_t step_ = 0;
};

/// Named tensors plus metadata in the on-disk container.
struct CheckpointData {
  int format_version = kCheckpointFormatVersion;
  int64_t step = 0;
  TrainConfig config;
  std::map<std::string, torch::Tensor> tensors;  // float32, CPU
};

/// Magic, uint64 header length, JSON header, float32 payload. Written to a
/// temporary file and renamed into place.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
/// Throws IoError, FormatError (bad magic / checksum) or VersionError.
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Model parameters and buffers under "model/<name>", Adam moments under
/// "adam/<name>/exp_avg" etc.
CheckpointData make_checkpoint(FreqSR& model, const torch::optim::Adam* optimizer, int64_t step,
                               const TrainConfig& config);

void save_checkpoint(const std::filesystem::path& path, FreqSR& model,
                     const torch::optim::Adam* optimizer, int64_t step, const TrainConfig& config);

/// Copies "model/<name>" entries into a compatible model; missing or
/// mis-shaped tensors raise FormatError.
void load_model_tensors(FreqSR& model, const CheckpointData& data);

struct LoadedModel {
  TrainConfig config;
  int64_t step = 0;
  FreqSR model{nullptr};
};

/// Rebuilds the model described by a checkpoint, in eval mode.
LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace freqsr
