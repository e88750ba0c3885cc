#pragma once

#include <torch/torch.h>

#include <random>

#include "freqsr/dct.hpp"
#include "freqsr/sfd.hpp"
#include "freqsr/sfr.hpp"

namespace freqsr {

struct ModelConfig {
  SfrConfig sfr;
  SfdConfig sfd;
  // 0 lets the policy choose per block; any other value pins every block's VFP.
  int fixed_action = 0;

  void validate() const;
};

/// Every intermediate of one pass, so training and tests can inspect them.
struct ForwardResult {
  SpectralMap f_lr;
  torch::Tensor states;          // [N, 65] (empty with a fixed action)
  PolicyOutput policy;           // undefined tensors with a fixed action
  torch::Tensor action_indices;  // [N] int64
  torch::Tensor vfp;             // [N] int64, index + min_action
  torch::Tensor mask;            // [B, 64, rows, cols]
  Division parts;
  torch::Tensor hf_recovered;    // remasked SFR output
  SpectralMap f_sr;
  torch::Tensor sr;              // [B, 1, H, W], unclamped
};

/// CDCT -> per-block division -> HF recovery -> inverse CDCT.
class FreqSRImpl : public torch::nn::Module {
 public:
  explicit FreqSRImpl(ModelConfig config = {});

  /// `lr` is the bicubic-upsampled luminance [B, 1, H, W] with H, W multiples of 8.
  ForwardResult forward(const torch::Tensor& lr, const torch::Tensor& scales, ActionMode mode,
                        std::mt19937_64& rng);

  /// Sets the SFR per-channel spectral scale to the RMS of each coefficient
  /// over `lr` (clamped below at 1e-3).
  void calibrate_spectral_scale(const torch::Tensor& lr);

  const ModelConfig& config() const { return config_; }

  torch::Tensor cdct_filters;     // trainable [64, 1, 8, 8]
  torch::Tensor reference_basis;  // buffer, analytic DCT
  ActorCritic policy{nullptr};
  SfrNet sfr{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(FreqSR);

}  // namespace freqsr
