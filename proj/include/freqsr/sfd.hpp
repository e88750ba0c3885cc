#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>

#include "freqsr/dct.hpp"

namespace freqsr {

inline constexpr int kStateSize = kNumCoeffs + 1;
// Block spectra are divided by this before entering the policy state.
inline constexpr double kStateSpectrumScale = 8.0;

struct SfdConfig {
  int min_action = 1;
  int max_action = 13;
  int hidden = 128;
  double beta = 0.01;

  int num_actions() const { return max_action - min_action + 1; }
  void validate() const;
};

/// [spectrum / 8, r] for one 64-vector block spectrum.
torch::Tensor build_state(const torch::Tensor& block_spectrum, double r);

/// States for every block of every image, detached from the graph.
/// `scales` holds one factor per batch item. Row order is (b, i, j).
torch::Tensor build_states(const SpectralMap& f, const torch::Tensor& scales);

struct PolicyOutput {
  torch::Tensor logits;  // [N, A]
  torch::Tensor value;   // [N]
};

/// Separate actor and critic MLPs (two tanh hidden layers each). The last
/// actor layer starts at 1% of its default scale so the fresh policy is close
/// to uniform.
class ActorCriticImpl : public torch::nn::Module {
 public:
  explicit ActorCriticImpl(SfdConfig config = {});

  PolicyOutput forward(const torch::Tensor& states);

  const SfdConfig& config() const { return config_; }

 private:
  SfdConfig config_;
  torch::nn::Sequential actor_{nullptr};
  torch::nn::Sequential critic_{nullptr};
};
TORCH_MODULE(ActorCritic);

enum class ActionMode { kSample, kGreedy };

/// Per-row categorical indices in [0, A). Greedy mode breaks ties towards the
/// lowest index; sample mode consumes one uniform draw per row from `rng`.
torch::Tensor select_action_indices(const torch::Tensor& logits, ActionMode mode,
                                    std::mt19937_64& rng);

/// Single-state convenience: returns the VFP value a (index + min_action).
int select_action(const PolicyOutput& out, ActionMode mode, uint64_t seed, int min_action = 1);

/// 64-vector with ones on the first `a` zigzag positions. `a` must lie in
/// [1, max_action].
torch::Tensor make_mask(int a, int max_action = 13, torch::Dtype dtype = torch::kFloat64);

/// Mask grid [B, 64, rows, cols] from per-block VFP values ordered (b, i, j).
torch::Tensor mask_grid(const torch::Tensor& vfp, int64_t batch, int64_t rows, int64_t cols,
                        torch::Dtype dtype);

struct Division {
  SpectralMap low;
  SpectralMap high;
};

/// f_low = f * M, f_high = f * (1 - M).
Division divide(const SpectralMap& f, const torch::Tensor& mask);

/// R = 1 - MSE for one patch pair.
double reward(const torch::Tensor& sr, const torch::Tensor& hr);

/// Per-patch rewards for [B, 1, H, W] batches, detached.
torch::Tensor patch_rewards(const torch::Tensor& sr, const torch::Tensor& hr);

/// One-step advantage A = R - V(s).
inline double advantage(double r, double v) { return r - v; }

/// Mean Shannon entropy of the row-wise categorical policies.
torch::Tensor policy_entropy(const torch::Tensor& logits);

/// L_pi = -mean(A * log pi(a|s)) - beta * H(pi). Advantages are detached.
/// Throws NumericError on non-finite inputs.
torch::Tensor policy_loss(const torch::Tensor& logits, const torch::Tensor& action_indices,
                          const torch::Tensor& advantages, double beta = 0.01);

/// L_v = 1/2 * mean((R - V(s))^2).
torch::Tensor value_loss(const torch::Tensor& values, const torch::Tensor& rewards);

/// L_SFD = (L_pi + L_v) / 2.
torch::Tensor sfd_loss(const torch::Tensor& policy, const torch::Tensor& value);

}  // namespace freqsr
