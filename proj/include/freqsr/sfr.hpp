#pragma once

#include <torch/torch.h>

#include <vector>

#include "freqsr/dct.hpp"

namespace freqsr {

struct SfrConfig {
  int num_dense_groups = 3;
  int blocks_per_group = 4;
  int channels = 64;
  int expansion = 4;
  int se_reduction = 16;
  int num_experts = 4;
  int recursion_depth = 2;
  bool dense = true;  // --no-dense rewires each group as a plain chain
  bool sfa = true;    // --no-sfa drops the scale-aware adaption blocks
  bool bias = true;   // bias terms on every convolution / linear layer

  void validate() const;
};

/// f_o = lambda0 * SE(WA(f_i)) + lambda_i * f_i. WA is the low-rank wide
/// activation: 1x1 expand to expansion*C, ReLU, 1x1 squeeze to 4C/5, 3x3 back
/// to C. SE is global pooling, a C/se_reduction bottleneck and a sigmoid gate.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int channels, int expansion, int se_reduction, bool bias);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor wide_activation(const torch::Tensor& x);
  /// Channel gates in (0, 1), shape [B, C].
  torch::Tensor se_gate(const torch::Tensor& features);

  torch::Tensor lambda_res;
  torch::Tensor lambda_skip;

 private:
  torch::nn::Conv2d expand_{nullptr};
  torch::nn::Conv2d squeeze_{nullptr};
  torch::nn::Conv2d spatial_{nullptr};
  torch::nn::Linear se_down_{nullptr};
  torch::nn::Linear se_up_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Locally dense group: block k sees the 1x1 fusion of [f_0, ..., f_{k-1}],
/// and the group output is the 1x1 fusion of all of them.
class DenseGroupImpl : public torch::nn::Module {
 public:
  explicit DenseGroupImpl(const SfrConfig& config);

  torch::Tensor forward(const torch::Tensor& x);

  std::vector<ResidualBlock>& blocks() { return blocks_; }

 private:
  bool dense_;
  std::vector<ResidualBlock> blocks_;
  std::vector<torch::nn::Conv2d> fusers_;
  torch::nn::Conv2d output_{nullptr};
};
TORCH_MODULE(DenseGroup);

/// Scale-aware feature adaption: a two-layer controller maps r to softmax
/// routing weights over expert 3x3 kernels; the routed convolution is merged
/// with its input by a 1x1 conv and then concatenated with the input again and
/// fused.
class SfaBlockImpl : public torch::nn::Module {
 public:
  SfaBlockImpl(int channels, int num_experts, bool bias);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& scales);
  /// [B, num_experts], rows sum to 1.
  torch::Tensor routing_weights(const torch::Tensor& scales);

  torch::Tensor experts;  // [E, C, C, 3, 3]

 private:
  int channels_;
  torch::nn::Linear controller_in_{nullptr};
  torch::nn::Linear controller_out_{nullptr};
  torch::nn::Conv2d merge_{nullptr};
  torch::nn::Conv2d cascade_{nullptr};
};
TORCH_MODULE(SfaBlock);

/// f * (1 - M): zeroes the retained low-frequency channels of every block.
torch::Tensor remask(const torch::Tensor& spectrum, const torch::Tensor& mask);

/// Global average pool over the block grid, keeping [B, C, 1, 1].
torch::Tensor global_average_pool(const torch::Tensor& x);

/// The high-frequency recovery network. Input spectra are divided by the
/// per-channel `spectral_scale` buffer before the first convolution and the
/// network's 64-channel output is multiplied back by it; the masked HF input
/// is then added through the long-range skip and the result is re-masked.
class SfrNetImpl : public torch::nn::Module {
 public:
  explicit SfrNetImpl(SfrConfig config = {});

  /// f_high [B, 64, rows, cols], scales [B], mask like f_high -> f_high'.
  torch::Tensor forward(const torch::Tensor& f_high, const torch::Tensor& scales,
                        const torch::Tensor& mask);

  /// 3x3 convolution of the normalised HF spectrum to C feature channels.
  torch::Tensor shallow_extract(const torch::Tensor& f_high);
  /// Recursive [dense group -> SFA] stack with shared weights.
  torch::Tensor deep_features(const torch::Tensor& shallow, const torch::Tensor& scales);
  /// Projection of lambda1 * f_D + lambda0 * ReLU(conv1x1(GAP(conv1x1(f_s))))
  /// onto 64 normalised spectral channels.
  torch::Tensor global_fuse(const torch::Tensor& deep, const torch::Tensor& shallow);

  const SfrConfig& config() const { return config_; }
  std::vector<DenseGroup>& groups() { return groups_; }
  std::vector<SfaBlock>& sfa_blocks() { return sfa_blocks_; }

  torch::Tensor spectral_scale;  // buffer [64]
  torch::Tensor lambda0;
  torch::Tensor lambda1;
  torch::nn::Conv2d shallow{nullptr};
  torch::nn::Conv2d gap_in{nullptr};
  torch::nn::Conv2d gap_out{nullptr};
  torch::nn::Conv2d project{nullptr};

 private:
  SfrConfig config_;
  std::vector<DenseGroup> groups_;
  std::vector<SfaBlock> sfa_blocks_;
};
TORCH_MODULE(SfrNet);

}  // namespace freqsr
