#include "freqsr/sfr.hpp"

#include <cmath>
#include <string>

#include "freqsr/errors.hpp"

namespace freqsr {
namespace {

constexpr int kControllerWidth = 64;

torch::nn::Conv2d conv(int in, int out, int kernel, bool bias) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).padding(kernel / 2).bias(bias));
}

int low_rank_width(int channels) { return std::max(1, channels * 4 / 5); }

}  // namespace

void SfrConfig::validate() const {
  if (num_dense_groups <= 0 || blocks_per_group <= 0 || channels <= 0 || expansion <= 0 ||
      se_reduction <= 0 || num_experts <= 0 || recursion_depth <= 0) {
    throw ConfigError("SFR configuration values must all be positive");
  }
  if (channels % se_reduction != 0) {
    throw ConfigError("SFR channels (" + std::to_string(channels) +
                      ") must be divisible by se_reduction (" + std::to_string(se_reduction) + ")");
  }
}

ResidualBlockImpl::ResidualBlockImpl(int channels, int expansion, int se_reduction, bool bias) {
  const int wide = channels * expansion;
  const int narrow = low_rank_width(channels);
  expand_ = register_module("expand", conv(channels, wide, 1, bias));
  squeeze_ = register_module("squeeze", conv(wide, narrow, 1, bias));
  spatial_ = register_module("spatial", conv(narrow, channels, 3, bias));
  se_down_ = register_module(
      "se_down", torch::nn::Linear(torch::nn::LinearOptions(channels, channels / se_reduction).bias(bias)));
  se_up_ = register_module(
      "se_up", torch::nn::Linear(torch::nn::LinearOptions(channels / se_reduction, channels).bias(bias)));
  lambda_res = register_parameter("lambda_res", torch::ones({1}));
  lambda_skip = register_parameter("lambda_skip", torch::ones({1}));
}

torch::Tensor ResidualBlockImpl::wide_activation(const torch::Tensor& x) {
  return spatial_->forward(squeeze_->forward(torch::relu(expand_->forward(x))));
}

torch::Tensor ResidualBlockImpl::se_gate(const torch::Tensor& features) {
  const auto pooled = features.mean({2, 3});
  return torch::sigmoid(se_up_->forward(torch::relu(se_down_->forward(pooled))));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  const auto wa = wide_activation(x);
  const auto gated = wa * se_gate(wa).unsqueeze(-1).unsqueeze(-1);
  return lambda_res * gated + lambda_skip * x;
}

DenseGroupImpl::DenseGroupImpl(const SfrConfig& config) : dense_(config.dense) {
  const int c = config.channels;
  for (int k = 0; k < config.blocks_per_group; ++k) {
    blocks_.push_back(register_module(
        "block" + std::to_string(k),
        ResidualBlock(c, config.expansion, config.se_reduction, config.bias)));
    if (dense_ && k > 0) {
      fusers_.push_back(register_module("fuse" + std::to_string(k), conv(c * (k + 1), c, 1, config.bias)));
    }
  }
  if (dense_) {
    output_ = register_module("output", conv(c * (config.blocks_per_group + 1), c, 1, config.bias));
  }
}

torch::Tensor DenseGroupImpl::forward(const torch::Tensor& x) {
  if (!dense_) {
    auto h = x;
    for (auto& block : blocks_) h = block->forward(h);
    return h;
  }
  std::vector<torch::Tensor> collected{x};
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto input = k == 0 ? x : fusers_[k - 1]->forward(torch::cat(collected, 1));
    collected.push_back(blocks_[k]->forward(input));
  }
  return output_->forward(torch::cat(collected, 1));
}

SfaBlockImpl::SfaBlockImpl(int channels, int num_experts, bool bias) : channels_(channels) {
  controller_in_ = register_module(
      "controller_in", torch::nn::Linear(torch::nn::LinearOptions(1, kControllerWidth).bias(bias)));
  controller_out_ = register_module(
      "controller_out",
      torch::nn::Linear(torch::nn::LinearOptions(kControllerWidth, num_experts).bias(bias)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels * 9));
  experts = register_parameter(
      "experts", torch::empty({num_experts, channels, channels, 3, 3}).uniform_(-bound, bound));
  merge_ = register_module("merge", conv(2 * channels, channels, 1, bias));
  cascade_ = register_module("cascade", conv(2 * channels, channels, 1, bias));
}

torch::Tensor SfaBlockImpl::routing_weights(const torch::Tensor& scales) {
  const auto r = scales.reshape({-1, 1}).to(experts.dtype());
  return torch::softmax(controller_out_->forward(torch::relu(controller_in_->forward(r))), 1);
}

torch::Tensor SfaBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& scales) {
  const int64_t b = x.size(0);
  const int64_t rows = x.size(2);
  const int64_t cols = x.size(3);
  if (scales.numel() != b) throw DimensionError("SFA block needs one scale per batch item");
  const auto routing = routing_weights(scales);  // [B, E]
  // Per-sample kernel sum_e w_e * K_e, applied as a grouped convolution.
  const auto kernels = torch::tensordot(routing, experts, {1}, {0});  // [B, C, C, 3, 3]
  const auto routed =
      torch::conv2d(x.reshape({1, b * channels_, rows, cols}),
                    kernels.reshape({b * channels_, channels_, 3, 3}), {}, 1, 1, 1, b)
          .reshape({b, channels_, rows, cols});
  const auto merged = merge_->forward(torch::cat({routed, x}, 1));
  return cascade_->forward(torch::cat({merged, x}, 1));
}

torch::Tensor remask(const torch::Tensor& spectrum, const torch::Tensor& mask) {
  if (spectrum.sizes() != mask.sizes()) throw DimensionError("remask: mask shape mismatch");
  return spectrum * (1.0 - mask.to(spectrum.dtype()));
}

torch::Tensor global_average_pool(const torch::Tensor& x) { return x.mean({2, 3}, true); }

SfrNetImpl::SfrNetImpl(SfrConfig config) : config_(config) {
  config_.validate();
  const int c = config_.channels;
  spectral_scale = register_buffer("spectral_scale", torch::ones({kNumCoeffs}));
  lambda0 = register_parameter("lambda0", torch::ones({1}));
  lambda1 = register_parameter("lambda1", torch::ones({1}));
  shallow = register_module("shallow", conv(kNumCoeffs, c, 3, config_.bias));
  for (int g = 0; g < config_.num_dense_groups; ++g) {
    groups_.push_back(register_module("group" + std::to_string(g), DenseGroup(config_)));
    if (config_.sfa) {
      sfa_blocks_.push_back(
          register_module("sfa" + std::to_string(g), SfaBlock(c, config_.num_experts, config_.bias)));
    }
  }
  gap_in = register_module("gap_in", conv(c, c, 1, config_.bias));
  gap_out = register_module("gap_out", conv(c, c, 1, config_.bias));
  project = register_module("project", conv(c, kNumCoeffs, 1, config_.bias));
  // The recovered residual starts at zero, so a fresh model reproduces its input spectrum.
  torch::NoGradGuard no_grad;
  project->weight.zero_();
  if (config_.bias) project->bias.zero_();
}

torch::Tensor SfrNetImpl::shallow_extract(const torch::Tensor& f_high) {
  const auto scale = spectral_scale.to(f_high.dtype()).reshape({1, kNumCoeffs, 1, 1});
  return shallow->forward(f_high / scale);
}

torch::Tensor SfrNetImpl::deep_features(const torch::Tensor& shallow_features,
                                        const torch::Tensor& scales) {
  auto h = shallow_features;
  for (int rep = 0; rep < config_.recursion_depth; ++rep) {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      h = groups_[g]->forward(h);
      if (config_.sfa) h = sfa_blocks_[g]->forward(h, scales);
    }
  }
  return h;
}

torch::Tensor SfrNetImpl::global_fuse(const torch::Tensor& deep, const torch::Tensor& shallow_features) {
  if (deep.sizes() != shallow_features.sizes()) {
    throw DimensionError("global_fuse: deep and shallow features differ in shape");
  }
  const auto context = torch::relu(gap_out->forward(global_average_pool(gap_in->forward(shallow_features))));
  return project->forward(lambda1 * deep + lambda0 * context.expand_as(deep));
}

torch::Tensor SfrNetImpl::forward(const torch::Tensor& f_high, const torch::Tensor& scales,
                                  const torch::Tensor& mask) {
  if (f_high.dim() != 4 || f_high.size(1) != kNumCoeffs) {
    throw DimensionError("SFR expects a [B, 64, rows, cols] spectrum");
  }
  const auto fs = shallow_extract(f_high);
  const auto fd = deep_features(fs, scales);
  const auto scale = spectral_scale.to(f_high.dtype()).reshape({1, kNumCoeffs, 1, 1});
  const auto recovered = global_fuse(fd, fs) * scale + f_high;
  return remask(recovered, mask);
}

}  // namespace freqsr
