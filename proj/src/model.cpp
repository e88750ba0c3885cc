#include "freqsr/model.hpp"

#include <string>

#include "freqsr/errors.hpp"

namespace freqsr {

void ModelConfig::validate() const {
  sfr.validate();
  sfd.validate();
  if (fixed_action != 0 && (fixed_action < 1 || fixed_action > kNumCoeffs)) {
    throw ConfigError("fixed_action must be 0 (learned) or in [1, 64], got " +
                      std::to_string(fixed_action));
  }
}

FreqSRImpl::FreqSRImpl(ModelConfig config) : config_(config) {
  config_.validate();
  const auto basis = make_dct_basis(torch::kFloat32).filters;
  cdct_filters = register_parameter("cdct_filters", basis.clone());
  reference_basis = register_buffer("reference_basis", basis.clone());
  if (config_.fixed_action == 0) policy = register_module("policy", ActorCritic(config_.sfd));
  sfr = register_module("sfr", SfrNet(config_.sfr));
}

ForwardResult FreqSRImpl::forward(const torch::Tensor& lr, const torch::Tensor& scales,
                                  ActionMode mode, std::mt19937_64& rng) {
  ForwardResult out;
  out.f_lr = forward_cdct(lr, cdct_filters);
  const int64_t b = out.f_lr.coeffs.size(0);
  const int64_t rows = out.f_lr.coeffs.size(2);
  const int64_t cols = out.f_lr.coeffs.size(3);
  if (scales.numel() != b) throw DimensionError("FreqSR: need one scale per batch item");
  const auto dtype = out.f_lr.coeffs.scalar_type();

  if (config_.fixed_action == 0) {
    out.states = build_states(out.f_lr, scales);
    out.policy = policy->forward(out.states);
    out.action_indices = select_action_indices(out.policy.logits, mode, rng);
    out.vfp = out.action_indices + config_.sfd.min_action;
  } else {
    out.vfp = torch::full({b * rows * cols}, config_.fixed_action, torch::kInt64);
    out.action_indices = out.vfp - 1;
  }
  out.mask = mask_grid(out.vfp, b, rows, cols, dtype);
  out.parts = divide(out.f_lr, out.mask);
  out.hf_recovered = sfr->forward(out.parts.high.coeffs, scales, out.mask);
  out.f_sr = SpectralMap{out.parts.low.coeffs + out.hf_recovered, out.f_lr.height, out.f_lr.width};
  out.sr = inverse_cdct(out.f_sr, cdct_filters);
  return out;
}

void FreqSRImpl::calibrate_spectral_scale(const torch::Tensor& lr) {
  torch::NoGradGuard no_grad;
  const auto coeffs = forward_cdct(lr, reference_basis).coeffs;
  const auto rms = coeffs.pow(2).mean({0, 2, 3}).sqrt().clamp_min(1e-3);
  sfr->spectral_scale.copy_(rms.to(sfr->spectral_scale.dtype()));
}

}  // namespace freqsr
