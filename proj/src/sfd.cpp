#include "freqsr/sfd.hpp"

#include <string>

#include "freqsr/errors.hpp"

namespace freqsr {
namespace {

torch::nn::Sequential make_mlp(int hidden, int outputs) {
  return torch::nn::Sequential(torch::nn::Linear(kStateSize, hidden), torch::nn::Tanh(),
                               torch::nn::Linear(hidden, hidden), torch::nn::Tanh(),
                               torch::nn::Linear(hidden, outputs));
}

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

}  // namespace

void SfdConfig::validate() const {
  if (min_action < 1 || max_action > kNumCoeffs || min_action > max_action) {
    throw ConfigError("SFD action space must satisfy 1 <= min_action <= max_action <= 64");
  }
  if (hidden <= 0) throw ConfigError("SFD hidden width must be positive");
  if (beta < 0.0) throw ConfigError("SFD entropy weight must be non-negative");
}

torch::Tensor build_state(const torch::Tensor& block_spectrum, double r) {
  if (block_spectrum.numel() != kNumCoeffs) {
    throw DimensionError("build_state: block spectrum must have 64 entries, got " +
                         std::to_string(block_spectrum.numel()));
  }
  const auto spectrum = block_spectrum.reshape({kNumCoeffs}).detach();
  return torch::cat({spectrum / kStateSpectrumScale, torch::full({1}, r, spectrum.options())});
}

torch::Tensor build_states(const SpectralMap& f, const torch::Tensor& scales) {
  const auto coeffs = f.coeffs.detach();
  const int64_t b = coeffs.size(0);
  const int64_t rows = coeffs.size(2);
  const int64_t cols = coeffs.size(3);
  if (scales.numel() != b) throw DimensionError("build_states: need one scale per batch item");
  auto spectra = coeffs.permute({0, 2, 3, 1}).reshape({b * rows * cols, kNumCoeffs});
  auto r = scales.detach().to(coeffs.dtype()).reshape({b, 1}).expand({b, rows * cols}).reshape({-1, 1});
  return torch::cat({spectra / kStateSpectrumScale, r}, 1);
}

ActorCriticImpl::ActorCriticImpl(SfdConfig config) : config_(config) {
  config_.validate();
  actor_ = register_module("actor", make_mlp(config_.hidden, config_.num_actions()));
  critic_ = register_module("critic", make_mlp(config_.hidden, 1));
  torch::NoGradGuard no_grad;
  auto last = actor_[4]->as<torch::nn::Linear>();
  last->weight.mul_(0.01);
  last->bias.zero_();
}

PolicyOutput ActorCriticImpl::forward(const torch::Tensor& states) {
  if (states.dim() != 2 || states.size(1) != kStateSize) {
    throw DimensionError("actor-critic expects [N, 65] states");
  }
  return PolicyOutput{actor_->forward(states), critic_->forward(states).squeeze(1)};
}

torch::Tensor select_action_indices(const torch::Tensor& logits, ActionMode mode,
                                    std::mt19937_64& rng) {
  const auto probs = torch::softmax(logits.detach().to(torch::kFloat64), 1).contiguous();
  const int64_t n = probs.size(0);
  const int64_t a = probs.size(1);
  auto out = torch::empty({n}, torch::kInt64);
  auto out_acc = out.accessor<int64_t, 1>();
  const auto p = probs.accessor<double, 2>();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t choice = 0;
    if (mode == ActionMode::kGreedy) {
      for (int64_t k = 1; k < a; ++k) {
        if (p[i][k] > p[i][choice]) choice = k;
      }
    } else {
      const double u = unit(rng);
      double cumulative = 0.0;
      choice = a - 1;
      for (int64_t k = 0; k < a; ++k) {
        cumulative += p[i][k];
        if (u < cumulative) {
          choice = k;
          break;
        }
      }
    }
    out_acc[i] = choice;
  }
  return out;
}

int select_action(const PolicyOutput& out, ActionMode mode, uint64_t seed, int min_action) {
  std::mt19937_64 rng(seed);
  const auto logits = out.logits.dim() == 1 ? out.logits.unsqueeze(0) : out.logits;
  return static_cast<int>(select_action_indices(logits, mode, rng)[0].item<int64_t>()) + min_action;
}

torch::Tensor make_mask(int a, int max_action, torch::Dtype dtype) {
  if (a < 1 || a > max_action) {
    throw RangeError("make_mask: action " + std::to_string(a) + " outside [1, " +
                     std::to_string(max_action) + "]");
  }
  auto mask = torch::zeros({kNumCoeffs}, dtype);
  mask.slice(0, 0, a).fill_(1.0);
  return mask;
}

torch::Tensor mask_grid(const torch::Tensor& vfp, int64_t batch, int64_t rows, int64_t cols,
                        torch::Dtype dtype) {
  if (vfp.numel() != batch * rows * cols) {
    throw DimensionError("mask_grid: expected one action per block");
  }
  const auto positions = torch::arange(kNumCoeffs, torch::kInt64).reshape({1, kNumCoeffs});
  const auto keep = positions.lt(vfp.reshape({-1, 1}).to(torch::kInt64));
  return keep.to(dtype).reshape({batch, rows, cols, kNumCoeffs}).permute({0, 3, 1, 2}).contiguous();
}

Division divide(const SpectralMap& f, const torch::Tensor& mask) {
  if (mask.sizes() != f.coeffs.sizes()) {
    throw DimensionError("divide: mask grid shape does not match the spectral map");
  }
  const auto m = mask.to(f.coeffs.dtype());
  return Division{SpectralMap{f.coeffs * m, f.height, f.width},
                  SpectralMap{f.coeffs * (1.0 - m), f.height, f.width}};
}

double reward(const torch::Tensor& sr, const torch::Tensor& hr) {
  if (sr.sizes() != hr.sizes()) throw DimensionError("reward: patch shapes differ");
  return 1.0 - (sr.detach().to(torch::kFloat64) - hr.detach().to(torch::kFloat64)).pow(2).mean().item<double>();
}

torch::Tensor patch_rewards(const torch::Tensor& sr, const torch::Tensor& hr) {
  if (sr.sizes() != hr.sizes()) throw DimensionError("patch_rewards: batch shapes differ");
  const auto diff = (sr.detach() - hr.detach()).pow(2);
  return 1.0 - diff.reshape({diff.size(0), -1}).mean(1);
}

torch::Tensor policy_entropy(const torch::Tensor& logits) {
  const auto log_p = torch::log_softmax(logits, 1);
  return -(log_p.exp() * log_p).sum(1).mean();
}

torch::Tensor policy_loss(const torch::Tensor& logits, const torch::Tensor& action_indices,
                          const torch::Tensor& advantages, double beta) {
  require_finite(logits, "policy logits");
  require_finite(advantages, "advantages");
  if (action_indices.numel() != logits.size(0) || advantages.numel() != logits.size(0)) {
    throw DimensionError("policy_loss: logits, actions and advantages must be batch-aligned");
  }
  const auto log_p = torch::log_softmax(logits, 1);
  const auto chosen = log_p.gather(1, action_indices.to(torch::kInt64).reshape({-1, 1})).squeeze(1);
  const auto pg = -(advantages.detach().to(logits.dtype()) * chosen).mean();
  return pg - beta * policy_entropy(logits);
}

torch::Tensor value_loss(const torch::Tensor& values, const torch::Tensor& rewards) {
  require_finite(values, "critic values");
  require_finite(rewards, "rewards");
  if (values.numel() != rewards.numel()) throw DimensionError("value_loss: batch mismatch");
  return 0.5 * (rewards.detach().to(values.dtype()).reshape({-1}) - values.reshape({-1})).pow(2).mean();
}

torch::Tensor sfd_loss(const torch::Tensor& policy, const torch::Tensor& value) {
  return 0.5 * (policy + value);
}

}  // namespace freqsr
