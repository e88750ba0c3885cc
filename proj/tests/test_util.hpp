#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline std::filesystem::path data_dir() { return FREQSR_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("freqsr_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct GradCheck {
  double worst_rel = 0.0;
  int checked = 0;
  int nonzero = 0;
};

/// Central differences on `count` randomly chosen scalar entries spread over
/// `params`, compared with the analytic gradient of `loss`. The relative error
/// uses max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheck check_gradients(const std::vector<torch::Tensor>& params,
                                 const std::function<torch::Tensor()>& loss, int count, uint64_t seed,
                                 double eps = 1e-5, double floor = 1e-6) {
  for (auto p : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss().backward();
  std::vector<torch::Tensor> grads;
  int64_t total = 0;
  for (const auto& p : params) {
    grads.push_back(p.grad().defined() ? p.grad().clone() : torch::zeros_like(p));
    total += p.numel();
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  GradCheck out;
  for (int n = 0; n < count; ++n) {
    int64_t flat = pick(rng);
    std::size_t which = 0;
    while (flat >= params[which].numel()) flat -= params[which].numel(), ++which;
    auto view = params[which].detach().view({-1});
    const double original = view[flat].item<double>();
    double plus = 0.0;
    double minus = 0.0;
    {
      torch::NoGradGuard guard;
      view[flat] = original + eps;
      plus = loss().item<double>();
      view[flat] = original - eps;
      minus = loss().item<double>();
      view[flat] = original;
    }
    const double numeric = (plus - minus) / (2.0 * eps);
    const double analytic = grads[which].view({-1})[flat].item<double>();
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    out.worst_rel = std::max(out.worst_rel, std::abs(analytic - numeric) / denom);
    ++out.checked;
    if (std::abs(analytic) > floor) ++out.nonzero;
  }
  return out;
}

}  // namespace testutil
