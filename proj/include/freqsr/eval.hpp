#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "freqsr/model.hpp"

namespace freqsr {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for images in [0, 1], capped at 100 dB.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2. Inputs are [H, W] or [1, H, W] planes.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Upsamples `image` ([H, W] luminance or [1|3, H, W]) to out_h x out_w with
/// bicubic, runs the frozen pipeline with greedy actions on the luminance
/// (reflect-padded to multiples of 8), and recombines the bicubic chroma.
/// The result has the input's layout and lies in [0, 1].
torch::Tensor reconstruct(FreqSR& model, const torch::Tensor& image, int64_t out_h, int64_t out_w,
                          double r);

/// reconstruct() to round(H r) x round(W r). Throws RangeError outside [1.1, 4].
torch::Tensor super_resolve(FreqSR& model, const torch::Tensor& image, double r);
torch::Tensor super_resolve(const torch::Tensor& image, double r,
                            const std::filesystem::path& checkpoint);

struct EvalRow {
  std::string image;
  double scale = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_bicubic = 0.0;
  double ssim_bicubic = 0.0;
};

struct EvalSummary {
  int64_t count = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_bicubic = 0.0;
  double ssim_bicubic = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::string model_id;
  std::vector<EvalRow> rows;

  /// Per-scale means of the rows.
  std::map<double, EvalSummary> summary() const;
};

/// For every image and scale: luminance HR, bicubic downscale, reconstruct to
/// HR size, and score both the model and the plain bicubic upsample against
/// HR on the full frame. Throws IoError on an empty or missing dataset.
EvalReport run_eval(const std::filesystem::path& dataset_dir, const std::vector<double>& scales,
                    FreqSR& model, const std::string& model_id = "");

/// CSV columns image,scale,psnr,ssim,psnr_bicubic,ssim_bicubic.
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_eval_csv(const std::filesystem::path& path);

std::string format_summary(const EvalReport& report);

/// Bar charts of the VFP distribution, one panel per scale, from a histogram CSV.
void plot_histograms(const std::filesystem::path& csv, const std::filesystem::path& png);

/// Loss curves (l_sfr, l_dct, l_sfd, l_total on a log axis) from a training log.
void plot_training_log(const std::filesystem::path& csv, const std::filesystem::path& png);

}  // namespace freqsr
