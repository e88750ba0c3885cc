#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "freqsr/dct.hpp"

namespace freqsr {

using BlockSpectrum = std::array<double, kNumCoeffs>;

inline constexpr double kDegradationEps = 1e-8;

/// f_d[i] = |f_hr[i] - f_lr[i]| / max(|f_hr[i]|, eps).
BlockSpectrum spectral_degradation(const BlockSpectrum& f_hr, const BlockSpectrum& f_lr,
                                   double eps = kDegradationEps);

/// Length of the longest zigzag prefix whose degradation is strictly below
/// `threshold` (0 when f_d[0] >= T, 64 when every entry passes).
int find_vfp(std::span<const double> f_d, double threshold);

/// 1-based zigzag position of the first degraded frequency point, i.e.
/// find_vfp() + 1, saturating at 64. This is the quantity the corpus
/// histograms are built from.
int first_degraded_point(std::span<const double> f_d, double threshold);

struct VfpHistogram {
  double scale = 0.0;
  double threshold = 0.0;
  std::map<int, int64_t> counts;
  int64_t total_blocks = 0;
  /// HR blocks without any AC energy; their degradation ratio is 0/0 and they
  /// are not part of `counts`.
  int64_t skipped_blocks = 0;

  void add(int vfp);
  void merge(const VfpHistogram& other);
  double fraction_in(int lo, int hi) const;
  int min_vfp() const;
  int max_vfp() const;
  double mean_vfp() const;
};

struct AnalysisPair {
  torch::Tensor hr;  // [H, W] luminance
  torch::Tensor lr;  // [H, W] luminance, same shape
  double scale = 2.0;
};

/// Looks up the threshold for a scale; throws ConfigError when none is
/// configured within 1e-6.
double threshold_for(const std::map<double, double>& thresholds, double scale);

/// Walks every non-overlapping 8x8 block of every pair (cropping the
/// bottom/right remainder), computes f_d from the analytic DCT of both
/// images and accumulates one histogram per scale, ordered by scale.
std::vector<VfpHistogram> profile_corpus(std::span<const AnalysisPair> pairs,
                                         const std::map<double, double>& thresholds);

/// Writes `csv_path` with columns scale,threshold,vfp,count,fraction (one row
/// group per histogram) and a JSON mirror next to it with the .json extension.
void export_histograms(std::span<const VfpHistogram> histograms,
                       const std::filesystem::path& csv_path);

/// Parses a histogram CSV written by export_histograms.
std::vector<VfpHistogram> read_histogram_csv(const std::filesystem::path& csv_path);

}  // namespace freqsr
