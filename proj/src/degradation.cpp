#include "freqsr/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "freqsr/errors.hpp"

namespace freqsr {
namespace fs = std::filesystem;

namespace {

// An HR block whose AC coefficients are all below this is treated as flat.
constexpr double kFlatBlockTolerance = 1e-6;

}  // namespace

BlockSpectrum spectral_degradation(const BlockSpectrum& f_hr, const BlockSpectrum& f_lr,
                                   double eps) {
  BlockSpectrum f_d{};
  for (int i = 0; i < kNumCoeffs; ++i) {
    f_d[i] = std::abs(f_hr[i] - f_lr[i]) / std::max(std::abs(f_hr[i]), eps);
  }
  return f_d;
}

int find_vfp(std::span<const double> f_d, double threshold) {
  if (!(threshold > 0.0)) throw RangeError("find_vfp: threshold must be positive");
  int count = 0;
  for (const double d : f_d) {
    if (!(d < threshold)) break;
    ++count;
  }
  return count;
}

int first_degraded_point(std::span<const double> f_d, double threshold) {
  return std::min(find_vfp(f_d, threshold) + 1, kNumCoeffs);
}

void VfpHistogram::add(int vfp) {
  if (vfp < 0 || vfp > kNumCoeffs) throw RangeError("VFP outside [0, 64]");
  ++counts[vfp];
  ++total_blocks;
}

void VfpHistogram::merge(const VfpHistogram& other) {
  for (const auto& [vfp, n] : other.counts) counts[vfp] += n;
  total_blocks += other.total_blocks;
  skipped_blocks += other.skipped_blocks;
}

double VfpHistogram::fraction_in(int lo, int hi) const {
  if (total_blocks == 0) return 0.0;
  int64_t n = 0;
  for (const auto& [vfp, c] : counts) {
    if (vfp >= lo && vfp <= hi) n += c;
  }
  return static_cast<double>(n) / static_cast<double>(total_blocks);
}

int VfpHistogram::min_vfp() const { return counts.empty() ? 0 : counts.begin()->first; }

int VfpHistogram::max_vfp() const { return counts.empty() ? 0 : counts.rbegin()->first; }

double VfpHistogram::mean_vfp() const {
  if (total_blocks == 0) return 0.0;
  double sum = 0.0;
  for (const auto& [vfp, c] : counts) sum += static_cast<double>(vfp) * static_cast<double>(c);
  return sum / static_cast<double>(total_blocks);
}

double threshold_for(const std::map<double, double>& thresholds, double scale) {
  for (const auto& [s, t] : thresholds) {
    if (std::abs(s - scale) < 1e-6) return t;
  }
  std::ostringstream msg;
  msg << "no VFP threshold configured for scale x" << scale;
  throw ConfigError(msg.str());
}

std::vector<VfpHistogram> profile_corpus(std::span<const AnalysisPair> pairs,
                                         const std::map<double, double>& thresholds) {
  const auto basis = make_dct_basis(torch::kFloat64);
  std::map<double, VfpHistogram> by_scale;
  for (const auto& pair : pairs) {
    if (pair.hr.sizes() != pair.lr.sizes() || pair.hr.dim() != 2) {
      throw DimensionError("profile_corpus: HR and LR planes must share one [H, W] shape");
    }
    const double threshold = threshold_for(thresholds, pair.scale);
    auto& hist = by_scale[pair.scale];
    hist.scale = pair.scale;
    hist.threshold = threshold;

    const int64_t h = pair.hr.size(0) / kBlockSize * kBlockSize;
    const int64_t w = pair.hr.size(1) / kBlockSize * kBlockSize;
    const auto crop = [&](const torch::Tensor& x) {
      return x.to(torch::kFloat64).slice(0, 0, h).slice(1, 0, w);
    };
    // [Hb * Wb, 64] block spectra, row-major over the grid.
    const auto f_hr = forward_cdct(crop(pair.hr), basis).coeffs[0].reshape({kNumCoeffs, -1}).t().contiguous();
    const auto f_lr = forward_cdct(crop(pair.lr), basis).coeffs[0].reshape({kNumCoeffs, -1}).t().contiguous();
    const auto hr_acc = f_hr.accessor<double, 2>();
    const auto lr_acc = f_lr.accessor<double, 2>();
    for (int64_t b = 0; b < f_hr.size(0); ++b) {
      BlockSpectrum hr_block{};
      BlockSpectrum lr_block{};
      double ac_peak = 0.0;
      for (int k = 0; k < kNumCoeffs; ++k) {
        hr_block[k] = hr_acc[b][k];
        lr_block[k] = lr_acc[b][k];
        if (k > 0) ac_peak = std::max(ac_peak, std::abs(hr_block[k]));
      }
      if (ac_peak < kFlatBlockTolerance) {
        ++hist.skipped_blocks;
        continue;
      }
      const auto f_d = spectral_degradation(hr_block, lr_block);
      hist.add(first_degraded_point(f_d, threshold));
    }
  }
  std::vector<VfpHistogram> out;
  for (auto& [scale, hist] : by_scale) out.push_back(std::move(hist));
  return out;
}

void export_histograms(std::span<const VfpHistogram> histograms, const fs::path& csv_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write histogram CSV '" + csv_path.string() + "'");
  csv << "scale,threshold,vfp,count,fraction\n";
  nlohmann::json mirror = nlohmann::json::array();
  for (const auto& h : histograms) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [vfp, n] : h.counts) {
      const double fraction =
          h.total_blocks > 0 ? static_cast<double>(n) / static_cast<double>(h.total_blocks) : 0.0;
      csv << std::setprecision(6) << h.scale << ',' << h.threshold << ',' << vfp << ',' << n << ','
          << std::setprecision(12) << fraction << '\n';
      counts[std::to_string(vfp)] = n;
    }
    mirror.push_back({{"scale", h.scale},
                      {"threshold", h.threshold},
                      {"total_blocks", h.total_blocks},
                      {"skipped_blocks", h.skipped_blocks},
                      {"counts", counts}});
  }
  if (!csv) throw IoError("failed writing '" + csv_path.string() + "'");
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write histogram JSON '" + json_path.string() + "'");
  js << mirror.dump(2) << '\n';
}

std::vector<VfpHistogram> read_histogram_csv(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read histogram CSV '" + csv_path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "scale,threshold,vfp,count,fraction") {
    throw FormatError("'" + csv_path.string() + "' is not a histogram CSV");
  }
  std::map<double, VfpHistogram> by_scale;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double scale = 0.0;
    double threshold = 0.0;
    int vfp = 0;
    int64_t count = 0;
    char comma = 0;
    if (!(row >> scale >> comma >> threshold >> comma >> vfp >> comma >> count)) {
      throw FormatError("malformed row in '" + csv_path.string() + "': " + line);
    }
    auto& h = by_scale[scale];
    h.scale = scale;
    h.threshold = threshold;
    h.counts[vfp] += count;
    h.total_blocks += count;
  }
  std::vector<VfpHistogram> out;
  for (auto& [s, h] : by_scale) out.push_back(std::move(h));
  return out;
}

}  // namespace freqsr
