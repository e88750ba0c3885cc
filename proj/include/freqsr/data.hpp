#pragma once

#include <torch/torch.h>

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace freqsr {

inline constexpr double kMinScale = 1.1;
inline constexpr double kMaxScale = 4.0;
inline constexpr int64_t kPatchSize = 96;

/// HR luminance patch, its bicubic down-up degraded counterpart, and the scale.
struct TrainingSample {
  torch::Tensor hr;  // [P, P] float64
  torch::Tensor lr;  // [P, P] float64
  double scale = 2.0;
};

/// The 30 training scales {1.1, 1.2, ..., 4.0}.
const std::vector<double>& scale_grid();

/// Throws RangeError unless r is within [1.1, 4.0] (1e-9 slack).
void check_scale(double r);

/// floor(n / r) with a floor of 8 pixels.
int64_t downscaled_size(int64_t n, double r);

/// Bicubic resize of the [H, W] luminance plane to downscaled_size() on both
/// axes, then back up to H x W, clamped to [0, 1].
torch::Tensor degrade(const torch::Tensor& hr, double r);

/// Top-left corners of a deterministic crop grid (row-major).
std::vector<std::pair<int64_t, int64_t>> crop_grid(int64_t height, int64_t width, int64_t size,
                                                   int64_t stride);

/// size x size crops of a [H, W] plane on crop_grid(). Images smaller than the
/// patch produce no crops and a logged warning.
std::vector<torch::Tensor> crop_patches(const torch::Tensor& image, int64_t size = kPatchSize,
                                        int64_t stride = kPatchSize);

/// Lists PNG/BMP/JPEG files in a directory, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct ManifestEntry {
  std::string path;  // relative to the manifest's data directory
  int64_t top = 0;
  int64_t left = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct ImageRecord {
  int64_t height = 0;
  int64_t width = 0;
  std::string crc32;  // hex digest of the file bytes

  bool operator==(const ImageRecord&) const = default;
};

/// Patch-level index of a dataset directory.
struct DatasetManifest {
  std::string data_dir;
  std::string split = "train";
  int64_t patch_size = kPatchSize;
  std::vector<ManifestEntry> entries;
  std::map<std::string, ImageRecord> images;

  bool operator==(const DatasetManifest&) const = default;
};

/// Scans `data_dir`, tiling every image with patch_size crops at `stride`.
DatasetManifest build_manifest(const std::filesystem::path& data_dir, const std::string& split,
                               int64_t patch_size = kPatchSize, int64_t stride = kPatchSize);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Reads a manifest and verifies every referenced file exists, matches its
/// checksum, and that every crop lies inside its image.
DatasetManifest load_manifest(const std::filesystem::path& path);

std::string file_crc32(const std::filesystem::path& path);

/// Draws seeded batches of TrainingSamples from a manifest. Each sample gets
/// an independent scale drawn uniformly from scale_grid().
class PatchSampler {
 public:
  PatchSampler(DatasetManifest manifest, uint64_t seed);

  std::vector<TrainingSample> sample_batch(int64_t batch_size);

  /// Overrides the scale draw (used for fixed-scale evaluation sets).
  void set_fixed_scale(std::optional<double> r) { fixed_scale_ = r; }

  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::map<std::string, torch::Tensor> luminance_;
  std::mt19937_64 rng_;
  std::optional<double> fixed_scale_;
};

/// Produces batches on a worker thread into a bounded queue. The sampler is
/// only touched by the worker, so batch order is the same as calling
/// sample_batch() in a loop.
class BatchPrefetcher {
 public:
  BatchPrefetcher(PatchSampler& sampler, int64_t batch_size, std::size_t capacity = 2);
  ~BatchPrefetcher();

  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

  std::vector<TrainingSample> next();

 private:
  void run(std::stop_token stop);

  PatchSampler& sampler_;
  int64_t batch_size_;
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable_any not_full_;
  std::condition_variable_any not_empty_;
  std::deque<std::vector<TrainingSample>> queue_;
  std::exception_ptr error_;
  std::jthread worker_;
};

/// Stacks a batch into [B, 1, P, P] tensors plus a [B] scale vector.
struct BatchTensors {
  torch::Tensor lr;
  torch::Tensor hr;
  torch::Tensor scales;
};
BatchTensors stack_batch(const std::vector<TrainingSample>& batch, torch::Dtype dtype);

}  // namespace freqsr
