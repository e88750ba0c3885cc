#include "freqsr/data.hpp"

#include <c10/util/Logging.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "freqsr/errors.hpp"
#include "freqsr/image.hpp"

namespace freqsr {
namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<double>& scale_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    for (int k = 0; k < 30; ++k) g.push_back((11 + k) / 10.0);
    return g;
  }();
  return grid;
}

void check_scale(double r) {
  if (!(r >= kMinScale - 1e-9 && r <= kMaxScale + 1e-9)) {
    throw RangeError("scale factor " + std::to_string(r) + " outside [1.1, 4.0]");
  }
}

int64_t downscaled_size(int64_t n, double r) {
  // The epsilon keeps 96 / 1.2 at 80 rather than 79.
  const auto m = static_cast<int64_t>(std::floor(static_cast<double>(n) / r + 1e-9));
  return std::max<int64_t>(m, 8);
}

torch::Tensor degrade(const torch::Tensor& hr, double r) {
  check_scale(r);
  if (hr.dim() != 2) throw DimensionError("degrade: expected an [H, W] plane");
  const int64_t h = hr.size(0);
  const int64_t w = hr.size(1);
  auto small = bicubic_resize(hr, downscaled_size(h, r), downscaled_size(w, r));
  return bicubic_resize(small, h, w).clamp(0.0, 1.0);
}

std::vector<std::pair<int64_t, int64_t>> crop_grid(int64_t height, int64_t width, int64_t size,
                                                   int64_t stride) {
  if (size <= 0 || stride <= 0) throw RangeError("crop size and stride must be positive");
  std::vector<std::pair<int64_t, int64_t>> corners;
  for (int64_t top = 0; top + size <= height; top += stride) {
    for (int64_t left = 0; left + size <= width; left += stride) {
      corners.emplace_back(top, left);
    }
  }
  return corners;
}

std::vector<torch::Tensor> crop_patches(const torch::Tensor& image, int64_t size, int64_t stride) {
  if (image.dim() != 2) throw DimensionError("crop_patches: expected an [H, W] plane");
  const int64_t h = image.size(0);
  const int64_t w = image.size(1);
  if (h < size || w < size) {
    LOG(WARNING) << "skipping " << h << "x" << w << " image: smaller than the " << size << "px patch";
    return {};
  }
  std::vector<torch::Tensor> patches;
  for (const auto& [top, left] : crop_grid(h, w, size, stride)) {
    patches.push_back(image.slice(0, top, top + size).slice(1, left, left + size).clone());
  }
  return patches;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory: '" + dir.string() + "'");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".bmp" || ext == ".jpg" || ext == ".jpeg") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string file_crc32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
                          static_cast<uInt>(bytes.size()));
  char hex[9];
  std::snprintf(hex, sizeof(hex), "%08lx", static_cast<unsigned long>(crc));
  return hex;
}

DatasetManifest build_manifest(const fs::path& data_dir, const std::string& split,
                               int64_t patch_size, int64_t stride) {
  DatasetManifest manifest;
  manifest.data_dir = fs::absolute(data_dir).lexically_normal().string();
  manifest.split = split;
  manifest.patch_size = patch_size;
  for (const auto& file : list_images(data_dir)) {
    const auto image = load_image(file);
    const int64_t h = image.size(1);
    const int64_t w = image.size(2);
    const auto name = file.filename().string();
    if (h < patch_size || w < patch_size) {
      LOG(WARNING) << "skipping '" << name << "': " << h << "x" << w << " is smaller than the " << patch_size
                   << "px patch";
      continue;
    }
    manifest.images[name] = ImageRecord{h, w, file_crc32(file)};
    for (const auto& [top, left] : crop_grid(h, w, patch_size, stride)) {
      manifest.entries.push_back(ManifestEntry{name, top, left});
    }
  }
  if (manifest.entries.empty()) {
    throw IoError("no usable images in '" + data_dir.string() + "'");
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json j;
  j["data_dir"] = manifest.data_dir;
  j["split"] = manifest.split;
  j["patch_size"] = manifest.patch_size;
  json images = json::object();
  for (const auto& [name, rec] : manifest.images) {
    images[name] = {{"height", rec.height}, {"width", rec.width}, {"crc32", rec.crc32}};
  }
  j["images"] = images;
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"path", e.path}, {"top", e.top}, {"left", e.left}});
  }
  j["entries"] = entries;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.data_dir = j.at("data_dir").get<std::string>();
    m.split = j.at("split").get<std::string>();
    m.patch_size = j.at("patch_size").get<int64_t>();
    for (const auto& [name, rec] : j.at("images").items()) {
      m.images[name] = ImageRecord{rec.at("height").get<int64_t>(), rec.at("width").get<int64_t>(),
                                   rec.at("crc32").get<std::string>()};
    }
    for (const auto& e : j.at("entries")) {
      m.entries.push_back(ManifestEntry{e.at("path").get<std::string>(), e.at("top").get<int64_t>(),
                                        e.at("left").get<int64_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }
  for (const auto& [name, rec] : m.images) {
    const auto file = fs::path(m.data_dir) / name;
    if (!fs::exists(file)) throw IoError("manifest references missing file '" + file.string() + "'");
    if (file_crc32(file) != rec.crc32) {
      throw FormatError("checksum mismatch for '" + file.string() + "'");
    }
  }
  for (const auto& e : m.entries) {
    const auto it = m.images.find(e.path);
    if (it == m.images.end()) throw FormatError("manifest entry for unknown image '" + e.path + "'");
    if (e.top < 0 || e.left < 0 || e.top + m.patch_size > it->second.height ||
        e.left + m.patch_size > it->second.width) {
      throw FormatError("manifest crop out of bounds in '" + e.path + "'");
    }
  }
  return m;
}

PatchSampler::PatchSampler(DatasetManifest manifest, uint64_t seed)
    : manifest_(std::move(manifest)), rng_(seed) {
  if (manifest_.entries.empty()) throw ConfigError("cannot sample from an empty manifest");
  for (const auto& [name, rec] : manifest_.images) {
    luminance_[name] = to_luminance(load_image(fs::path(manifest_.data_dir) / name));
  }
}

std::vector<TrainingSample> PatchSampler::sample_batch(int64_t batch_size) {
  const auto& grid = scale_grid();
  std::uniform_int_distribution<std::size_t> pick_entry(0, manifest_.entries.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_scale(0, grid.size() - 1);
  std::vector<TrainingSample> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  const int64_t p = manifest_.patch_size;
  for (int64_t i = 0; i < batch_size; ++i) {
    const auto& entry = manifest_.entries[pick_entry(rng_)];
    const double r = fixed_scale_ ? *fixed_scale_ : grid[pick_scale(rng_)];
    auto hr = luminance_.at(entry.path)
                  .slice(0, entry.top, entry.top + p)
                  .slice(1, entry.left, entry.left + p)
                  .clone();
    auto lr = degrade(hr, r);
    batch.push_back(TrainingSample{std::move(hr), std::move(lr), r});
  }
  return batch;
}

BatchPrefetcher::BatchPrefetcher(PatchSampler& sampler, int64_t batch_size, std::size_t capacity)
    : sampler_(sampler),
      batch_size_(batch_size),
      capacity_(std::max<std::size_t>(capacity, 1)),
      worker_([this](std::stop_token stop) { run(stop); }) {}

BatchPrefetcher::~BatchPrefetcher() {
  worker_.request_stop();
  not_full_.notify_all();
}

void BatchPrefetcher::run(std::stop_token stop) {
  while (!stop.stop_requested()) {
    std::vector<TrainingSample> batch;
    try {
      batch = sampler_.sample_batch(batch_size_);
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
      not_empty_.notify_all();
      return;
    }
    std::unique_lock lock(mutex_);
    if (!not_full_.wait(lock, stop, [this] { return queue_.size() < capacity_; })) return;
    queue_.push_back(std::move(batch));
    not_empty_.notify_one();
  }
}

std::vector<TrainingSample> BatchPrefetcher::next() {
  std::unique_lock lock(mutex_);
  not_empty_.wait(lock, [this] { return !queue_.empty() || error_; });
  if (queue_.empty() && error_) std::rethrow_exception(error_);
  auto batch = std::move(queue_.front());
  queue_.pop_front();
  not_full_.notify_one();
  return batch;
}

BatchTensors stack_batch(const std::vector<TrainingSample>& batch, torch::Dtype dtype) {
  if (batch.empty()) throw ConfigError("empty batch");
  std::vector<torch::Tensor> lr;
  std::vector<torch::Tensor> hr;
  std::vector<double> scales;
  for (const auto& s : batch) {
    lr.push_back(s.lr);
    hr.push_back(s.hr);
    scales.push_back(s.scale);
  }
  return BatchTensors{
      torch::stack(lr).unsqueeze(1).to(dtype),
      torch::stack(hr).unsqueeze(1).to(dtype),
      torch::tensor(scales, torch::kFloat64).to(dtype),
  };
}

}  // namespace freqsr
