#include "freqsr/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "freqsr/errors.hpp"

namespace freqsr {
namespace {

double keys_cubic(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

int64_t mirror_index(int64_t j, int64_t n) {
  // Half-sample symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
  const int64_t period = 2 * n;
  int64_t m = j % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

// Dense [out, in] interpolation matrix for one axis.
torch::Tensor resize_weights(int64_t in_len, int64_t out_len) {
  auto weights = torch::zeros({out_len, in_len}, torch::kFloat64);
  auto acc = weights.accessor<double, 2>();
  const double scale = static_cast<double>(out_len) / static_cast<double>(in_len);
  const bool shrink = scale < 1.0;
  const double kernel_width = shrink ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(kernel_width)) + 2;
  std::vector<double> w(taps);
  for (int64_t i = 0; i < out_len; ++i) {
    const double center = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const auto left = static_cast<int64_t>(std::floor(center - kernel_width / 2.0));
    double total = 0.0;
    for (int p = 0; p < taps; ++p) {
      const double d = center - static_cast<double>(left + p);
      w[p] = shrink ? scale * keys_cubic(scale * d) : keys_cubic(d);
      total += w[p];
    }
    for (int p = 0; p < taps; ++p) {
      acc[i][mirror_index(left + p, in_len)] += w[p] / total;
    }
  }
  return weights;
}

}  // namespace

torch::Tensor load_image(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) {
    throw IoError("cannot read image '" + path.string() + "'");
  }
  double max_value = 255.0;
  if (raw.depth() == CV_16U) {
    max_value = 65535.0;
  } else if (raw.depth() != CV_8U) {
    throw FormatError("unsupported pixel depth in '" + path.string() + "'");
  }
  const int channels = raw.channels();
  if (channels != 1 && channels != 3 && channels != 4) {
    throw FormatError("unsupported channel count " + std::to_string(channels) + " in '" +
                      path.string() + "'");
  }
  cv::Mat dbl;
  raw.convertTo(dbl, CV_MAKETYPE(CV_64F, channels), 1.0 / max_value);
  const int64_t h = dbl.rows;
  const int64_t w = dbl.cols;
  auto hwc = torch::from_blob(dbl.data, {h, w, channels}, torch::kFloat64).clone();
  if (channels == 1) return hwc.permute({2, 0, 1}).contiguous();
  // OpenCV stores BGR(A).
  auto rgb = torch::stack({hwc.select(2, 2), hwc.select(2, 1), hwc.select(2, 0)}, 0);
  return rgb.contiguous();
}

void save_image(const std::filesystem::path& path, const torch::Tensor& image) {
  torch::Tensor chw = image.dim() == 2 ? image.unsqueeze(0) : image;
  if (chw.dim() != 3 || (chw.size(0) != 1 && chw.size(0) != 3)) {
    throw DimensionError("save_image: expected [H, W], [1, H, W] or [3, H, W]");
  }
  if (chw.size(0) == 3) {
    chw = torch::stack({chw[2], chw[1], chw[0]}, 0);  // to BGR
  }
  auto bytes = (chw.to(torch::kFloat64).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  const int channels = static_cast<int>(bytes.size(2));
  cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)),
              CV_MAKETYPE(CV_8U, channels), bytes.data_ptr<uint8_t>());
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), mat)) {
    throw IoError("cannot write image '" + path.string() + "'");
  }
}

torch::Tensor to_luminance(const torch::Tensor& image) {
  if (image.dim() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw FormatError("to_luminance: unsupported channel layout (need [1|3, H, W])");
  }
  auto x = image.to(torch::kFloat64);
  if (image.scalar_type() == torch::kUInt8) x = x / 255.0;
  if (image.size(0) == 1) return x[0].clone();
  return 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2];
}

torch::Tensor rgb_to_ycbcr(const torch::Tensor& rgb) {
  if (rgb.dim() != 3 || rgb.size(0) != 3) {
    throw FormatError("rgb_to_ycbcr: expected [3, H, W]");
  }
  const auto r = rgb[0];
  const auto g = rgb[1];
  const auto b = rgb[2];
  auto y = 0.299 * r + 0.587 * g + 0.114 * b;
  auto cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b;
  auto cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  return torch::stack({y, cb, cr}, 0);
}

torch::Tensor ycbcr_to_rgb(const torch::Tensor& ycbcr) {
  if (ycbcr.dim() != 3 || ycbcr.size(0) != 3) {
    throw FormatError("ycbcr_to_rgb: expected [3, H, W]");
  }
  const auto y = ycbcr[0];
  const auto cb = ycbcr[1] - 0.5;
  const auto cr = ycbcr[2] - 0.5;
  auto r = y + 1.402 * cr;
  auto g = y - 0.344136 * cb - 0.714136 * cr;
  auto b = y + 1.772 * cb;
  return torch::stack({r, g, b}, 0);
}

torch::Tensor bicubic_resize(const torch::Tensor& image, int64_t out_h, int64_t out_w) {
  if (image.dim() != 2 && image.dim() != 3) {
    throw DimensionError("bicubic_resize: expected [H, W] or [C, H, W]");
  }
  if (out_h <= 0 || out_w <= 0) {
    throw DimensionError("bicubic_resize: output size must be positive");
  }
  const int64_t in_h = image.size(-2);
  const int64_t in_w = image.size(-1);
  auto x = image.to(torch::kFloat64);
  if (in_h != out_h) {
    x = torch::matmul(resize_weights(in_h, out_h), x);
  }
  if (in_w != out_w) {
    x = torch::matmul(x, resize_weights(in_w, out_w).t());
  }
  return x.contiguous();
}

torch::Tensor pad_to_multiple(const torch::Tensor& image, int64_t multiple) {
  const int64_t h = image.size(-2);
  const int64_t w = image.size(-1);
  const int64_t pad_h = (multiple - h % multiple) % multiple;
  const int64_t pad_w = (multiple - w % multiple) % multiple;
  if (pad_h == 0 && pad_w == 0) return image;
  namespace F = torch::nn::functional;
  const bool can_reflect = pad_h < h && pad_w < w;
  auto batched = image;
  while (batched.dim() < 4) batched = batched.unsqueeze(0);
  auto opts = F::PadFuncOptions({0, pad_w, 0, pad_h});
  if (can_reflect) {
    opts.mode(torch::kReflect);
  } else {
    opts.mode(torch::kReplicate);
  }
  auto padded = F::pad(batched, opts);
  while (padded.dim() > image.dim()) padded = padded.squeeze(0);
  return padded;
}

}  // namespace freqsr
