#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace freqsr {

// Images are float64 tensors in [0, 1]: luminance planes are [H, W], colour
// images are [3, H, W] in RGB order.

/// Reads a PNG/BMP/JPEG file. Grayscale files come back as [1, H, W], colour
/// files as [3, H, W] (alpha dropped). Throws IoError with the path on failure.
torch::Tensor load_image(const std::filesystem::path& path);

/// Writes a [H, W], [1, H, W] or [3, H, W] image, rounding to 8 bits.
void save_image(const std::filesystem::path& path, const torch::Tensor& image);

/// BT.601 luma. Accepts uint8 or floating [3, H, W] / [1, H, W] input;
/// floating input is taken to be in [0, 1].
torch::Tensor to_luminance(const torch::Tensor& image);

/// Full-range BT.601 RGB <-> YCbCr, [3, H, W] both ways; chroma is centred on 0.5.
torch::Tensor rgb_to_ycbcr(const torch::Tensor& rgb);
torch::Tensor ycbcr_to_rgb(const torch::Tensor& ycbcr);

/// Separable Keys bicubic (a = -0.5) with half-sample symmetric borders. When
/// shrinking, the kernel is widened by the inverse scale (antialiasing), the
/// same convention as MATLAB imresize. Works on [H, W] or [C, H, W].
torch::Tensor bicubic_resize(const torch::Tensor& image, int64_t out_h, int64_t out_w);

/// Reflect-pads the bottom/right edges of a [..., H, W] tensor up to the next
/// multiple of `multiple`.
torch::Tensor pad_to_multiple(const torch::Tensor& image, int64_t multiple);

}  // namespace freqsr
