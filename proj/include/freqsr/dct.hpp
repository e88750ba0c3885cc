#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <utility>

namespace freqsr {

inline constexpr int kBlockSize = 8;
inline constexpr int kNumCoeffs = kBlockSize * kBlockSize;

/// Position of DCT frequency (u = row, v = column) in the JPEG zigzag scan.
/// Throws RangeError when either frequency is outside [0, 7].
int zigzag_index(int u, int v);

/// Inverse of zigzag_index: (u, v) for scan position k in [0, 63].
std::pair<int, int> zigzag_inverse(int k);

/// 64 zigzag-ordered 8x8 kernels. `filters` has shape [64, 1, 8, 8] so it can
/// be handed to conv2d / conv_transpose2d directly.
struct BasisSet {
  torch::Tensor filters;
  bool trainable = false;
};

/// Orthonormal DCT-II basis, filters[k] = w_{u,v} with (u, v) = zigzag_inverse(k).
BasisSet make_dct_basis(torch::Dtype dtype = torch::kFloat64);

/// Block spectrum of a batch of images: coeffs is [B, 64, H/8, W/8] with the
/// channel axis in zigzag order (channel 0 is DC).
struct SpectralMap {
  torch::Tensor coeffs;
  int64_t height = 0;
  int64_t width = 0;

  int64_t batch() const { return coeffs.size(0); }
  int64_t grid_rows() const { return coeffs.size(2); }
  int64_t grid_cols() const { return coeffs.size(3); }
};

/// Non-overlapping (stride 8) convolution of the image with every filter.
/// Accepts [H, W], [B, H, W] or [B, 1, H, W]; H and W must be multiples of 8.
/// Differentiable with respect to both the image and the filters.
SpectralMap forward_cdct(const torch::Tensor& image, const torch::Tensor& filters);
SpectralMap forward_cdct(const torch::Tensor& image, const BasisSet& basis);

/// Adjoint of forward_cdct (stride-8 transposed convolution). Returns
/// [B, 1, H, W]. For the orthonormal basis this is the exact inverse.
torch::Tensor inverse_cdct(const SpectralMap& spec, const torch::Tensor& filters);
torch::Tensor inverse_cdct(const SpectralMap& spec, const BasisSet& basis);

/// gram[i][j] = vec(w_i) . vec(w_j), shape [64, 64].
torch::Tensor basis_gram(const torch::Tensor& filters);

/// Unbiased (N^2 - 1 = 63 denominator) variance of each 8x8 filter. Accepts a
/// single [8, 8] filter (returns a scalar) or a [64, 1, 8, 8] stack (returns [64]).
torch::Tensor basis_variance(const torch::Tensor& filters);

}  // namespace freqsr
