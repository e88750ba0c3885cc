#include "freqsr/dct.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "freqsr/errors.hpp"

namespace freqsr {
namespace {

// JPEG zigzag scan: kZigzag[u * 8 + v] is the scan position of frequency (u, v).
constexpr std::array<int, kNumCoeffs> kZigzag = {
    0,  1,  5,  6,  14, 15, 27, 28,  //
    2,  4,  7,  13, 16, 26, 29, 42,  //
    3,  8,  12, 17, 25, 30, 41, 43,  //
    9,  11, 18, 24, 31, 40, 44, 53,  //
    10, 19, 23, 32, 39, 45, 52, 54,  //
    20, 22, 33, 38, 46, 51, 55, 60,  //
    21, 34, 37, 47, 50, 56, 59, 61,  //
    35, 36, 48, 49, 57, 58, 62, 63,
};

constexpr std::array<int, kNumCoeffs> invert_zigzag() {
  std::array<int, kNumCoeffs> inv{};
  for (int i = 0; i < kNumCoeffs; ++i) inv[kZigzag[i]] = i;
  return inv;
}

constexpr std::array<int, kNumCoeffs> kZigzagInverse = invert_zigzag();

torch::Tensor as_batched_image(const torch::Tensor& image) {
  switch (image.dim()) {
    case 2:
      return image.unsqueeze(0).unsqueeze(0);
    case 3:
      return image.unsqueeze(1);
    case 4:
      if (image.size(1) != 1) {
        throw DimensionError("forward_cdct: expected a single channel, got " +
                             std::to_string(image.size(1)));
      }
      return image;
    default:
      throw DimensionError("forward_cdct: image must be 2-D, 3-D or 4-D");
  }
}

void check_filters(const torch::Tensor& filters) {
  if (filters.dim() != 4 || filters.size(0) != kNumCoeffs || filters.size(1) != 1 ||
      filters.size(2) != kBlockSize || filters.size(3) != kBlockSize) {
    throw DimensionError("CDCT filters must have shape [64, 1, 8, 8]");
  }
}

}  // namespace

int zigzag_index(int u, int v) {
  if (u < 0 || u >= kBlockSize || v < 0 || v >= kBlockSize) {
    throw RangeError("zigzag_index: frequency (" + std::to_string(u) + ", " +
                     std::to_string(v) + ") outside [0, 7]");
  }
  return kZigzag[u * kBlockSize + v];
}

std::pair<int, int> zigzag_inverse(int k) {
  if (k < 0 || k >= kNumCoeffs) {
    throw RangeError("zigzag_inverse: index " + std::to_string(k) + " outside [0, 63]");
  }
  const int flat = kZigzagInverse[k];
  return {flat / kBlockSize, flat % kBlockSize};
}

BasisSet make_dct_basis(torch::Dtype dtype) {
  auto filters = torch::empty({kNumCoeffs, 1, kBlockSize, kBlockSize}, torch::kFloat64);
  auto acc = filters.accessor<double, 4>();
  const double n = kBlockSize;
  for (int k = 0; k < kNumCoeffs; ++k) {
    const auto [u, v] = zigzag_inverse(k);
    // Orthonormal scaling: sqrt(1/N) for the zero frequency, sqrt(2/N) otherwise.
    const double cu = std::sqrt((u == 0 ? 1.0 : 2.0) / n);
    const double cv = std::sqrt((v == 0 ? 1.0 : 2.0) / n);
    for (int x = 0; x < kBlockSize; ++x) {
      for (int y = 0; y < kBlockSize; ++y) {
        acc[k][0][x][y] = cu * cv * std::cos(std::numbers::pi / n * (x + 0.5) * u) *
                          std::cos(std::numbers::pi / n * (y + 0.5) * v);
      }
    }
  }
  return BasisSet{filters.to(dtype), false};
}

SpectralMap forward_cdct(const torch::Tensor& image, const torch::Tensor& filters) {
  check_filters(filters);
  const auto x = as_batched_image(image);
  const int64_t h = x.size(2);
  const int64_t w = x.size(3);
  if (h % kBlockSize != 0 || w % kBlockSize != 0) {
    throw DimensionError("forward_cdct: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by 8");
  }
  auto coeffs = torch::conv2d(x, filters.to(x.dtype()), {}, kBlockSize);
  return SpectralMap{coeffs, h, w};
}

SpectralMap forward_cdct(const torch::Tensor& image, const BasisSet& basis) {
  return forward_cdct(image, basis.filters);
}

torch::Tensor inverse_cdct(const SpectralMap& spec, const torch::Tensor& filters) {
  check_filters(filters);
  if (spec.coeffs.dim() != 4 || spec.coeffs.size(1) != kNumCoeffs) {
    throw DimensionError("inverse_cdct: spectral map must be [B, 64, Hb, Wb]");
  }
  if (spec.grid_rows() * kBlockSize != spec.height || spec.grid_cols() * kBlockSize != spec.width) {
    throw DimensionError("inverse_cdct: block grid does not match the source shape");
  }
  return torch::conv_transpose2d(spec.coeffs, filters.to(spec.coeffs.dtype()), {}, kBlockSize);
}

torch::Tensor inverse_cdct(const SpectralMap& spec, const BasisSet& basis) {
  return inverse_cdct(spec, basis.filters);
}

torch::Tensor basis_gram(const torch::Tensor& filters) {
  check_filters(filters);
  const auto flat = filters.reshape({kNumCoeffs, kNumCoeffs});
  return torch::matmul(flat, flat.t());
}

torch::Tensor basis_variance(const torch::Tensor& filters) {
  if (filters.dim() == 2) {
    if (filters.size(0) != kBlockSize || filters.size(1) != kBlockSize) {
      throw DimensionError("basis_variance: expected an 8x8 filter");
    }
    return filters.reshape({-1}).var(/*unbiased=*/true);
  }
  check_filters(filters);
  return filters.reshape({kNumCoeffs, -1}).var(/*dim=*/1, /*unbiased=*/true);
}

}  // namespace freqsr
