#pragma once

#include <span>

#include "quadkit/tensor.hpp"

namespace quadkit {

/// Unnormalized in-place complex DFT of length re.size(). Radix-2 when the
/// length is a power of two, exact direct summation otherwise. `inverse`
/// flips the exponent sign; scaling is left to the caller.
void dft_inplace(std::span<double> re, std::span<double> im, bool inverse);

bool is_power_of_two(std::size_t n);

/// X[k] = sum_t x[t] exp(-2 pi i k t / n).
ComplexTensor dft_1d(const ComplexTensor& signal);
/// Inverse of dft_1d including the 1/n factor.
ComplexTensor idft_1d(const ComplexTensor& spectrum);

/// Real 2-D DFT over the last two axes (leading axes are batch). Keeps the
/// non-redundant half spectrum: output extents (..., H, W/2 + 1). W must be even.
ComplexTensor rdft_2d(const Tensor& x);
/// Inverse of rdft_2d. `width` is the original (even) last-axis extent.
Tensor irdft_2d(const ComplexTensor& spectrum, std::size_t width);

}  // namespace quadkit
