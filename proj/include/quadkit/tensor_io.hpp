#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "quadkit/tensor.hpp"

namespace quadkit {

/// QTNSR1 layout: "QTNSR1", dtype byte (0x01 = f64 LE), rank byte (<= 8),
/// rank x u64 LE extents, then row-major f64 LE payload. No padding.
inline constexpr std::size_t kMaxTensorRank = 8;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

/// Quantize a (H, W) tensor with values in [0, 1] (clamped) to 8 bits.
GrayImage to_gray(const Tensor& image);
Tensor from_gray(const GrayImage& img);

}  // namespace quadkit
