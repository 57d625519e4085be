#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "inrattr/tensor.hpp"

namespace inrattr {

/// 8-bit grayscale plane, row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// 8-bit RGB image, interleaved row-major.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // 3 * height * width
};

// Binary Netpbm, maxval 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

/// [3 x h x w] float tensor in [0,1] -> interleaved 8-bit, round-to-nearest.
RgbImage to_rgb8(const Tensor& image);
/// Interleaved 8-bit -> [3 x h x w] float tensor, values / 255.
TensorPtr from_rgb8(const RgbImage& img);

/// [h x w] floats in [0,1] -> 8-bit, round-to-nearest.
GrayImage to_gray8(const std::vector<float>& values, std::size_t h, std::size_t w);
std::vector<float> from_gray8(const GrayImage& img);

}  // namespace inrattr
