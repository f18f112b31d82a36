#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maskadv/network.hpp"
#include "maskadv/tensor.hpp"

namespace maskadv {

// 8-bit PNG pixels in (H, W, C) order; C is 1 (gray) or 3 (RGB).
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> data;
};

// True when bytes start with the PNG signature.
bool is_png(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_png(const Image8& img);
// Gray+alpha and RGBA drop alpha; palettes and 16-bit samples are expanded to 8 bits.
Image8 decode_png(const std::vector<std::uint8_t>& bytes);

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);

// Maps [lo, hi] linearly onto 0..255 with rounding.
Image8 tensor_to_image(const Tensor& x, InputRange range);
Tensor image_to_tensor(const Image8& img, InputRange range);

// |delta| summed over channels, scaled so the largest value is 255 (all zero stays black).
Image8 heat_map(const Tensor& values);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace maskadv
