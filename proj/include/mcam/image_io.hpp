#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcam/tensor.hpp"

namespace mcam {

// 8-bit quantization with round-half-up; input clamped to [0, 1].
uint8_t quantize_u8(float v);

// Binary PPM (P6, maxval 255) for an image [H, W, 3] in [0, 1].
std::vector<uint8_t> encode_ppm(const Tensor& image);
Tensor decode_ppm(const std::vector<uint8_t>& bytes);
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace mcam
