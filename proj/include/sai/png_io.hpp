#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sai/image.hpp"

namespace sai {

/// Decoded PNG with samples normalized to [0, 1]. `channels` is the stored
/// channel count (1 gray, 2 gray+alpha, 3 RGB, 4 RGBA); palette images are
/// expanded to RGB(A).
struct PngImage {
  Image pixels;
  int bit_depth = 8;
};

PngImage read_png(const std::filesystem::path& path);
PngImage decode_png(std::span<const std::uint8_t> bytes);

/// Quantizes [0, 1] samples to 8 or 16 bits (round to nearest, clamped).
/// Supports 1 to 4 channels.
void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8);
std::vector<std::uint8_t> encode_png(const Image& img, int bit_depth = 8);

/// Value an 8- or 16-bit PNG would store for a [0, 1] sample.
std::uint16_t quantize_sample(float v, int bit_depth);

}  // namespace sai
