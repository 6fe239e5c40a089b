#include "sai/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "sai/error.hpp"

namespace sai {

namespace {

// libpng's simplified API: 8-bit data is treated as sRGB and 16-bit data as
// linear, and no conversion happens as long as we read and write each depth
// in its native format.
png_uint_32 format_for(int channels, int bit_depth) {
  png_uint_32 f = 0;
  if (channels == 2 || channels == 4) f |= PNG_FORMAT_FLAG_ALPHA;
  if (channels >= 3) f |= PNG_FORMAT_FLAG_COLOR;
  if (bit_depth == 16) f |= PNG_FORMAT_FLAG_LINEAR;
  return f;
}

int channels_of(png_uint_32 format) {
  return ((format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1) + ((format & PNG_FORMAT_FLAG_ALPHA) ? 1 : 0);
}

}  // namespace

std::uint16_t quantize_sample(float v, int bit_depth) {
  const double max = bit_depth == 16 ? 65535.0 : 255.0;
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(c * max));
}

PngImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::IoFailure, "PNG decode failed: " + msg);
  }
  const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const int channels = channels_of(image.format);
  const int depth = wide ? 16 : 8;
  image.format = format_for(channels, depth);

  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  PngImage out{Image(w, h, channels), depth};
  auto dst = out.pixels.data();
  bool ok = false;
  if (wide) {
    std::vector<std::uint16_t> buf(PNG_IMAGE_SIZE(image) / sizeof(std::uint16_t));
    ok = png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) != 0;
    for (std::size_t i = 0; ok && i < dst.size(); ++i) dst[i] = static_cast<float>(buf[i] / 65535.0);
  } else {
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    ok = png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) != 0;
    for (std::size_t i = 0; ok && i < dst.size(); ++i) dst[i] = static_cast<float>(buf[i] / 255.0);
  }
  if (!ok) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::IoFailure, "PNG decode failed: " + msg);
  }
  return out;
}

PngImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ImageMissing, path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::IoFailure, path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorCode::EncodingFailure, "PNG bit depth must be 8 or 16");
  }
  if (img.channels() < 1 || img.channels() > 4 || img.empty()) {
    throw Error(ErrorCode::EncodingFailure, "PNG needs a non-empty image with 1 to 4 channels");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = format_for(img.channels(), bit_depth);

  auto src = img.data();
  std::vector<std::uint8_t> raw8;
  std::vector<std::uint16_t> raw16;
  const void* buffer = nullptr;
  if (bit_depth == 16) {
    raw16.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) raw16[i] = quantize_sample(src[i], 16);
    buffer = raw16.data();
  } else {
    raw8.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      raw8[i] = static_cast<std::uint8_t>(quantize_sample(src[i], 8));
    }
    buffer = raw8.data();
  }

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer, 0, nullptr)) {
    throw Error(ErrorCode::EncodingFailure, std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buffer, 0, nullptr)) {
    throw Error(ErrorCode::EncodingFailure, std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  const std::vector<std::uint8_t> bytes = encode_png(img, bit_depth);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace sai
