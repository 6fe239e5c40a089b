#include "sai/image.hpp"

#include <algorithm>

#include "sai/error.hpp"

namespace sai {

namespace {
constexpr std::size_t kPadding = 4;
}

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 0) {
    throw Error(ErrorCode::InvalidArgument, "negative image dimensions");
  }
  size_ = static_cast<std::size_t>(width) * height * channels;
  data_.assign(size_ + kPadding, 0.0f);
  std::fill_n(data_.begin(), size_, fill);
}

bool Image::operator==(const Image& other) const {
  return same_shape(other) && std::equal(data().begin(), data().end(), other.data().begin());
}

Image luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) {
    throw Error(ErrorCode::ChannelMismatch, "luma needs 1 or 3 channels");
  }
  Image out(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = 0.2126f * src[3 * i] + 0.7152f * src[3 * i + 1] + 0.0722f * src[3 * i + 2];
  }
  return out;
}

}  // namespace sai
