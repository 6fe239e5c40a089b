#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sai {

/// Interleaved float image, row-major, `channels` samples per pixel.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return size_ == 0; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<float> data() { return {data_.data(), size_}; }
  std::span<const float> data() const { return {data_.data(), size_}; }
  float* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const float* row(int y) const {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  bool operator==(const Image& other) const;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::size_t size_ = 0;
  // size_ samples plus zeroed padding, so four-wide loads at the last pixel
  // stay inside the allocation.
  std::vector<float> data_;
};

/// Rec. 709 luma for 3-channel images; copy for single-channel.
Image luma(const Image& img);

/// Bilinear lookup at (u, v) with integer coordinates at pixel centers.
/// Returns false (and leaves `out` untouched) when (u, v) lies outside
/// [0, w-1] x [0, h-1] by more than `slack`.
inline bool sample_bilinear(const Image& img, double u, double v, float* out,
                            double slack = 1e-6) {
  const int w = img.width();
  const int h = img.height();
  if (!(u >= -slack && v >= -slack && u <= w - 1 + slack && v <= h - 1 + slack)) return false;
  u = u < 0.0 ? 0.0 : (u > w - 1 ? w - 1 : u);
  v = v < 0.0 ? 0.0 : (v > h - 1 ? h - 1 : v);
  int x0 = static_cast<int>(u);
  int y0 = static_cast<int>(v);
  if (x0 > w - 2) x0 = w > 1 ? w - 2 : 0;
  if (y0 > h - 2) y0 = h > 1 ? h - 2 : 0;
  const int x1 = w > 1 ? x0 + 1 : x0;
  const int y1 = h > 1 ? y0 + 1 : y0;
  const float fx = static_cast<float>(u - x0);
  const float fy = static_cast<float>(v - y0);
  const int ch = img.channels();
  const float* r0 = img.row(y0);
  const float* r1 = img.row(y1);
  const float w00 = (1.0f - fx) * (1.0f - fy);
  const float w10 = fx * (1.0f - fy);
  const float w01 = (1.0f - fx) * fy;
  const float w11 = fx * fy;
  for (int c = 0; c < ch; ++c) {
    out[c] = w00 * r0[x0 * ch + c] + w10 * r0[x1 * ch + c] + w01 * r1[x0 * ch + c] +
             w11 * r1[x1 * ch + c];
  }
  return true;
}

}  // namespace sai
