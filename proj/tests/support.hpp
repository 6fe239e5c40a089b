#pragma once

// Shared fixtures and brute-force oracles for the test suites. The oracles
// deliberately avoid the library's geometry helpers so they can catch
// mistakes in them.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sai/engine.hpp"

namespace sai::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "sai") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h, c);
  for (float& v : img.data()) v = u(rng);
  return img;
}

// Samples that survive 16-bit PNG exactly.
inline Image random_image_16bit(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 65535);
  Image img(w, h, c);
  for (float& v : img.data()) v = static_cast<float>(u(rng) / 65535.0);
  return img;
}

inline Pose translated(double x, double y, double z) {
  Pose p;
  p.translation = Vec3(x, y, z);
  return p;
}

inline Mat3 rot_x(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
inline Mat3 rot_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
inline Mat3 rot_z(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

// Focal-surface transform composed by hand from elementary matrices.
inline Mat4 oracle_surface_matrix(const FocalSurfaceParams& s, const Pose& ref) {
  Mat4 t = Mat4::Identity();
  t(0, 3) = s.tx;
  t(1, 3) = s.ty;
  t(2, 3) = s.z;
  Mat4 r = Mat4::Identity();
  r.topLeftCorner<3, 3>() = rot_z(s.rz) * rot_y(s.ry) * rot_x(s.rx);
  Mat4 sc = Mat4::Identity();
  sc(0, 0) = s.sx;
  sc(1, 1) = s.sy;
  sc(2, 2) = s.sz;
  Mat4 refm = Mat4::Identity();
  refm.topLeftCorner<3, 3>() = ref.rotation;
  refm.topRightCorner<3, 1>() = ref.translation;
  return refm * t * r * sc;
}

// Textbook quadratic on the unit sphere in canonical space.
inline std::optional<Vec3> oracle_intersect(const Vec3& origin, const Vec3& dir,
                                            const FocalSurfaceParams& s, const Pose& ref) {
  const Mat4 inv = oracle_surface_matrix(s, ref).inverse();
  const Vec3 o = (inv * origin.homogeneous()).head<3>();
  const Vec3 d = inv.topLeftCorner<3, 3>() * dir;
  const double a = d.dot(d), b = 2 * o.dot(d), c = o.dot(o) - 1;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double r = std::sqrt(disc);
  for (double t : {(-b - r) / (2 * a), (-b + r) / (2 * a)}) {
    if (t > 1e-9 && o.z() + t * d.z() >= 0) return origin + t * dir;
  }
  return std::nullopt;
}

// Per-pixel reference integrator in double precision: ray, surface hit,
// projection and bilinear lookup written out directly. Samples within
// `slack` px of the image border are clamped onto it, farther ones are
// dropped.
inline IntegralImage oracle_integral(const CaptureSession& s, const VirtualCamera& vc,
                                     const FocalSurfaceParams& surf, const Pose& ref,
                                     const std::vector<std::size_t>& which, double slack = 1e-3) {
  const auto& k = vc.intrinsics;
  const int ch = s.channels();
  IntegralImage out;
  out.color = Image(k.width, k.height, ch);
  out.coverage = Image(k.width, k.height, 1);
  out.params_echo = surf;
  std::vector<double> acc(ch);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dcam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = (vc.pose.rotation * dcam).normalized();
      const auto p = oracle_intersect(vc.pose.translation, dir, surf, ref);
      if (!p) continue;
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (std::size_t i : which) {
        const Capture& cap = s.captures[i];
        const Vec3 c = cap.pose.rotation.transpose() * (*p - cap.pose.translation);
        if (c.z() <= 1e-6) continue;
        double u = cap.intrinsics.cx + cap.intrinsics.fx * c.x() / c.z();
        double v = cap.intrinsics.cy + cap.intrinsics.fy * c.y() / c.z();
        const int w = cap.image.width(), h = cap.image.height();
        if (u < -slack || v < -slack || u > w - 1 + slack || v > h - 1 + slack) continue;
        u = std::clamp(u, 0.0, w - 1.0);
        v = std::clamp(v, 0.0, h - 1.0);
        const int x0 = std::min(static_cast<int>(u), w - 2), y0 = std::min(static_cast<int>(v), h - 2);
        const double fx = u - x0, fy = v - y0;
        const double wt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1}, ys[4] = {y0, y0, y0 + 1, y0 + 1};
        double a = 1.0;
        if (cap.alpha) {
          a = 0.0;
          for (int q = 0; q < 4; ++q) a += wt[q] * cap.alpha->at(xs[q], ys[q]);
        }
        for (int c2 = 0; c2 < ch; ++c2) {
          double col = 0.0;
          for (int q = 0; q < 4; ++q) col += wt[q] * cap.image.at(xs[q], ys[q], c2);
          acc[c2] += a * col;
        }
        wsum += a;
      }
      out.coverage.at(x, y) = static_cast<float>(wsum);
      if (wsum < kMinCoverage) continue;
      for (int c2 = 0; c2 < ch; ++c2) out.color.at(x, y, c2) = static_cast<float>(acc[c2] / wsum);
    }
  }
  return out;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

}  // namespace sai::testing
