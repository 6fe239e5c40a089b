#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sai/geometry.hpp"
#include "sai/image.hpp"

namespace sai {

/// One narrow-aperture sample of the synthetic aperture.
struct Capture {
  Image image;  // H x W x C, C in {1, 3}, samples in [0, 1]
  Pose pose;
  Intrinsics intrinsics;
  std::optional<Image> alpha;          // H x W weights in [0, 1]
  std::map<std::string, Image> aux;    // external mask planes, values in [-1, 1]
};

struct CaptureSession {
  std::vector<Capture> captures;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return captures.size(); }
  bool empty() const { return captures.empty(); }
  int channels() const { return captures.empty() ? 0 : captures.front().image.channels(); }

  /// Throws EmptySession, ChannelMismatch or InvalidArgument.
  void validate() const;
};

struct VirtualCamera {
  Intrinsics intrinsics;
  Pose pose;
};

/// Total weight below which an output pixel is considered unobserved.
inline constexpr double kMinCoverage = 1e-4;

struct IntegralImage {
  Image color;     // H x W x C, invalid pixels are 0
  Image coverage;  // H x W, sum of contribution weights
  FocalSurfaceParams params_echo;

  int width() const { return color.width(); }
  int height() const { return color.height(); }
  bool valid(int x, int y) const { return coverage.at(x, y) >= kMinCoverage; }
  std::size_t valid_count() const;
};

struct PixelRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct RenderOptions {
  /// Worker threads; 0 picks the hardware concurrency. Output is identical
  /// for every worker count.
  int workers = 0;
  /// Restrict rendering to a window; pixels outside it get zero coverage.
  std::optional<PixelRect> window;
};

/// Synthetic-aperture integral: per output pixel, intersect the focal
/// surface and take the alpha-weighted average of every capture that sees
/// the focal point.
IntegralImage render_integral(const CaptureSession& session, const VirtualCamera& vcam,
                              const FocalSurfaceParams& surf, const Pose& ref_pose,
                              const RenderOptions& options = {});

/// Same as render_integral restricted to one capture.
IntegralImage render_pinhole(const CaptureSession& session, std::size_t index,
                             const VirtualCamera& vcam, const FocalSurfaceParams& surf,
                             const Pose& ref_pose, const RenderOptions& options = {});

/// Integral over an explicit, ordered subset of captures.
IntegralImage render_subset(const CaptureSession& session, const std::vector<std::size_t>& indices,
                            const VirtualCamera& vcam, const FocalSurfaceParams& surf,
                            const Pose& ref_pose, const RenderOptions& options = {});

/// Image-space parallax span (pixels) of an occluder at occ_depth when the
/// aperture of width sa_width is focused at surf_depth.
double blur_footprint(double surf_depth, double occ_depth, double sa_width, const Intrinsics& k);

}  // namespace sai
