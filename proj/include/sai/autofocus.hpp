#pragma once

#include <utility>
#include <vector>

#include "sai/engine.hpp"

namespace sai {

/// Region of interest in output-pixel coordinates.
struct RoI {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  /// Throws InvalidArgument unless the region lies inside a width x height
  /// image and covers at least 64 pixels.
  void validate(int width, int height) const;

  /// Centered region spanning `fraction` of each image dimension.
  static RoI centered(int width, int height, double fraction = 0.5);
};

/// Mean squared central-difference gradient of the luma plane over the valid
/// pixels of the region. Throws InsufficientCoverage when fewer than half of
/// the region's pixels are valid.
double focus_metric(const IntegralImage& img, const RoI& roi);

struct AutofocusResult {
  double z = 0.0;
  double metric = 0.0;
  std::vector<std::pair<double, double>> samples;  // (z, metric) in evaluation order
};

struct AutofocusOptions {
  int coarse_steps = 32;
  double relative_bracket = 0.005;
  RenderOptions render;
};

/// Coarse log-spaced sweep of the template's z over [z_min, z_max] followed
/// by golden-section refinement around the best coarse sample. Only z is
/// varied; every other surface parameter comes from `surf_template`.
AutofocusResult autofocus_depth(const CaptureSession& session, const VirtualCamera& vcam,
                                const RoI& roi, double z_min, double z_max,
                                const FocalSurfaceParams& surf_template, const Pose& ref_pose,
                                const AutofocusOptions& options = {});

}  // namespace sai
