#include "sai/autofocus.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sai/error.hpp"

namespace sai {

void RoI::validate(int width, int height) const {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > width || y + h > height) {
    throw Error(ErrorCode::InvalidArgument, "region of interest outside the image");
  }
  if (static_cast<long>(w) * h < 64) {
    throw Error(ErrorCode::InvalidArgument, "region of interest smaller than 64 pixels");
  }
}

RoI RoI::centered(int width, int height, double fraction) {
  const int w = std::max(1, static_cast<int>(std::lround(width * fraction)));
  const int h = std::max(1, static_cast<int>(std::lround(height * fraction)));
  return RoI{(width - w) / 2, (height - h) / 2, w, h};
}

double focus_metric(const IntegralImage& img, const RoI& roi) {
  const int width = img.width();
  const int height = img.height();
  roi.validate(width, height);

  std::size_t valid = 0;
  for (int y = roi.y; y < roi.y + roi.h; ++y) {
    for (int x = roi.x; x < roi.x + roi.w; ++x) valid += img.valid(x, y) ? 1 : 0;
  }
  if (2 * valid < static_cast<std::size_t>(roi.w) * roi.h) {
    throw Error(ErrorCode::InsufficientCoverage,
                std::to_string(valid) + " of " + std::to_string(roi.w * roi.h) +
                    " region pixels are valid");
  }

  const Image l = luma(img.color);
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = roi.y; y < roi.y + roi.h; ++y) {
    if (y < 1 || y + 1 >= height) continue;
    for (int x = roi.x; x < roi.x + roi.w; ++x) {
      if (x < 1 || x + 1 >= width) continue;
      if (!img.valid(x, y) || !img.valid(x - 1, y) || !img.valid(x + 1, y) ||
          !img.valid(x, y - 1) || !img.valid(x, y + 1)) {
        continue;
      }
      const double gx = 0.5 * (double(l.at(x + 1, y)) - l.at(x - 1, y));
      const double gy = 0.5 * (double(l.at(x, y + 1)) - l.at(x, y - 1));
      sum += gx * gx + gy * gy;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

AutofocusResult autofocus_depth(const CaptureSession& session, const VirtualCamera& vcam,
                                const RoI& roi, double z_min, double z_max,
                                const FocalSurfaceParams& surf_template, const Pose& ref_pose,
                                const AutofocusOptions& options) {
  if (!(z_min > 0.0 && z_min < z_max)) {
    throw Error(ErrorCode::InvalidArgument, "autofocus needs 0 < z_min < z_max");
  }
  if (options.coarse_steps < 3) {
    throw Error(ErrorCode::InvalidArgument, "autofocus needs at least 3 coarse steps");
  }
  roi.validate(vcam.intrinsics.width, vcam.intrinsics.height);

  // Gradients at the region border need one ring of neighbours.
  RenderOptions ropt = options.render;
  ropt.window = PixelRect{roi.x - 1, roi.y - 1, roi.w + 2, roi.h + 2};

  AutofocusResult result;
  auto evaluate = [&](double z) {
    FocalSurfaceParams surf = surf_template;
    surf.z = z;
    const IntegralImage img = render_integral(session, vcam, surf, ref_pose, ropt);
    const double m = focus_metric(img, roi);
    result.samples.emplace_back(z, m);
    return m;
  };

  const int n = options.coarse_steps;
  std::vector<double> zs(n);
  std::vector<double> ms(n);
  const double log_lo = std::log(z_min);
  const double log_hi = std::log(z_max);
  for (int i = 0; i < n; ++i) {
    zs[i] = i == n - 1 ? z_max : std::exp(log_lo + (log_hi - log_lo) * i / (n - 1));
    ms[i] = evaluate(zs[i]);
  }
  const int best = static_cast<int>(std::max_element(ms.begin(), ms.end()) - ms.begin());
  if (ms[best] < 1e-12) {
    throw Error(ErrorCode::NoContrast, "focus metric is flat over the search range");
  }

  double best_z = zs[best];
  double best_m = ms[best];
  double a = zs[std::max(best - 1, 0)];
  double b = zs[std::min(best + 1, n - 1)];

  // Golden-section maximisation on [a, b].
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double mc = evaluate(c);
  double md = evaluate(d);
  auto consider = [&](double z, double m) {
    if (m > best_m) {
      best_m = m;
      best_z = z;
    }
  };
  consider(c, mc);
  consider(d, md);
  while (b - a >= options.relative_bracket * best_z) {
    if (mc >= md) {
      b = d;
      d = c;
      md = mc;
      c = b - inv_phi * (b - a);
      mc = evaluate(c);
      consider(c, mc);
    } else {
      a = c;
      c = d;
      mc = md;
      d = a + inv_phi * (b - a);
      md = evaluate(d);
      consider(d, md);
    }
  }

  result.z = std::clamp(best_z, z_min, z_max);
  result.metric = best_m;
  return result;
}

}  // namespace sai
