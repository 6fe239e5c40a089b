#include "sai/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

#include "sai/error.hpp"

namespace sai::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform [0, 1) from the top 53 bits; avoids implementation-defined
// std::uniform_real_distribution output.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

constexpr std::uint64_t kSaltCoarse = 0x1111;
constexpr std::uint64_t kSaltFine = 0x2222;
constexpr std::uint64_t kSaltHue = 0x3333;

// Background lattice values are tabulated within this half-width (meters);
// farther lookups fall back to hashing.
constexpr double kNoiseTableExtent = 12.0;

// 2x2 supersample offsets in pixel units.
constexpr double kSub[4][2] = {{-0.25, -0.25}, {0.25, -0.25}, {-0.25, 0.25}, {0.25, 0.25}};

struct Footprint {
  int x0, y0, x1, y1;  // cell range [x0, x1) x [y0, y1)
  std::size_t cells() const { return static_cast<std::size_t>(x1 - x0) * (y1 - y0); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

}  // namespace

std::string to_string(OccluderShape shape) {
  switch (shape) {
    case OccluderShape::Disks: return "disks";
    case OccluderShape::HorizontalBar: return "horizontal-bar";
    case OccluderShape::RandomRects: return "random-rects";
  }
  return "disks";
}

OccluderShape occluder_shape_from_string(const std::string& name) {
  if (name == "disks") return OccluderShape::Disks;
  if (name == "horizontal-bar" || name == "bars") return OccluderShape::HorizontalBar;
  if (name == "random-rects" || name == "rects") return OccluderShape::RandomRects;
  throw Error(ErrorCode::InvalidArgument, "unknown occluder shape '" + name + "'");
}

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Horizontal: return "horizontal";
    case MotionKind::Vertical: return "vertical";
    case MotionKind::Diagonal: return "diagonal";
    case MotionKind::PlanarGrid: return "planar-grid";
    case MotionKind::Rotation: return "rotation";
  }
  return "horizontal";
}

MotionKind motion_kind_from_string(const std::string& name) {
  if (name == "horizontal") return MotionKind::Horizontal;
  if (name == "vertical") return MotionKind::Vertical;
  if (name == "diagonal") return MotionKind::Diagonal;
  if (name == "planar-grid" || name == "grid") return MotionKind::PlanarGrid;
  if (name == "rotation") return MotionKind::Rotation;
  throw Error(ErrorCode::InvalidArgument, "unknown motion kind '" + name + "'");
}

void SceneConfig::validate() const {
  if (!(occ_depth > 0.0 && occ_depth < bg_depth)) {
    throw Error(ErrorCode::InvalidArgument, "scene needs 0 < occ_depth < bg_depth");
  }
  if (!(density >= 0.0 && density <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "density must lie in [0, 1]");
  }
  if (!(cell > 0.0 && margin >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "scene grid needs cell > 0 and margin >= 0");
  }
  reference.validate();
}

// ---------------------------------------------------------------------------
// Scene

SyntheticScene::SyntheticScene(SceneConfig config) : config_(std::move(config)) {
  build_noise_tables();
}

std::uint32_t SyntheticScene::cell_id(double x, double y) const {
  const double fx = (x - x0_) / config_.cell;
  const double fy = (y - y0_) / config_.cell;
  if (!(fx >= 0.0 && fy >= 0.0 && fx < nx_ && fy < ny_)) return 0;
  return occupancy_[static_cast<std::size_t>(fy) * nx_ + static_cast<std::size_t>(fx)];
}

std::optional<Rgb> SyntheticScene::occluder_at(double x, double y) const {
  const std::uint32_t id = cell_id(x, y);
  if (id == 0) return std::nullopt;
  return colors_[id - 1];
}

double SyntheticScene::lattice_value(std::int64_t i, std::int64_t j, std::uint64_t salt) const {
  const std::uint64_t base = splitmix64(config_.seed ^ (salt << 32));
  const std::uint64_t h = splitmix64(
      base ^ splitmix64(static_cast<std::uint64_t>(i) * 0x9E3779B1ULL + static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

void SyntheticScene::build_noise_tables() {
  const double scales[3] = {config_.texture_coarse, config_.texture_fine,
                            config_.texture_coarse * 1.7};
  const std::uint64_t salts[3] = {kSaltCoarse, kSaltFine, kSaltHue};
  for (int o = 0; o < 3; ++o) {
    NoiseTable& t = noise_[o];
    t.scale = scales[o];
    t.salt = salts[o];
    t.half = static_cast<int>(std::ceil(kNoiseTableExtent / t.scale)) + 1;
    const int n = 2 * t.half + 2;
    t.values.resize(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        t.values[static_cast<std::size_t>(j) * n + i] = lattice_value(i - t.half, j - t.half, t.salt);
      }
    }
  }
}

double SyntheticScene::value_noise(double x, double y, int octave) const {
  const NoiseTable& t = noise_[octave];
  const double gx = x / t.scale;
  const double gy = y / t.scale;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = quintic(gx - fx);
  const double ty = quintic(gy - fy);
  double v00, v10, v01, v11;
  const std::int64_t n = 2 * t.half + 2;
  const std::int64_t li = ix + t.half, lj = iy + t.half;
  if (li >= 0 && lj >= 0 && li + 1 < n && lj + 1 < n) {
    const double* r0 = &t.values[static_cast<std::size_t>(lj * n + li)];
    const double* r1 = r0 + n;
    v00 = r0[0];
    v10 = r0[1];
    v01 = r1[0];
    v11 = r1[1];
  } else {
    v00 = lattice_value(ix, iy, t.salt);
    v10 = lattice_value(ix + 1, iy, t.salt);
    v01 = lattice_value(ix, iy + 1, t.salt);
    v11 = lattice_value(ix + 1, iy + 1, t.salt);
  }
  const double a = v00 + (v10 - v00) * tx;
  const double b = v01 + (v11 - v01) * tx;
  return a + (b - a) * ty;
}

Rgb SyntheticScene::background_at(double x, double y) const {
  const double n = 0.6 * value_noise(x, y, 0) + 0.4 * value_noise(x, y, 1);
  const double h = value_noise(x, y, 2);
  // Earthy tones: 2G < R + B everywhere, so VDVI stays negative.
  return Rgb{clamp01(0.25 + 0.5 * n + 0.08 * h), clamp01(0.2 + 0.4 * n),
             clamp01(0.15 + 0.35 * n + 0.05 * (1.0 - h))};
}

Rgb SyntheticScene::trace_background(const Ray& ray) const {
  if (ray.direction.z() <= 1e-12) return Rgb{};
  const double t = (config_.bg_depth - ray.origin.z()) / ray.direction.z();
  if (t <= 0.0) return Rgb{};
  const Vec3 p = ray.origin + t * ray.direction;
  return background_at(p.x(), p.y());
}

Rgb SyntheticScene::trace(const Ray& ray, bool* hit_occluder) const {
  if (hit_occluder) *hit_occluder = false;
  if (ray.direction.z() <= 1e-12) return Rgb{};
  const double t = (config_.occ_depth - ray.origin.z()) / ray.direction.z();
  if (t > 0.0) {
    const Vec3 p = ray.origin + t * ray.direction;
    if (const std::uint32_t id = cell_id(p.x(), p.y())) {
      if (hit_occluder) *hit_occluder = true;
      return colors_[id - 1];
    }
  }
  return trace_background(ray);
}

namespace {

// Ray through a sub-pixel position; direction need not be normalized for
// plane tracing.
Ray sub_ray(const Intrinsics& k, const Pose& pose, double u, double v) {
  const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return Ray{pose.translation, pose.rotation * dir_cam};
}

template <typename Shade>
Image render_supersampled(const Intrinsics& k, const Pose& pose, Shade&& shade) {
  Image out(k.width, k.height, 3);
  for (int y = 0; y < k.height; ++y) {
    float* row = out.row(y);
    for (int x = 0; x < k.width; ++x) {
      double r = 0.0, g = 0.0, b = 0.0;
      for (const auto& s : kSub) {
        const Rgb c = shade(sub_ray(k, pose, x + s[0], y + s[1]));
        r += c.r;
        g += c.g;
        b += c.b;
      }
      row[3 * x] = static_cast<float>(0.25 * r);
      row[3 * x + 1] = static_cast<float>(0.25 * g);
      row[3 * x + 2] = static_cast<float>(0.25 * b);
    }
  }
  return out;
}

}  // namespace

Image SyntheticScene::ground_truth(const VirtualCamera& cam) const {
  return render_supersampled(cam.intrinsics, cam.pose,
                             [this](const Ray& r) { return trace_background(r); });
}

Image SyntheticScene::occluder_shadow(const VirtualCamera& cam) const {
  const Intrinsics& k = cam.intrinsics;
  Image out(k.width, k.height, 1);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      bool any = false;
      for (const auto& s : kSub) {
        bool hit = false;
        trace(sub_ray(k, cam.pose, x + s[0], y + s[1]), &hit);
        any = any || hit;
      }
      out.at(x, y) = any ? 1.0f : 0.0f;
    }
  }
  return out;
}

SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  SyntheticScene scene(cfg);

  const Intrinsics& k = cfg.reference;
  const double d = cfg.occ_depth;
  const double fx0 = (-0.5 - k.cx) / k.fx * d;
  const double fx1 = (k.width - 0.5 - k.cx) / k.fx * d;
  const double fy0 = (-0.5 - k.cy) / k.fy * d;
  const double fy1 = (k.height - 0.5 - k.cy) / k.fy * d;

  scene.x0_ = fx0 - cfg.margin;
  scene.y0_ = fy0 - cfg.margin;
  scene.nx_ = static_cast<int>(std::ceil((fx1 - fx0 + 2 * cfg.margin) / cfg.cell));
  scene.ny_ = static_cast<int>(std::ceil((fy1 - fy0 + 2 * cfg.margin) / cfg.cell));
  scene.occupancy_.assign(static_cast<std::size_t>(scene.nx_) * scene.ny_, 0);

  const Footprint fp{static_cast<int>(std::lround(cfg.margin / cfg.cell)),
                     static_cast<int>(std::lround(cfg.margin / cfg.cell)),
                     static_cast<int>(std::lround((fx1 - fx0 + cfg.margin) / cfg.cell)),
                     static_cast<int>(std::lround((fy1 - fy0 + cfg.margin) / cfg.cell))};
  const std::size_t fp_cells = fp.cells();
  const std::size_t margin_cells = scene.occupancy_.size() - fp_cells;

  std::mt19937_64 rng(cfg.seed);
  auto random_color = [&]() {
    const double u1 = uniform(rng, -1.0, 1.0), u2 = uniform(rng, -1.0, 1.0),
                 u3 = uniform(rng, -1.0, 1.0);
    if (cfg.palette == OccluderPalette::Gray) {
      const float v = clamp01(0.3 + 0.25 * u1);
      return Rgb{v, v, v};
    }
    return Rgb{clamp01(0.20 + 0.06 * u1), clamp01(0.50 + 0.12 * u2), clamp01(0.12 + 0.05 * u3)};
  };

  if (cfg.density >= 1.0) {
    scene.colors_.push_back(random_color());
    std::fill(scene.occupancy_.begin(), scene.occupancy_.end(), 1u);
    scene.measured_density_ = 1.0;
    return scene;
  }

  // An element is a set of cells given by a rasterizer callback.
  struct Shape {
    int x0, y0, x1, y1;            // bounding box in cells, clipped
    double cx, cy, r2;             // disk parameters (cells); r2 < 0 for rectangles
  };
  auto for_each_cell = [&](const Shape& s, auto&& fn) {
    for (int y = s.y0; y < s.y1; ++y) {
      for (int x = s.x0; x < s.x1; ++x) {
        if (s.r2 >= 0.0) {
          const double dx = x + 0.5 - s.cx, dy = y + 0.5 - s.cy;
          if (dx * dx + dy * dy > s.r2) continue;
        }
        fn(x, y);
      }
    }
  };
  auto clip = [&](double x0, double y0, double x1, double y1, double cx, double cy, double r2) {
    return Shape{std::clamp(static_cast<int>(std::floor(x0)), 0, scene.nx_),
                 std::clamp(static_cast<int>(std::floor(y0)), 0, scene.ny_),
                 std::clamp(static_cast<int>(std::ceil(x1)), 0, scene.nx_),
                 std::clamp(static_cast<int>(std::ceil(y1)), 0, scene.ny_), cx, cy, r2};
  };
  auto random_shape = [&]() {
    const double c = cfg.cell;
    switch (cfg.shape) {
      case OccluderShape::Disks: {
        const double cx = uniform(rng, 0.0, scene.nx_), cy = uniform(rng, 0.0, scene.ny_);
        const double r = uniform(rng, cfg.disk_radius_min, cfg.disk_radius_max) / c;
        return clip(cx - r, cy - r, cx + r, cy + r, cx, cy, r * r);
      }
      case OccluderShape::HorizontalBar: {
        const double cy = uniform(rng, 0.0, scene.ny_);
        const double h = uniform(rng, cfg.bar_height_min, cfg.bar_height_max) / c;
        return clip(0.0, cy - h / 2, scene.nx_, cy + h / 2, 0.0, 0.0, -1.0);
      }
      case OccluderShape::RandomRects: {
        const double cx = uniform(rng, 0.0, scene.nx_), cy = uniform(rng, 0.0, scene.ny_);
        const double w = uniform(rng, cfg.rect_size_min, cfg.rect_size_max) / c;
        const double h = uniform(rng, cfg.rect_size_min, cfg.rect_size_max) / c;
        return clip(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, 0.0, 0.0, -1.0);
      }
    }
    return Shape{0, 0, 0, 0, 0, 0, -1};
  };

  // Placement keeps the footprint and the margin band within the acceptance
  // window so both end up near the requested density.
  constexpr double kWindow = 0.01;
  constexpr int kMaxRejections = 10000;
  const double target = cfg.density;
  std::size_t fp_covered = 0;
  std::size_t margin_covered = 0;
  int rejections = 0;
  auto fraction = [](std::size_t covered, std::size_t total) {
    return total == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(total);
  };
  auto done = [&] {
    return fraction(fp_covered, fp_cells) >= target - kWindow &&
           (margin_cells == 0 || fraction(margin_covered, margin_cells) >= target - kWindow);
  };

  while (target > 0.0 && !done()) {
    const Shape s = random_shape();
    std::size_t add_fp = 0, add_margin = 0;
    for_each_cell(s, [&](int x, int y) {
      if (scene.occupancy_[static_cast<std::size_t>(y) * scene.nx_ + x] != 0) return;
      (fp.contains(x, y) ? add_fp : add_margin)++;
    });
    const bool over_fp = add_fp > 0 && fraction(fp_covered + add_fp, fp_cells) > target + kWindow;
    // Elements straddling the footprint are judged by the footprint alone;
    // otherwise full-width bars could stall once the margin band fills up.
    const bool over_margin = add_fp == 0 && add_margin > 0 &&
                             fraction(margin_covered + add_margin, margin_cells) > target + kWindow;
    if (over_fp || over_margin || add_fp + add_margin == 0) {
      if (++rejections > kMaxRejections) break;
      continue;
    }
    scene.colors_.push_back(random_color());
    const auto id = static_cast<std::uint32_t>(scene.colors_.size());
    for_each_cell(s, [&](int x, int y) {
      std::uint32_t& cell = scene.occupancy_[static_cast<std::size_t>(y) * scene.nx_ + x];
      if (cell == 0) cell = id;
    });
    fp_covered += add_fp;
    margin_covered += add_margin;
  }

  scene.measured_density_ = fraction(fp_covered, fp_cells);
  if (std::abs(scene.measured_density_ - target) > 0.02) {
    throw Error(ErrorCode::DensityUnreachable,
                "reached coverage " + std::to_string(scene.measured_density_) + " for density " +
                    std::to_string(target) + " after " + std::to_string(rejections) +
                    " rejected placements");
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Trajectories

void TrajectorySpec::validate() const {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "trajectory needs count >= 1");
  if (!(sa_width >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sa_width must be >= 0");
  if (kind == MotionKind::Rotation && !(pivot_offset > 0.0 && sa_width <= 2.0 * pivot_offset)) {
    throw Error(ErrorCode::InvalidArgument, "rotation chord exceeds the pivot arm diameter");
  }
  if (!(jitter_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "jitter_sigma must be >= 0");
}

std::pair<double, double> trajectory_extent(const std::vector<Pose>& poses) {
  if (poses.empty()) return {0.0, 0.0};
  double xmin = poses[0].translation.x(), xmax = xmin;
  double ymin = poses[0].translation.y(), ymax = ymin;
  for (const Pose& p : poses) {
    xmin = std::min(xmin, p.translation.x());
    xmax = std::max(xmax, p.translation.x());
    ymin = std::min(ymin, p.translation.y());
    ymax = std::max(ymax, p.translation.y());
  }
  return {xmax - xmin, ymax - ymin};
}

std::vector<Pose> generate_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const int n = spec.count;
  const double w = spec.sa_width;
  auto lerp = [n](int i) { return n == 1 ? 0.0 : static_cast<double>(i) / (n - 1) - 0.5; };

  std::vector<Pose> poses;
  poses.reserve(n);
  switch (spec.kind) {
    case MotionKind::Horizontal:
    case MotionKind::Vertical:
    case MotionKind::Diagonal: {
      Vec3 axis = Vec3::UnitX();
      if (spec.kind == MotionKind::Vertical) axis = Vec3::UnitY();
      if (spec.kind == MotionKind::Diagonal) axis = Vec3(1.0, 1.0, 0.0).normalized();
      for (int i = 0; i < n; ++i) {
        Pose p;
        p.translation = axis * (w * lerp(i));
        poses.push_back(p);
      }
      break;
    }
    case MotionKind::PlanarGrid: {
      // Factor count into cols x rows closest to the 3:2 aspect of the grid.
      int cols = n, rows = 1;
      double best = std::abs(std::log(static_cast<double>(n) / 1.5));
      for (int r = 2; r <= n; ++r) {
        if (n % r != 0) continue;
        const double score = std::abs(std::log(static_cast<double>(n / r) / r / 1.5));
        if (score < best) {
          best = score;
          cols = n / r;
          rows = r;
        }
      }
      const double h = w * 2.0 / 3.0;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          Pose p;
          const double fx = cols == 1 ? 0.0 : static_cast<double>(c) / (cols - 1) - 0.5;
          const double fy = rows == 1 ? 0.0 : static_cast<double>(r) / (rows - 1) - 0.5;
          p.translation = Vec3(w * fx, h * fy, 0.0);
          poses.push_back(p);
        }
      }
      break;
    }
    case MotionKind::Rotation: {
      const double arm = spec.pivot_offset;
      const double sweep = 2.0 * std::asin(w / (2.0 * arm));
      const Vec3 pivot(0.0, 0.0, -arm);
      for (int i = 0; i < n; ++i) {
        const double phi = sweep * lerp(i);
        Pose p;
        p.rotation = Eigen::AngleAxisd(phi, Vec3::UnitY()).toRotationMatrix();
        p.translation = pivot + p.rotation * Vec3(0.0, 0.0, arm);
        poses.push_back(p);
      }
      break;
    }
  }

  if (spec.jitter_sigma > 0.0) {
    std::mt19937_64 rng(spec.jitter_seed);
    std::normal_distribution<double> noise(0.0, spec.jitter_sigma);
    for (Pose& p : poses) p.translation += Vec3(noise(rng), noise(rng), noise(rng));
  }

  if (spec.enforce_limits) {
    const auto [hx, vy] = trajectory_extent(poses);
    if (hx > spec.max_horizontal + 1e-12 || vy > spec.max_vertical + 1e-12) {
      throw Error(ErrorCode::LimitExceeded,
                  "trajectory extent " + std::to_string(hx) + " x " + std::to_string(vy) +
                      " m exceeds " + std::to_string(spec.max_horizontal) + " x " +
                      std::to_string(spec.max_vertical) + " m");
    }
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Rendering and scoring

CaptureSession render_views(const SyntheticScene& scene, const std::vector<Pose>& poses,
                            const Intrinsics& k) {
  k.validate();
  CaptureSession session;
  session.captures.reserve(poses.size());
  for (const Pose& pose : poses) {
    Capture cap;
    cap.pose = pose;
    cap.intrinsics = k;
    cap.image = render_supersampled(k, pose, [&scene](const Ray& r) { return scene.trace(r); });
    session.captures.push_back(std::move(cap));
  }
  const SceneConfig& cfg = scene.config();
  session.metadata["band"] = "rgb";
  session.metadata["source"] = "simulator";
  session.metadata["occluder_shape"] = to_string(cfg.shape);
  session.metadata["density"] = std::to_string(cfg.density);
  session.metadata["seed"] = std::to_string(cfg.seed);
  session.metadata["occ_depth_m"] = std::to_string(cfg.occ_depth);
  session.metadata["bg_depth_m"] = std::to_string(cfg.bg_depth);
  return session;
}

std::size_t nearest_to_center(const std::vector<Pose>& poses) {
  if (poses.empty()) throw Error(ErrorCode::InvalidArgument, "no poses");
  std::size_t best = 0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (poses[i].translation.norm() < poses[best].translation.norm()) best = i;
  }
  return best;
}

VirtualCamera reference_camera(const SceneConfig& cfg) {
  return VirtualCamera{cfg.reference, Pose::identity()};
}

IntegralImage conventional_view(const SyntheticScene& scene, const VirtualCamera& cam) {
  const CaptureSession s = render_views(scene, {cam.pose}, cam.intrinsics);
  IntegralImage out;
  out.color = s.captures.front().image;
  out.coverage = Image(cam.intrinsics.width, cam.intrinsics.height, 1, 1.0f);
  return out;
}

RecoveryReference make_reference(const SyntheticScene& scene, const VirtualCamera& cam) {
  return RecoveryReference{scene.ground_truth(cam), scene.occluder_shadow(cam)};
}

double psnr(double mse) {
  if (mse <= 0.0) return kMaxPsnr;
  return std::min(kMaxPsnr, -10.0 * std::log10(mse));
}

RecoveryMetrics evaluate_recovery(const IntegralImage& integral, const RecoveryReference& ref) {
  const Image& out = integral.color;
  const Image& gt = ref.ground_truth;
  if (out.width() != gt.width() || out.height() != gt.height() ||
      out.channels() != gt.channels()) {
    throw Error(ErrorCode::InvalidArgument, "integral and ground truth differ in shape");
  }
  const int ch = out.channels();
  double sq = 0.0, occ = 0.0;
  std::size_t valid = 0, shadowed = 0;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!integral.valid(x, y)) continue;
      ++valid;
      double abs_sum = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double e = static_cast<double>(out.at(x, y, c)) - gt.at(x, y, c);
        sq += e * e;
        abs_sum += std::abs(e);
      }
      if (ref.shadow.at(x, y) > 0.5f) {
        occ += abs_sum / ch;
        ++shadowed;
      }
    }
  }
  if (valid == 0) throw Error(ErrorCode::NoValidPixels, "integral image has no valid pixels");
  RecoveryMetrics m;
  m.psnr_bg = psnr(sq / (static_cast<double>(valid) * ch));
  m.residual_occ = shadowed == 0 ? 0.0 : occ / static_cast<double>(shadowed);
  m.valid_fraction = static_cast<double>(valid) / static_cast<double>(out.pixel_count());
  return m;
}

RecoveryMetrics evaluate_recovery(const IntegralImage& integral, const SyntheticScene& scene,
                                  const VirtualCamera& cam) {
  return evaluate_recovery(integral, make_reference(scene, cam));
}

std::vector<SweepRow> density_sweep(const std::vector<double>& densities,
                                    const TrajectorySpec& trajectory,
                                    const SceneConfig& scene_cfg, const FocalSurfaceParams& surf,
                                    const SweepOptions& options) {
  if (!std::is_sorted(densities.begin(), densities.end())) {
    throw Error(ErrorCode::InvalidArgument, "densities must be sorted ascending");
  }
  if (options.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs seeds");
  const std::vector<Pose> poses = generate_trajectory(trajectory);
  const std::size_t central = nearest_to_center(poses);

  struct Job {
    double density;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double d : densities) {
    for (std::uint64_t s : options.seeds) jobs.push_back({d, s});
  }
  std::vector<SweepRow> rows(jobs.size());

  auto run_job = [&](std::size_t i) {
    SceneConfig cfg = scene_cfg;
    cfg.density = jobs[i].density;
    cfg.seed = jobs[i].seed;
    const SyntheticScene scene = generate_scene(cfg);
    const VirtualCamera vcam = reference_camera(cfg);
    const RecoveryReference ref = make_reference(scene, vcam);
    const CaptureSession session = render_views(scene, poses, cfg.reference);
    const IntegralImage integral =
        render_integral(session, vcam, surf, Pose::identity(), options.render);
    const IntegralImage single =
        render_pinhole(session, central, vcam, surf, Pose::identity(), options.render);
    const RecoveryMetrics m_int = evaluate_recovery(integral, ref);
    const RecoveryMetrics m_single = evaluate_recovery(single, ref);
    rows[i] = SweepRow{cfg.density,      cfg.seed,
                       m_single.psnr_bg, m_int.psnr_bg,
                       m_int.psnr_bg - m_single.psnr_bg};
  };

  const int workers = std::clamp(options.workers, 1, static_cast<int>(jobs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            try {
              run_job(i);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return rows;
}

std::vector<SweepSummary> summarize(const std::vector<SweepRow>& rows) {
  std::map<double, std::pair<double, int>> acc;
  for (const SweepRow& r : rows) {
    auto& [sum, n] = acc[r.density];
    sum += r.improvement_db;
    ++n;
  }
  std::vector<SweepSummary> out;
  for (const auto& [d, v] : acc) out.push_back({d, v.first / v.second});
  return out;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "density,seed,psnr_single,psnr_integral,improvement_db\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::fixed;
  for (const SweepRow& r : rows) {
    os << std::setprecision(2) << r.density << ',' << r.seed << ',' << std::setprecision(6)
       << r.psnr_single << ',' << r.psnr_integral << ',' << r.improvement_db << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

}  // namespace sai::sim
