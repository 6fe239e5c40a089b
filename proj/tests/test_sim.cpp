#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sai/error.hpp"
#include "sai/sim.hpp"

using namespace sai;
using namespace sai::sim;

namespace {

SceneConfig small_scene(double density, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.density = density;
  cfg.seed = seed;
  cfg.reference = Intrinsics::centered(160, 120, 125.0);
  return cfg;
}

// Coverage of the reference footprint, sampled through the public lookup
// on a grid finer than the occupancy cells.
double sampled_coverage(const SyntheticScene& s) {
  const SceneConfig& c = s.config();
  const Intrinsics& k = c.reference;
  const double d = c.occ_depth;
  const double x0 = (-0.5 - k.cx) / k.fx * d, x1 = (k.width - 0.5 - k.cx) / k.fx * d;
  const double y0 = (-0.5 - k.cy) / k.fy * d, y1 = (k.height - 0.5 - k.cy) / k.fy * d;
  const int nx = 800, ny = 600;
  std::size_t hit = 0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x = x0 + (i + 0.5) / nx * (x1 - x0), y = y0 + (j + 0.5) / ny * (y1 - y0);
      if (s.occluder_at(x, y)) ++hit;
    }
  return static_cast<double>(hit) / (nx * ny);
}

std::vector<Vec3> centers(const std::vector<Pose>& poses) {
  std::vector<Vec3> c;
  for (const Pose& p : poses) c.push_back(p.translation);
  return c;
}

}  // namespace

TEST_CASE("density extremes") {
  const SyntheticScene empty = generate_scene(small_scene(0.0, 1));
  CHECK(empty.measured_density() == 0.0);
  CHECK(empty.element_count() == 0);
  CHECK(sampled_coverage(empty) == 0.0);

  const SyntheticScene full = generate_scene(small_scene(1.0, 1));
  CHECK(full.measured_density() == 1.0);
  CHECK(sampled_coverage(full) == 1.0);
  const VirtualCamera cam = reference_camera(full.config());
  const Image shadow = full.occluder_shadow(cam);
  for (float v : shadow.data()) CHECK(v == 1.0f);
}

TEST_CASE("density 0.5 lands within two percent") {
  SceneConfig cfg = small_scene(0.5, 7);
  cfg.reference = Intrinsics::centered(640, 480, 500.0);
  const SyntheticScene s = generate_scene(cfg);
  const double measured = sampled_coverage(s);
  CHECK(measured >= 0.48);
  CHECK(measured <= 0.52);
  CHECK(s.measured_density() == doctest::Approx(measured).epsilon(0.02));
}

TEST_CASE("every shape reaches its density deterministically") {
  for (OccluderShape shape :
       {OccluderShape::Disks, OccluderShape::HorizontalBar, OccluderShape::RandomRects}) {
    for (double d : {0.1, 0.4, 0.8}) {
      SceneConfig cfg = small_scene(d, 3);
      cfg.shape = shape;
      const SyntheticScene a = generate_scene(cfg);
      CHECK(std::abs(sampled_coverage(a) - d) <= 0.025);
      const SyntheticScene b = generate_scene(cfg);
      CHECK(a.element_count() == b.element_count());
      CHECK(a.measured_density() == b.measured_density());
    }
  }
  CHECK(occluder_shape_from_string(to_string(OccluderShape::HorizontalBar)) ==
        OccluderShape::HorizontalBar);
}

TEST_CASE("bars span the whole width") {
  SceneConfig cfg = small_scene(0.3, 5);
  cfg.shape = OccluderShape::HorizontalBar;
  const SyntheticScene s = generate_scene(cfg);
  for (double y = -0.3; y <= 0.3; y += 0.0037) {
    const bool left = s.occluder_at(-0.5, y).has_value();
    CHECK(s.occluder_at(0.0, y).has_value() == left);
    CHECK(s.occluder_at(0.5, y).has_value() == left);
  }
}

TEST_CASE("scene validation") {
  CHECK_THROWS_AS(generate_scene(small_scene(1.2, 1)), Error);
  SceneConfig cfg = small_scene(0.3, 1);
  cfg.bg_depth = 0.5;  // in front of the occluders
  CHECK_THROWS_AS(generate_scene(cfg), Error);
}

TEST_CASE("linear trajectories") {
  TrajectorySpec t;
  const auto h = generate_trajectory(t);
  REQUIRE(h.size() == 20);
  CHECK(h.front().translation.x() == doctest::Approx(-0.075));
  CHECK(h.back().translation.x() == doctest::Approx(0.075));
  for (std::size_t i = 1; i < h.size(); ++i) {
    CHECK((h[i].translation - h[i - 1].translation).norm() == doctest::Approx(0.15 / 19));
    CHECK(h[i].translation.y() == 0.0);
    CHECK(h[i].rotation == Mat3::Identity());
  }
  CHECK(trajectory_extent(h).first == doctest::Approx(0.15));
  const std::size_t mid = nearest_to_center(h);
  CHECK((mid == 9 || mid == 10));  // the two middle poses tie

  t.kind = MotionKind::Diagonal;
  t.count = 28;
  const auto d = generate_trajectory(t);
  REQUIRE(d.size() == 28);
  CHECK((d.back().translation - d.front().translation).norm() == doctest::Approx(0.15));
  for (const Vec3& c : centers(d)) CHECK(c.x() == doctest::Approx(c.y()));

  t.kind = MotionKind::Vertical;
  t.count = 5;
  t.sa_width = 0.25;
  CHECK_THROWS_AS(generate_trajectory(t), Error);  // over the vertical limit
  try {
    generate_trajectory(t);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LimitExceeded);
  }
  t.enforce_limits = false;
  CHECK(generate_trajectory(t).size() == 5);

  TrajectorySpec wide;
  wide.sa_width = 0.31;
  CHECK_THROWS_AS(generate_trajectory(wide), Error);
}

TEST_CASE("planar grid and rotation trajectories") {
  TrajectorySpec g;
  g.kind = MotionKind::PlanarGrid;
  g.count = 24;
  const auto grid = generate_trajectory(g);
  CHECK(grid.size() == 24);
  const auto [hx, vy] = trajectory_extent(grid);
  CHECK(hx == doctest::Approx(0.15));
  CHECK(vy == doctest::Approx(0.10));

  TrajectorySpec r;
  r.kind = MotionKind::Rotation;
  r.count = 26;
  const auto rot = generate_trajectory(r);
  REQUIRE(rot.size() == 26);
  CHECK((rot.back().translation - rot.front().translation).norm() == doctest::Approx(0.15));
  const Vec3 pivot(0, 0, -r.pivot_offset);
  for (const Pose& p : rot) {
    CHECK((p.translation - pivot).norm() == doctest::Approx(r.pivot_offset));
    // Optical axis passes through the pivot.
    const Vec3 axis = p.rotation.col(2);
    CHECK((pivot - p.translation).normalized().dot(axis) == doctest::Approx(-1.0));
    CHECK(p.is_valid());
  }
}

TEST_CASE("jitter is seeded") {
  TrajectorySpec t;
  t.jitter_sigma = 0.002;
  t.jitter_seed = 4;
  const auto a = generate_trajectory(t), b = generate_trajectory(t);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].translation == b[i].translation);
  t.jitter_seed = 5;
  CHECK(generate_trajectory(t)[0].translation != a[0].translation);
}

TEST_CASE("rendered views show parallax of the occluder plane") {
  SceneConfig cfg = small_scene(0.3, 2);
  const SyntheticScene s = generate_scene(cfg);
  // A point on the occluder plane shifts by f * b / depth pixels between
  // two cameras with baseline b.
  const Intrinsics& k = cfg.reference;
  const double b = 0.02;
  const Vec3 p(0.013, -0.021, cfg.occ_depth);
  const Projection a = project_point(p, Pose::identity(), k);
  Pose moved;
  moved.translation.x() = b;
  const Projection c = project_point(p, moved, k);
  CHECK(a.u - c.u == doctest::Approx(k.fx * b / cfg.occ_depth));

  const Ray r0 = pixel_ray(k, Pose::identity(), a.u, a.v);
  const Ray r1 = pixel_ray(k, moved, c.u, c.v);
  bool h0 = false, h1 = false;
  const Rgb c0 = s.trace(r0, &h0), c1 = s.trace(r1, &h1);
  CHECK(h0 == h1);
  CHECK(c0.r == c1.r);
  CHECK(c0.g == c1.g);
}

TEST_CASE("recovery metrics") {
  SceneConfig cfg = small_scene(0.0, 1);
  cfg.reference = Intrinsics::centered(640, 480, 500.0);
  const SyntheticScene s = generate_scene(cfg);
  const VirtualCamera vc = reference_camera(cfg);
  TrajectorySpec t;
  t.count = 10;
  const CaptureSession session = render_views(s, generate_trajectory(t), cfg.reference);
  const IntegralImage img =
      render_integral(session, vc, FocalSurfaceParams::plane(cfg.bg_depth), Pose::identity());
  const RecoveryMetrics m = evaluate_recovery(img, s, vc);
  CHECK(m.psnr_bg >= 45.0);
  CHECK(m.residual_occ == 0.0);
  CHECK(m == evaluate_recovery(img, s, vc));

  // The conventional view of an empty scene is the ground truth.
  const RecoveryMetrics own = evaluate_recovery(conventional_view(s, vc), s, vc);
  CHECK(own.psnr_bg == kMaxPsnr);
  CHECK(own.valid_fraction == 1.0);

  CHECK(psnr(0.0) == kMaxPsnr);
  CHECK(psnr(1e-4) == doctest::Approx(40.0));
}

TEST_CASE("integrating views suppresses occluder residual") {
  // Shadowing is taken from the central view, so even counts (no central
  // camera) come out lower than odd ones; beyond N = 1 the residual is not
  // monotone, it settles towards the continuous-aperture value.
  const SceneConfig cfg = small_scene(0.3, 9);
  const SyntheticScene s = generate_scene(cfg);
  const VirtualCamera vc = reference_camera(cfg);
  const RecoveryReference ref = make_reference(s, vc);
  auto residual = [&](int n) {
    TrajectorySpec t;
    t.count = n;
    t.sa_width = n == 1 ? 0.0 : 0.15;
    const CaptureSession session = render_views(s, generate_trajectory(t), cfg.reference);
    return evaluate_recovery(
               render_integral(session, vc, FocalSurfaceParams::plane(cfg.bg_depth), Pose::identity()),
               ref)
        .residual_occ;
  };
  const double single = residual(1);
  for (int n : {2, 3, 5, 16, 20}) CHECK(residual(n) < 0.7 * single);
  CHECK(residual(20) == doctest::Approx(residual(16)).epsilon(0.03));
}

TEST_CASE("density sweep output") {
  TrajectorySpec t;
  t.count = 8;
  SweepOptions opts;
  opts.seeds = {1, 2};
  const auto rows = density_sweep({0.2, 0.5}, t, small_scene(0, 0),
                                  FocalSurfaceParams::plane(5.0), opts);
  REQUIRE(rows.size() == 4);
  for (const SweepRow& r : rows) {
    CHECK(r.improvement_db == doctest::Approx(r.psnr_integral - r.psnr_single));
    CHECK(r.improvement_db > 0.0);
  }
  opts.workers = 3;
  const auto again = density_sweep({0.2, 0.5}, t, small_scene(0, 0),
                                   FocalSurfaceParams::plane(5.0), opts);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].psnr_integral == again[i].psnr_integral);

  const auto summary = summarize(rows);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].mean_improvement_db ==
        doctest::Approx((rows[0].improvement_db + rows[1].improvement_db) / 2));

  std::ostringstream os;
  write_sweep_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "density,seed,psnr_single,psnr_integral,improvement_db");
  int count = 0;
  while (std::getline(is, line)) ++count;
  CHECK(count == 4);

  CHECK_THROWS_AS(density_sweep({0.5, 0.2}, t, small_scene(0, 0), FocalSurfaceParams::plane(5.0)),
                  Error);
}
