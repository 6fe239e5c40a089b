#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sai/autofocus.hpp"
#include "sai/error.hpp"
#include "sai/sim.hpp"

using namespace sai;

namespace {

IntegralImage full(const Image& color) {
  IntegralImage img;
  img.color = color;
  img.coverage = Image(color.width(), color.height(), 1, 1.0f);
  return img;
}

Image step_edge(int w, int h, float delta) {
  Image img(w, h, 1, 0.2f);
  for (int y = 0; y < h; ++y)
    for (int x = w / 2; x < w; ++x) img.at(x, y) = 0.2f + delta;
  return img;
}

struct SimFixture {
  sim::SceneConfig cfg;
  CaptureSession session;

  explicit SimFixture(std::uint64_t seed, double density = 0.3) {
    cfg.seed = seed;
    cfg.density = density;
    cfg.reference = Intrinsics::centered(320, 240, 250.0);
    sim::TrajectorySpec t;
    t.count = 20;
    session = sim::render_views(sim::generate_scene(cfg), sim::generate_trajectory(t), cfg.reference);
  }
};

}  // namespace

TEST_CASE("metric of a constant region is zero") {
  const IntegralImage img = full(Image(32, 32, 3, 0.4f));
  CHECK(focus_metric(img, RoI{4, 4, 20, 20}) == 0.0);
}

TEST_CASE("metric is quadratic in edge height") {
  const RoI roi{8, 8, 48, 48};
  const double a = focus_metric(full(step_edge(64, 64, 0.2f)), roi);
  const double b = focus_metric(full(step_edge(64, 64, 0.4f)), roi);
  REQUIRE(a > 0.0);
  CHECK(b / a == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("RoI validation and coverage requirement") {
  CHECK_THROWS_AS(RoI({0, 0, 7, 9}).validate(64, 64), Error);     // 63 pixels
  CHECK_THROWS_AS(RoI({60, 0, 8, 8}).validate(64, 64), Error);    // sticks out
  CHECK_NOTHROW(RoI({56, 56, 8, 8}).validate(64, 64));
  IntegralImage img = full(step_edge(64, 64, 0.5f));
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 40; ++x) img.coverage.at(x, y) = 0.0f;
  try {
    focus_metric(img, RoI{0, 0, 64, 64});
    FAIL("expected InsufficientCoverage");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCoverage);
  }
}

TEST_CASE("simulator: metric peaks at the background depth") {
  const SimFixture f(1);
  const VirtualCamera vc = sim::reference_camera(f.cfg);
  const RoI roi = RoI::centered(320, 240, 0.5);
  const auto metric_at = [&](double z) {
    return focus_metric(render_integral(f.session, vc, FocalSurfaceParams::plane(z), Pose::identity()), roi);
  };
  const double at_truth = metric_at(5.0);
  CHECK(at_truth > metric_at(2.5));
  CHECK(at_truth > metric_at(10.0));
}

TEST_CASE("simulator: autofocus finds the background") {
  for (std::uint64_t seed : {1, 2}) {
    const SimFixture f(seed);
    const VirtualCamera vc = sim::reference_camera(f.cfg);
    const RoI roi = RoI::centered(320, 240, 0.5);
    const AutofocusResult r =
        autofocus_depth(f.session, vc, roi, 2.5, 10.0, FocalSurfaceParams::plane(5.0), Pose::identity());
    CHECK(r.z == doctest::Approx(5.0).epsilon(0.02));
    CHECK(r.z >= 2.5);
    CHECK(r.z <= 10.0);
    CHECK(r.samples.size() >= 32);

    // Deterministic, and invariant to brightness scaling.
    const AutofocusResult again =
        autofocus_depth(f.session, vc, roi, 2.5, 10.0, FocalSurfaceParams::plane(5.0), Pose::identity());
    CHECK(again.z == r.z);
    CaptureSession dim = f.session;
    for (auto& c : dim.captures)
      for (float& v : c.image.data()) v *= 0.5f;
    const AutofocusResult scaled =
        autofocus_depth(dim, vc, roi, 2.5, 10.0, FocalSurfaceParams::plane(5.0), Pose::identity());
    CHECK(scaled.z == doctest::Approx(r.z).epsilon(1e-3));
  }
}

TEST_CASE("result stays inside the bracket") {
  const SimFixture f(3);
  const VirtualCamera vc = sim::reference_camera(f.cfg);
  const RoI roi = RoI::centered(320, 240, 0.5);
  // The background lies outside the bracket: the answer is clamped to it.
  const AutofocusResult r =
      autofocus_depth(f.session, vc, roi, 1.5, 3.0, FocalSurfaceParams::plane(5.0), Pose::identity());
  CHECK(r.z >= 1.5);
  CHECK(r.z <= 3.0);
}

TEST_CASE("textureless scene has no contrast") {
  CaptureSession s;
  const Intrinsics k = Intrinsics::centered(64, 48, 60.0);
  for (int i = 0; i < 4; ++i) {
    Pose p;
    p.translation.x() = 0.01 * i;
    s.captures.push_back({Image(64, 48, 3, 1.0f), p, k, {}, {}});
  }
  try {
    autofocus_depth(s, {k, Pose::identity()}, RoI::centered(64, 48, 0.5), 1.0, 10.0,
                    FocalSurfaceParams::plane(2.0), Pose::identity());
    FAIL("expected NoContrast");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoContrast);
  }
}
