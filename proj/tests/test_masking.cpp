#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sai/error.hpp"
#include "sai/masking.hpp"
#include "support.hpp"

using namespace sai;

namespace {

float vdvi_of(float r, float g, float b) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = r;
  img.at(0, 0, 1) = g;
  img.at(0, 0, 2) = b;
  return compute_vdvi(img).at(0, 0);
}

MaskConfig cfg(double lb, double ub, double t) {
  MaskConfig m;
  m.source = MaskSource::Vdvi;
  m.lb = lb;
  m.ub = ub;
  m.t = t;
  return m;
}

CaptureSession rgb_session(int n) {
  CaptureSession s;
  const Intrinsics k = Intrinsics::centered(16, 12, 20.0);
  for (int i = 0; i < n; ++i) {
    s.captures.push_back({testing::random_image(16, 12, 3, 90 + i), Pose::identity(), k, {}, {}});
  }
  return s;
}

}  // namespace

TEST_CASE("VDVI examples and extremes") {
  CHECK(vdvi_of(0, 1, 0) == 1.0f);
  CHECK(vdvi_of(1, 0, 0) == -1.0f);
  CHECK(vdvi_of(0, 0, 1) == -1.0f);
  CHECK(vdvi_of(0.2f, 0.6f, 0.2f) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(vdvi_of(0, 0, 0) == 0.0f);
  for (float g : {0.01f, 0.3f, 1.0f}) CHECK(vdvi_of(g, g, g) == 0.0f);
  CHECK_THROWS_AS(compute_vdvi(Image(2, 2, 1)), Error);
}

TEST_CASE("property: VDVI stays within [-1, 1] and matches the formula") {
  const Image img = testing::random_image(50, 40, 3, 3);
  const Image v = compute_vdvi(img);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 50; ++x) {
      const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
      CHECK(v.at(x, y) >= -1.0f);
      CHECK(v.at(x, y) <= 1.0f);
      CHECK(v.at(x, y) == doctest::Approx((2 * g - r - b) / (2 * g + r + b)).epsilon(1e-5));
    }
}

TEST_CASE("alpha ramp examples and endpoints") {
  const MaskConfig m = cfg(0.0, 0.1, 0.05);
  CHECK(alpha_from_mask(-0.5, m) == 1.0);
  CHECK(alpha_from_mask(0.2, m) == 0.0);
  CHECK(alpha_from_mask(0.05, m) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(alpha_from_mask(0.0, m) == 1.0);
  CHECK(alpha_from_mask(0.1, m) == 0.0);

  const MaskConfig step = cfg(0.3, 0.3, 0.3);
  CHECK(alpha_from_mask(0.3, step) == 1.0);
  CHECK(alpha_from_mask(0.3000001, step) == 0.0);
}

TEST_CASE("property: alpha is monotone and continuous") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    double lb = u(rng), ub = u(rng);
    if (lb > ub) std::swap(lb, ub);
    const MaskConfig m = cfg(lb, ub, 0.5 * (lb + ub));
    double prev = 2.0;
    for (double v = -1.0; v <= 1.0; v += 0.001) {
      const double a = alpha_from_mask(v, m);
      CHECK(a <= prev);
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      if (ub - lb > 0.01 && prev <= 1.0) CHECK(prev - a <= 0.001 / (ub - lb) + 1e-9);
      prev = a;
    }
  }
}

TEST_CASE("config validation and the default band") {
  CHECK_THROWS_AS(cfg(0.2, 0.1, 0.15).validate(), Error);
  CHECK_THROWS_AS(cfg(0.0, 0.1, 0.2).validate(), Error);
  const MaskConfig band = MaskConfig::around(MaskSource::Vdvi, 0.115);
  CHECK(band.lb == doctest::Approx(0.065));
  CHECK(band.ub == doctest::Approx(0.165));
  CHECK_NOTHROW(band.validate());
  MaskConfig ext;
  ext.source = MaskSource::External;
  CHECK_THROWS_AS(ext.validate(), Error);  // needs a channel name
  CHECK(mask_source_from_string(to_string(MaskSource::Vdvi)) == MaskSource::Vdvi);
}

TEST_CASE("green pixels are masked out") {
  CaptureSession s = rgb_session(2);
  s.captures[0].image.at(3, 4, 0) = 0;
  s.captures[0].image.at(3, 4, 1) = 1;
  s.captures[0].image.at(3, 4, 2) = 0;
  const CaptureSession m = build_alpha_masks(s, cfg(0.0, 0.1, 0.05));
  REQUIRE(m.captures[0].alpha);
  CHECK(m.captures[0].alpha->at(3, 4) == 0.0f);
  CHECK_FALSE(s.captures[0].alpha.has_value());  // input untouched
  // Every alpha equals the ramp applied to the pixel's VDVI.
  const Image v = compute_vdvi(s.captures[1].image);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x)
      CHECK(m.captures[1].alpha->at(x, y) ==
            doctest::Approx(alpha_from_mask(v.at(x, y), cfg(0.0, 0.1, 0.05))).epsilon(1e-6));

  const CaptureSession cleared = build_alpha_masks(m, MaskConfig{});
  for (const auto& c : cleared.captures) CHECK_FALSE(c.alpha.has_value());
}

TEST_CASE("unavailable mask sources") {
  CaptureSession nir;
  const Intrinsics k = Intrinsics::centered(8, 8, 10.0);
  nir.captures.push_back({Image(8, 8, 1, 0.5f), Pose::identity(), k, {}, {}});
  try {
    build_alpha_masks(nir, cfg(0.0, 0.1, 0.05));
    FAIL("expected SourceUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SourceUnavailable);
  }

  CaptureSession s = rgb_session(2);
  MaskConfig ext;
  ext.source = MaskSource::External;
  ext.channel = "thermal";
  s.captures[0].aux["thermal"] = Image(16, 12, 1, -0.5f);
  // Capture 1 lacks the plane: nothing may be modified.
  CHECK_THROWS_AS(apply_alpha_masks(s, ext), Error);
  CHECK_FALSE(s.captures[0].alpha.has_value());

  s.captures[1].aux["thermal"] = Image(16, 12, 1, 0.5f);
  apply_alpha_masks(s, ext);
  CHECK(s.captures[0].alpha->at(0, 0) == 1.0f);
  CHECK(s.captures[1].alpha->at(0, 0) == 0.0f);
}
