#include "sai/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <thread>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "sai/error.hpp"

namespace sai {

namespace {

constexpr int kTileRows = 4;

// Projections this far (pixels) outside the sample grid are clamped onto it.
constexpr float kEdgeSlack = 1e-3f;

// Per-capture projection folded into one affine map: h = M * P + m, with
// (u, v) = (h.x / h.z, h.y / h.z) and depth = h.z.
struct CaptureProjector {
  double m[9];
  double t[3];
  const Image* image;
  const Image* alpha;
};

CaptureProjector make_projector(const Capture& cap) {
  const Intrinsics& k = cap.intrinsics;
  Mat3 kmat;
  kmat << k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0;
  const Mat3 rt = cap.pose.rotation.transpose();
  const Mat3 mm = kmat * rt;
  const Vec3 tt = -mm * cap.pose.translation;
  CaptureProjector p{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.m[r * 3 + c] = mm(r, c);
    p.t[r] = tt(r);
  }
  p.image = &cap.image;
  p.alpha = cap.alpha ? &*cap.alpha : nullptr;
  return p;
}

struct TileBuffers {
  std::vector<double> px, py, pz;
  std::vector<float> fx, fy, fz;  // focal points, single precision for projection
  std::vector<std::int32_t> index;  // top-left bilinear tap, -1 when not sampled
  std::vector<float> wx, wy;
  std::vector<unsigned char> hit;
  std::vector<double> acc;  // channels + 1 (weight) per pixel
};

// Projects every tile pixel into one capture and precomputes the bilinear
// footprint (top-left pixel index and fractional offsets). Kept branch-free
// so the compiler can vectorize it; invalid projections get index -1.
// Requires images of at least 2 x 2 pixels.
struct ProjectionCoeffs {
  float m[9];
  float t[3];
  int w, h;
};

void project_points(const ProjectionCoeffs& k, const float* __restrict px,
                    const float* __restrict py, const float* __restrict pz,
                    const unsigned char* __restrict hit, std::int32_t* __restrict index,
                    float* __restrict wx, float* __restrict wy, std::size_t n) {
  const float m0 = k.m[0], m1 = k.m[1], m2 = k.m[2], m3 = k.m[3], m4 = k.m[4], m5 = k.m[5],
              m6 = k.m[6], m7 = k.m[7], m8 = k.m[8];
  const float t0 = k.t[0], t1 = k.t[1], t2 = k.t[2];
  const int w = k.w;
  const int h = k.h;
  const float umax = static_cast<float>(w - 1) + kEdgeSlack;
  const float vmax = static_cast<float>(h - 1) + kEdgeSlack;
  const float ulim = static_cast<float>(w - 1);
  const float vlim = static_cast<float>(h - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const float X = px[i], Y = py[i], Z = pz[i];
    const float hz = m6 * X + m7 * Y + m8 * Z + t2;
    const float inv = 1.0f / hz;
    const float u = (m0 * X + m1 * Y + m2 * Z + t0) * inv;
    const float v = (m3 * X + m4 * Y + m5 * Z + t1) * inv;
    const bool ok = (hit[i] != 0) & (hz > 1e-6f) & (u >= -kEdgeSlack) & (v >= -kEdgeSlack) &
                    (u <= umax) & (v <= vmax);
    const float uc = std::min(std::max(u, 0.0f), ulim);
    const float vc = std::min(std::max(v, 0.0f), vlim);
    const std::int32_t x0 = std::min(static_cast<std::int32_t>(uc), w - 2);
    const std::int32_t y0 = std::min(static_cast<std::int32_t>(vc), h - 2);
    wx[i] = uc - static_cast<float>(x0);
    wy[i] = vc - static_cast<float>(y0);
    index[i] = ok ? y0 * w + x0 : -1;
  }
}

void project_tile(const CaptureProjector& proj, TileBuffers& buf, std::size_t n) {
  ProjectionCoeffs k{};
  for (int i = 0; i < 9; ++i) k.m[i] = static_cast<float>(proj.m[i]);
  for (int i = 0; i < 3; ++i) k.t[i] = static_cast<float>(proj.t[i]);
  k.w = proj.image->width();
  k.h = proj.image->height();
  project_points(k, buf.fx.data(), buf.fy.data(), buf.fz.data(), buf.hit.data(), buf.index.data(),
                 buf.wx.data(), buf.wy.data(), n);
}

template <int C>
inline void bilinear_at(const float* data, std::size_t row_stride, std::int32_t pixel, float fx,
                        float fy, float* out) {
  const float* p = data + static_cast<std::size_t>(pixel) * C;
  const float w00 = (1.0f - fx) * (1.0f - fy);
  const float w10 = fx * (1.0f - fy);
  const float w01 = (1.0f - fx) * fy;
  const float w11 = fx * fy;
  for (int c = 0; c < C; ++c) {
    out[c] = w00 * p[c] + w10 * p[C + c] + w01 * p[row_stride + c] + w11 * p[row_stride + C + c];
  }
}

template <int C, bool Alpha>
void accumulate(const CaptureProjector& proj, TileBuffers& buf, std::size_t n) {
  const float* data = proj.image->data().data();
  const std::size_t stride = static_cast<std::size_t>(proj.image->width()) * C;
  const float* alpha_data = Alpha ? proj.alpha->data().data() : nullptr;
  const std::size_t alpha_stride = static_cast<std::size_t>(proj.image->width());
  const std::int32_t* index = buf.index.data();
  const float* wx = buf.wx.data();
  const float* wy = buf.wy.data();
  double* acc = buf.acc.data();
  float color[C];
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t pixel = index[i];
    if (pixel < 0) continue;
    double* a = acc + i * (C + 1);
    if constexpr (Alpha) {
      float alpha;
      bilinear_at<1>(alpha_data, alpha_stride, pixel, wx[i], wy[i], &alpha);
      if (alpha <= 0.0f) continue;
      bilinear_at<C>(data, stride, pixel, wx[i], wy[i], color);
      const double wgt = alpha;
      for (int c = 0; c < C; ++c) a[c] += wgt * color[c];
      a[C] += wgt;
    } else {
#if defined(__SSE2__)
      if constexpr (C == 3) {
        // Four-lane taps read one float past each RGB triple; Image pads its
        // storage so the last pixel stays in bounds.
        const float fx = wx[i], fy = wy[i];
        const float* p = data + static_cast<std::size_t>(pixel) * 3;
        const __m128 r0 = _mm_add_ps(_mm_mul_ps(_mm_loadu_ps(p), _mm_set1_ps((1.0f - fx) * (1.0f - fy))),
                                     _mm_mul_ps(_mm_loadu_ps(p + 3), _mm_set1_ps(fx * (1.0f - fy))));
        const __m128 r1 = _mm_add_ps(_mm_mul_ps(_mm_loadu_ps(p + stride), _mm_set1_ps((1.0f - fx) * fy)),
                                     _mm_mul_ps(_mm_loadu_ps(p + stride + 3), _mm_set1_ps(fx * fy)));
        const __m128 rgb = _mm_add_ps(r0, r1);
        const __m128d rg = _mm_cvtps_pd(rgb);
        const __m128d b1 = _mm_move_sd(_mm_set1_pd(1.0), _mm_cvtps_pd(_mm_movehl_ps(rgb, rgb)));
        _mm_storeu_pd(a, _mm_add_pd(_mm_loadu_pd(a), rg));
        _mm_storeu_pd(a + 2, _mm_add_pd(_mm_loadu_pd(a + 2), b1));
        continue;
      }
#endif
      bilinear_at<C>(data, stride, pixel, wx[i], wy[i], color);
      for (int c = 0; c < C; ++c) a[c] += color[c];
      a[C] += 1.0;
    }
  }
}

void render_tile(const std::vector<CaptureProjector>& projectors, int channels,
                 const VirtualCamera& vcam, const FocalSurface& surface, const PixelRect& rect,
                 int y_begin, int y_end, IntegralImage& out, TileBuffers& buf) {
  const int w = rect.w;
  const std::size_t n = static_cast<std::size_t>(w) * (y_end - y_begin);
  const int stride = channels + 1;
  buf.px.resize(n);
  buf.py.resize(n);
  buf.pz.resize(n);
  buf.fx.assign(n, 0.0f);
  buf.fy.assign(n, 0.0f);
  buf.fz.assign(n, 0.0f);
  buf.index.resize(n);
  buf.wx.resize(n);
  buf.wy.resize(n);
  buf.hit.assign(n, 0);
  buf.acc.assign(n * stride, 0.0);

  for (int y = y_begin; y < y_end; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y - y_begin) * w + x;
      const Ray ray = pixel_ray(vcam.intrinsics, vcam.pose, rect.x + x, y);
      if (auto p = surface.intersect(ray)) {
        buf.px[i] = p->x();
        buf.py[i] = p->y();
        buf.pz[i] = p->z();
        buf.fx[i] = static_cast<float>(p->x());
        buf.fy[i] = static_cast<float>(p->y());
        buf.fz[i] = static_cast<float>(p->z());
        buf.hit[i] = 1;
      }
    }
  }

  for (const CaptureProjector& proj : projectors) {
    project_tile(proj, buf, n);
    if (channels == 3) {
      proj.alpha ? accumulate<3, true>(proj, buf, n) : accumulate<3, false>(proj, buf, n);
    } else {
      proj.alpha ? accumulate<1, true>(proj, buf, n) : accumulate<1, false>(proj, buf, n);
    }
  }

  for (int y = y_begin; y < y_end; ++y) {
    float* crow = out.color.row(y);
    float* wrow = out.coverage.row(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y - y_begin) * w + x;
      const double* a = &buf.acc[i * stride];
      const double weight = a[channels];
      const int ox = rect.x + x;
      wrow[ox] = static_cast<float>(weight);
      if (weight < kMinCoverage) continue;
      for (int c = 0; c < channels; ++c) {
        crow[ox * channels + c] = static_cast<float>(std::clamp(a[c] / weight, 0.0, 1.0));
      }
    }
  }
}

}  // namespace

void CaptureSession::validate() const {
  if (captures.empty()) throw Error(ErrorCode::EmptySession, "session has no captures");
  const int c0 = captures.front().image.channels();
  if (c0 != 1 && c0 != 3) {
    throw Error(ErrorCode::ChannelMismatch, "captures must have 1 or 3 channels");
  }
  for (std::size_t i = 0; i < captures.size(); ++i) {
    const Capture& cap = captures[i];
    if (cap.image.channels() != c0) {
      throw Error(ErrorCode::ChannelMismatch,
                  "capture " + std::to_string(i) + " has " +
                      std::to_string(cap.image.channels()) + " channels, expected " +
                      std::to_string(c0));
    }
    if (cap.image.width() != cap.intrinsics.width || cap.image.height() != cap.intrinsics.height) {
      throw Error(ErrorCode::InvalidArgument,
                  "capture " + std::to_string(i) + " image size does not match intrinsics");
    }
    if (cap.alpha && (cap.alpha->width() != cap.image.width() ||
                      cap.alpha->height() != cap.image.height() || cap.alpha->channels() != 1)) {
      throw Error(ErrorCode::InvalidArgument,
                  "capture " + std::to_string(i) + " alpha plane does not match image");
    }
  }
}

std::size_t IntegralImage::valid_count() const {
  std::size_t n = 0;
  for (float c : coverage.data()) n += c >= kMinCoverage ? 1 : 0;
  return n;
}

IntegralImage render_subset(const CaptureSession& session, const std::vector<std::size_t>& indices,
                            const VirtualCamera& vcam, const FocalSurfaceParams& surf,
                            const Pose& ref_pose, const RenderOptions& options) {
  session.validate();
  vcam.intrinsics.validate();
  surf.validate();
  const FocalSurface surface(surf, ref_pose);

  const int width = vcam.intrinsics.width;
  const int height = vcam.intrinsics.height;
  const int channels = session.channels();

  PixelRect rect{0, 0, width, height};
  if (options.window) {
    const PixelRect& r = *options.window;
    const int x0 = std::clamp(r.x, 0, width), y0 = std::clamp(r.y, 0, height);
    const int x1 = std::clamp(r.x + r.w, 0, width), y1 = std::clamp(r.y + r.h, 0, height);
    rect = PixelRect{x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
  }

  std::vector<CaptureProjector> projectors;
  projectors.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= session.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "capture index " + std::to_string(idx) +
                                                  " out of range [0, " +
                                                  std::to_string(session.size()) + ")");
    }
    projectors.push_back(make_projector(session.captures[idx]));
  }

  IntegralImage out{Image(width, height, channels), Image(width, height, 1), surf};
  if (rect.w == 0 || rect.h == 0) return out;

  const int tiles = (rect.h + kTileRows - 1) / kTileRows;
  int workers = options.workers > 0 ? options.workers
                                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, tiles);

  std::atomic<int> next{0};
  auto run = [&] {
    TileBuffers buf;
    for (int t = next.fetch_add(1); t < tiles; t = next.fetch_add(1)) {
      const int y0 = rect.y + t * kTileRows;
      const int y1 = std::min(y0 + kTileRows, rect.y + rect.h);
      render_tile(projectors, channels, vcam, surface, rect, y0, y1, out, buf);
    }
  };

  if (workers == 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(run);
  }
  return out;
}

IntegralImage render_integral(const CaptureSession& session, const VirtualCamera& vcam,
                              const FocalSurfaceParams& surf, const Pose& ref_pose,
                              const RenderOptions& options) {
  if (session.empty()) throw Error(ErrorCode::EmptySession, "session has no captures");
  std::vector<std::size_t> all(session.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return render_subset(session, all, vcam, surf, ref_pose, options);
}

IntegralImage render_pinhole(const CaptureSession& session, std::size_t index,
                             const VirtualCamera& vcam, const FocalSurfaceParams& surf,
                             const Pose& ref_pose, const RenderOptions& options) {
  if (session.empty()) throw Error(ErrorCode::EmptySession, "session has no captures");
  if (index >= session.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "pinhole index " + std::to_string(index) +
                                                " out of range [0, " +
                                                std::to_string(session.size()) + ")");
  }
  return render_subset(session, {index}, vcam, surf, ref_pose, options);
}

double blur_footprint(double surf_depth, double occ_depth, double sa_width, const Intrinsics& k) {
  if (!(occ_depth > 0.0 && occ_depth < surf_depth)) {
    throw Error(ErrorCode::BadGeometry, "blur footprint needs 0 < occluder depth < surface depth");
  }
  if (sa_width < 0.0) throw Error(ErrorCode::BadGeometry, "negative aperture width");
  return k.fx * sa_width * (surf_depth - occ_depth) / (occ_depth * surf_depth);
}

}  // namespace sai
