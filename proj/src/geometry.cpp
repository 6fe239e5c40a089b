#include "sai/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sai/error.hpp"

namespace sai {

namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kMinScale = 1e-9;
constexpr double kMinT = 1e-9;

void check_scales(const FocalSurfaceParams& p) {
  if (!(p.sx >= kMinScale && p.sy >= kMinScale && p.sz >= kMinScale)) {
    throw Error(ErrorCode::DegenerateScale,
                "focal surface scales must be >= 1e-9 (sx=" + std::to_string(p.sx) +
                    ", sy=" + std::to_string(p.sy) + ", sz=" + std::to_string(p.sz) + ")");
  }
}

}  // namespace

void Intrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::InvalidArgument, "principal point outside the image");
  }
}

Intrinsics Intrinsics::centered(int width, int height, double focal) {
  return Intrinsics{focal, focal, width / 2.0, height / 2.0, width, height};
}

Pose Pose::from_matrix(const Mat4& m) {
  Pose pose;
  pose.rotation = m.topLeftCorner<3, 3>();
  pose.translation = m.topRightCorner<3, 1>();
  return pose;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool Pose::is_valid(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tolerance && std::abs(rotation.determinant() - 1.0) <= tolerance;
}

void Pose::validate(double tolerance) const {
  if (!is_valid(tolerance)) {
    throw Error(ErrorCode::PoseInvalid, "rotation is not orthonormal with det +1");
  }
}

void FocalSurfaceParams::validate() const {
  check_scales(*this);
  if (!(z > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "focal surface z must be positive");
  }
  for (double v : {z, tx, ty, rx, ry, rz, sx, sy, sz}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite surface parameter");
  }
}

FocalSurfaceParams FocalSurfaceParams::plane(double depth, double lateral_scale) {
  FocalSurfaceParams p;
  p.sx = lateral_scale;
  p.sy = lateral_scale;
  p.sz = std::min(1e-3, depth / 2.0);
  p.z = depth - p.sz;
  return p;
}

Mat3 rotation_xyz(double rx, double ry, double rz) {
  const Eigen::AngleAxisd ax(rx, Vec3::UnitX());
  const Eigen::AngleAxisd ay(ry, Vec3::UnitY());
  const Eigen::AngleAxisd az(rz, Vec3::UnitZ());
  return (az * ay * ax).toRotationMatrix();
}

std::optional<Projection> try_project_point(const Vec3& p, const Pose& pose,
                                            const Intrinsics& k) {
  const Vec3 c = pose.to_camera(p);
  if (c.z() <= kMinDepth) return std::nullopt;
  return Projection{k.cx + k.fx * c.x() / c.z(), k.cy + k.fy * c.y() / c.z(), c.z()};
}

Projection project_point(const Vec3& p, const Pose& pose, const Intrinsics& k) {
  auto proj = try_project_point(p, pose, k);
  if (!proj) throw Error(ErrorCode::BehindCamera, "point is at or behind the camera plane");
  return *proj;
}

Ray pixel_ray(const Intrinsics& k, const Pose& pose, double u, double v) {
  const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return Ray{pose.translation, (pose.rotation * dir_cam).normalized()};
}

Mat4 surface_to_world(const FocalSurfaceParams& params, const Pose& ref_pose) {
  Mat4 local = Mat4::Identity();
  const Mat3 rot = rotation_xyz(params.rx, params.ry, params.rz);
  local.topLeftCorner<3, 3>() = rot * Vec3(params.sx, params.sy, params.sz).asDiagonal();
  local.topRightCorner<3, 1>() = Vec3(params.tx, params.ty, params.z);
  return ref_pose.matrix() * local;
}

FocalSurface::FocalSurface(const FocalSurfaceParams& params, const Pose& ref_pose) {
  check_scales(params);
  world_from_canonical_ = surface_to_world(params, ref_pose);
  // Inverse of [R*S | t] is [S^-1 R^T | -S^-1 R^T t]; avoids a generic 4x4 inverse.
  const Mat3 rot = ref_pose.rotation * rotation_xyz(params.rx, params.ry, params.rz);
  const Vec3 inv_scale(1.0 / params.sx, 1.0 / params.sy, 1.0 / params.sz);
  const Mat3 lin = inv_scale.asDiagonal() * rot.transpose();
  canonical_from_world_ = Mat4::Identity();
  canonical_from_world_.topLeftCorner<3, 3>() = lin;
  canonical_from_world_.topRightCorner<3, 1>() = -lin * world_from_canonical_.topRightCorner<3, 1>();
}

Vec3 FocalSurface::to_canonical(const Vec3& world) const {
  return canonical_from_world_.topLeftCorner<3, 3>() * world +
         canonical_from_world_.topRightCorner<3, 1>();
}

std::optional<Vec3> FocalSurface::intersect(const Ray& ray) const {
  const Vec3 o = to_canonical(ray.origin);
  const Vec3 d = canonical_from_world_.topLeftCorner<3, 3>() * ray.direction;

  const double a = d.squaredNorm();
  const double b = 2.0 * o.dot(d);
  const double c = o.squaredNorm() - 1.0;
  const double disc = b * b - 4.0 * a * c;
  if (a <= 0.0 || disc < 0.0) return std::nullopt;

  // Stable root pair; t0 <= t1.
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + std::copysign(sq, b));
  double t0 = q / a;
  double t1 = q != 0.0 ? c / q : t0;
  if (t0 > t1) std::swap(t0, t1);

  for (double t : {t0, t1}) {
    if (t <= kMinT) continue;
    if (o.z() + t * d.z() < 0.0) continue;
    return ray.origin + t * ray.direction;
  }
  return std::nullopt;
}

std::optional<Vec3> intersect_surface(const Ray& ray, const FocalSurfaceParams& params,
                                      const Pose& ref_pose) {
  return FocalSurface(params, ref_pose).intersect(ray);
}

}  // namespace sai
