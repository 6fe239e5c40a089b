#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace sai {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole intrinsics in pixels. Integer pixel coordinates address pixel
/// centers, so (cx, cy) = (320, 240) is the center of pixel (320, 240).
struct Intrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// Throws InvalidArgument when focal lengths or the principal point are
  /// out of range.
  void validate() const;

  /// Square-pixel intrinsics with the principal point at the image center.
  static Intrinsics centered(int width, int height, double focal);

  bool operator==(const Intrinsics&) const = default;
};

/// Camera-to-world rigid transform. Camera frame is x-right, y-down,
/// z-forward.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  Mat4 matrix() const;

  /// Camera center in world coordinates.
  const Vec3& center() const { return translation; }

  bool is_valid(double tolerance = 1e-6) const;
  void validate(double tolerance = 1e-6) const;

  Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 to_camera(const Vec3& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }
};

/// Parameters of the synthetic focal surface: a unit half-sphere (apex
/// toward +z) that is scaled, rotated (rz*ry*rx), then translated by
/// (tx, ty, z) in the reference frame. Angles are radians.
struct FocalSurfaceParams {
  double z = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
  bool grid = false;

  void validate() const;

  /// Near-planar surface at the given depth: large lateral scales flatten the
  /// dome, and z + sz = depth puts its apex on the plane.
  static FocalSurfaceParams plane(double depth, double lateral_scale = 1e4);

  bool operator==(const FocalSurfaceParams&) const = default;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Rotation about the x, y and z axes composed as Rz * Ry * Rx.
Mat3 rotation_xyz(double rx, double ry, double rz);

/// Throws BehindCamera when the point lies at or behind the image plane.
Projection project_point(const Vec3& p, const Pose& pose, const Intrinsics& k);

/// Non-throwing variant for inner loops; nullopt when behind the camera.
std::optional<Projection> try_project_point(const Vec3& p, const Pose& pose,
                                            const Intrinsics& k);

Ray pixel_ray(const Intrinsics& k, const Pose& pose, double u, double v);

/// Maps canonical half-sphere coordinates to world coordinates.
Mat4 surface_to_world(const FocalSurfaceParams& params, const Pose& ref_pose);

/// Ray / focal-surface intersection. Throws DegenerateScale for scales
/// below 1e-9.
std::optional<Vec3> intersect_surface(const Ray& ray, const FocalSurfaceParams& params,
                                      const Pose& ref_pose);

/// Precomputed focal surface for repeated intersection queries.
class FocalSurface {
 public:
  FocalSurface(const FocalSurfaceParams& params, const Pose& ref_pose);

  std::optional<Vec3> intersect(const Ray& ray) const;

  const Mat4& world_from_canonical() const { return world_from_canonical_; }
  const Mat4& canonical_from_world() const { return canonical_from_world_; }
  Vec3 to_canonical(const Vec3& world) const;

 private:
  Mat4 world_from_canonical_;
  Mat4 canonical_from_world_;
};

}  // namespace sai
