#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sai/engine.hpp"

namespace sai::sim {

enum class OccluderShape { Disks, HorizontalBar, RandomRects };
enum class OccluderPalette { Foliage, Gray };

std::string to_string(OccluderShape shape);
OccluderShape occluder_shape_from_string(const std::string& name);

/// Two-plane scene: a textured background plane at z = bg_depth and a layer
/// of opaque occluders at z = occ_depth, both fronto-parallel to the
/// reference camera (identity pose).
struct SceneConfig {
  double occ_depth = 1.0;
  double bg_depth = 5.0;
  double density = 0.3;
  OccluderShape shape = OccluderShape::Disks;
  OccluderPalette palette = OccluderPalette::Foliage;
  std::uint64_t seed = 1;

  /// Camera whose frustum footprint on the occluder plane defines density.
  Intrinsics reference = Intrinsics::centered(640, 480, 500.0);
  /// Occluders are also laid out this far (meters) beyond the footprint so
  /// that shifted views see the same statistics.
  double margin = 0.35;
  /// Occupancy grid resolution on the occluder plane (meters per cell).
  double cell = 0.001;

  double disk_radius_min = 0.01;
  double disk_radius_max = 0.03;
  double bar_height_min = 0.02;
  double bar_height_max = 0.05;
  double rect_size_min = 0.01;
  double rect_size_max = 0.06;

  /// Feature sizes (meters) of the two value-noise octaves on the background.
  double texture_coarse = 0.12;
  double texture_fine = 0.05;

  void validate() const;
};

struct Rgb {
  float r = 0.0f;
  float g = 0.0f;
  float b = 0.0f;
};

class SyntheticScene {
 public:
  explicit SyntheticScene(SceneConfig config);

  const SceneConfig& config() const { return config_; }

  /// Fraction of the reference footprint on the occluder plane covered by
  /// occluders.
  double measured_density() const { return measured_density_; }
  std::size_t element_count() const { return colors_.size(); }

  /// Occluder color at occluder-plane coordinates, nullopt where open.
  std::optional<Rgb> occluder_at(double x, double y) const;
  Rgb background_at(double x, double y) const;

  /// Radiance along a ray: the occluder if it is hit first, else the
  /// background. `hit_occluder` reports which.
  Rgb trace(const Ray& ray, bool* hit_occluder = nullptr) const;
  Rgb trace_background(const Ray& ray) const;

  /// Background-only render of the camera (2x2 supersampled).
  Image ground_truth(const VirtualCamera& cam) const;

  /// 1 where any supersample of the pixel hits an occluder, else 0.
  Image occluder_shadow(const VirtualCamera& cam) const;

 private:
  friend SyntheticScene generate_scene(const SceneConfig& cfg);

  std::uint32_t cell_id(double x, double y) const;
  double lattice_value(std::int64_t i, std::int64_t j, std::uint64_t salt) const;
  double value_noise(double x, double y, int octave) const;
  void build_noise_tables();

  struct NoiseTable {
    double scale = 1.0;
    std::uint64_t salt = 0;
    int half = 0;
    std::vector<double> values;
  };

  SceneConfig config_;
  double x0_ = 0.0;
  double y0_ = 0.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::uint32_t> occupancy_;  // 0 = open, else element index + 1
  std::vector<Rgb> colors_;
  double measured_density_ = 0.0;
  NoiseTable noise_[3];
};

/// Builds a scene whose footprint coverage is within 2% of the requested
/// density. Throws DensityUnreachable when placement fails.
SyntheticScene generate_scene(const SceneConfig& cfg);

enum class MotionKind { Horizontal, Vertical, Diagonal, PlanarGrid, Rotation };

std::string to_string(MotionKind kind);
MotionKind motion_kind_from_string(const std::string& name);

struct TrajectorySpec {
  MotionKind kind = MotionKind::Horizontal;
  double sa_width = 0.15;  // meters
  int count = 20;
  double pivot_offset = 0.5;  // meters behind the camera, rotation only
  bool enforce_limits = true;
  double max_horizontal = 0.30;
  double max_vertical = 0.20;
  double jitter_sigma = 0.0;  // meters, additive Gaussian on camera centers
  std::uint64_t jitter_seed = 0;

  void validate() const;
};

/// Camera poses centered on the reference camera (identity). Throws
/// LimitExceeded when limits are enforced and the extent is too large.
std::vector<Pose> generate_trajectory(const TrajectorySpec& spec);

/// Horizontal and vertical extent (meters) spanned by the camera centers.
std::pair<double, double> trajectory_extent(const std::vector<Pose>& poses);

/// Renders every pose with 2x2 supersampling.
CaptureSession render_views(const SyntheticScene& scene, const std::vector<Pose>& poses,
                            const Intrinsics& k);

/// Single conventional image from `cam`, wrapped as a fully covered integral.
IntegralImage conventional_view(const SyntheticScene& scene, const VirtualCamera& cam);

struct RecoveryReference {
  Image ground_truth;
  Image shadow;
};

RecoveryReference make_reference(const SyntheticScene& scene, const VirtualCamera& cam);

struct RecoveryMetrics {
  double psnr_bg = 0.0;
  double residual_occ = 0.0;
  double valid_fraction = 0.0;

  bool operator==(const RecoveryMetrics&) const = default;
};

/// PSNR cap used when the error vanishes.
inline constexpr double kMaxPsnr = 100.0;

double psnr(double mse);

RecoveryMetrics evaluate_recovery(const IntegralImage& integral, const RecoveryReference& ref);
RecoveryMetrics evaluate_recovery(const IntegralImage& integral, const SyntheticScene& scene,
                                  const VirtualCamera& cam);

struct SweepRow {
  double density = 0.0;
  std::uint64_t seed = 0;
  double psnr_single = 0.0;
  double psnr_integral = 0.0;
  double improvement_db = 0.0;
};

struct SweepSummary {
  double density = 0.0;
  double mean_improvement_db = 0.0;
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  /// Parallel (density, seed) jobs; results do not depend on this.
  int workers = 1;
  RenderOptions render;
};

/// For each density and seed: build the scene, render the trajectory,
/// integrate on `surf`, and compare against the capture nearest the
/// trajectory center reprojected through the same surface (an N = 1
/// integral), so both sides share the resampling error.
std::vector<SweepRow> density_sweep(const std::vector<double>& densities,
                                    const TrajectorySpec& trajectory,
                                    const SceneConfig& scene_cfg, const FocalSurfaceParams& surf,
                                    const SweepOptions& options = {});

std::vector<SweepSummary> summarize(const std::vector<SweepRow>& rows);

/// CSV with header `density,seed,psnr_single,psnr_integral,improvement_db`.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Index of the pose whose camera center is closest to the origin.
std::size_t nearest_to_center(const std::vector<Pose>& poses);

/// The reference camera shared by the simulator helpers.
VirtualCamera reference_camera(const SceneConfig& cfg);

}  // namespace sai::sim
