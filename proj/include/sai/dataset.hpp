#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sai/engine.hpp"
#include "sai/masking.hpp"

namespace sai {

enum class Band { Rgb, Nir, Fir, Reg, Mono };

std::string to_string(Band band);
Band band_from_string(const std::string& name);

/// Name of the manifest file at the dataset root.
inline constexpr const char* kManifestName = "session.json";

/// Name of the aux plane that `aux_mask_path` entries load into.
inline constexpr const char* kAuxMaskName = "mask";

struct SessionDefaults {
  FocalSurfaceParams surface;
  MaskConfig mask;

  bool operator==(const SessionDefaults&) const = default;
};

struct LoadedSession {
  CaptureSession session;
  SessionDefaults defaults;
  Band band = Band::Rgb;
  std::filesystem::path root;
  std::vector<std::string> warnings;
};

struct LoadOptions {
  int workers = 0;  // decode threads, 0 = hardware concurrency
  /// Rotation blocks further than this from orthonormal are rejected.
  double pose_tolerance = 1e-4;
};

/// Loads `path` (a dataset directory or its session.json). Captures keep
/// manifest order. Throws ManifestMissing, ImageMissing, PoseInvalid,
/// MixedChannels or IoFailure.
LoadedSession load_session(const std::filesystem::path& path, const LoadOptions& options = {});

/// Writes session.json plus one 16-bit PNG per capture (and per aux plane)
/// into `dir`. Poses are written with full double precision.
void save_session(const CaptureSession& session, const std::filesystem::path& dir,
                  const SessionDefaults& defaults = {}, std::optional<Band> band = std::nullopt);

/// Sidecar written next to exported images: `<out>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& image_path);

/// Writes the integral as PNG with an extra alpha channel (1 where covered,
/// 0 elsewhere; uncovered color is 0) plus a parameter sidecar.
void export_image(const IntegralImage& img, const std::filesystem::path& path, int bit_depth = 8,
                  const MaskConfig& mask = {});

enum class PoseConvention { CameraToWorld, WorldToCamera };

std::string to_string(PoseConvention convention);

struct AdaptOptions {
  std::string poses_file = "poses.txt";
  std::string images_dir = "images";
  /// Shared intrinsics; when absent a 60 degree horizontal field of view
  /// centered on the first image is assumed (and flagged).
  std::optional<Intrinsics> intrinsics;
  /// Expected spread of the camera centers in meters, used to tell
  /// camera-to-world from world-to-camera poses.
  std::optional<double> expected_sa_width;
  Band band = Band::Rgb;
};

struct AdaptReport {
  std::size_t captures = 0;
  PoseConvention convention = PoseConvention::CameraToWorld;
  double extent_c2w = 0.0;  // center spread if poses are camera-to-world
  double extent_w2c = 0.0;  // center spread if poses are world-to-camera
  bool ambiguous = false;
  std::vector<std::string> warnings;
};

/// Converts a pose-per-line text file (12 or 16 numbers per line, row-major)
/// plus an image folder into a session.json in `dst`. Images are referenced,
/// not copied.
AdaptReport adapt_dataset(const std::filesystem::path& src, const std::filesystem::path& dst,
                          const AdaptOptions& options = {});

/// Largest distance between any two camera centers.
double center_spread(const std::vector<Pose>& poses);

}  // namespace sai
