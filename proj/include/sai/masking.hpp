#pragma once

#include <string>

#include "sai/engine.hpp"
#include "sai/image.hpp"

namespace sai {

enum class MaskSource { None, Vdvi, External };

/// Occluder-mask thresholds in mask-value units ([-1, 1]). `lb` and `ub` are
/// absolute values with lb <= t <= ub; values at or below lb are kept
/// (alpha 1), values at or above ub are dropped (alpha 0).
struct MaskConfig {
  MaskSource source = MaskSource::None;
  std::string channel;  // aux plane name for MaskSource::External
  double t = 0.05;
  double lb = 0.0;
  double ub = 0.1;

  void validate() const;

  /// lb = t - delta, ub = t + delta.
  static MaskConfig around(MaskSource source, double t, double delta = 0.05);

  bool operator==(const MaskConfig&) const = default;
};

std::string to_string(MaskSource source);
MaskSource mask_source_from_string(const std::string& name);

/// Visible Difference Vegetation Index (2G - R - B) / (2G + R + B) per pixel;
/// 0 where the denominator vanishes. Requires a 3-channel RGB image.
Image compute_vdvi(const Image& rgb);

double alpha_from_mask(double v, const MaskConfig& cfg);

/// Returns a copy of the session with a per-capture alpha plane derived from
/// the configured mask source; MaskSource::None clears all alpha planes.
CaptureSession build_alpha_masks(const CaptureSession& session, const MaskConfig& cfg);

/// In-place variant.
void apply_alpha_masks(CaptureSession& session, const MaskConfig& cfg);

}  // namespace sai
