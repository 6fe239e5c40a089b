#include "sai/masking.hpp"

#include <algorithm>
#include <cmath>

#include "sai/error.hpp"

namespace sai {

void MaskConfig::validate() const {
  for (double v : {t, lb, ub}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite mask threshold");
  }
  if (!(lb <= t && t <= ub)) {
    throw Error(ErrorCode::InvalidArgument, "mask thresholds must satisfy lb <= t <= ub");
  }
  if (source == MaskSource::External && channel.empty()) {
    throw Error(ErrorCode::InvalidArgument, "external mask source needs a channel name");
  }
}

MaskConfig MaskConfig::around(MaskSource source, double t, double delta) {
  MaskConfig cfg;
  cfg.source = source;
  cfg.t = t;
  cfg.lb = t - delta;
  cfg.ub = t + delta;
  return cfg;
}

std::string to_string(MaskSource source) {
  switch (source) {
    case MaskSource::None: return "none";
    case MaskSource::Vdvi: return "vdvi";
    case MaskSource::External: return "external";
  }
  return "none";
}

MaskSource mask_source_from_string(const std::string& name) {
  if (name == "none") return MaskSource::None;
  if (name == "vdvi") return MaskSource::Vdvi;
  if (name == "external") return MaskSource::External;
  throw Error(ErrorCode::InvalidArgument, "unknown mask source '" + name + "'");
}

Image compute_vdvi(const Image& rgb) {
  if (rgb.channels() != 3) {
    throw Error(ErrorCode::ChannelMismatch, "VDVI needs a 3-channel RGB image");
  }
  Image out(rgb.width(), rgb.height(), 1);
  auto src = rgb.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
    const double den = 2.0 * g + r + b;
    const double v = den < 1e-9 ? 0.0 : (2.0 * g - r - b) / den;
    dst[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

double alpha_from_mask(double v, const MaskConfig& cfg) {
  if (v <= cfg.lb) return 1.0;
  if (v >= cfg.ub) return 0.0;
  return (cfg.ub - v) / (cfg.ub - cfg.lb);
}

void apply_alpha_masks(CaptureSession& session, const MaskConfig& cfg) {
  cfg.validate();
  if (cfg.source == MaskSource::None) {
    for (Capture& cap : session.captures) cap.alpha.reset();
    return;
  }

  // Resolve every source first so a failure leaves the session untouched.
  if (cfg.source == MaskSource::Vdvi && session.channels() != 3) {
    throw Error(ErrorCode::SourceUnavailable, "VDVI mask needs RGB captures, session has " +
                                                  std::to_string(session.channels()) +
                                                  " channel(s)");
  }
  if (cfg.source == MaskSource::External) {
    for (std::size_t i = 0; i < session.size(); ++i) {
      const auto& aux = session.captures[i].aux;
      auto it = aux.find(cfg.channel);
      if (it == aux.end()) {
        throw Error(ErrorCode::SourceUnavailable, "capture " + std::to_string(i) +
                                                      " has no mask channel '" + cfg.channel +
                                                      "'");
      }
      const Image& img = session.captures[i].image;
      if (it->second.width() != img.width() || it->second.height() != img.height() ||
          it->second.channels() != 1) {
        throw Error(ErrorCode::SourceUnavailable, "capture " + std::to_string(i) + " mask channel '" +
                                                      cfg.channel + "' does not match image size");
      }
    }
  }

  for (Capture& cap : session.captures) {
    Image values = cfg.source == MaskSource::Vdvi ? compute_vdvi(cap.image) : cap.aux.at(cfg.channel);
    for (float& v : values.data()) v = static_cast<float>(alpha_from_mask(v, cfg));
    cap.alpha = std::move(values);
  }
}

CaptureSession build_alpha_masks(const CaptureSession& session, const MaskConfig& cfg) {
  CaptureSession out = session;
  apply_alpha_masks(out, cfg);
  return out;
}

}  // namespace sai
