#pragma once

// JSON forms of the parameter structs shared by the manifest, the export
// sidecar and the render service protocol. Angles are radians.

#include <json.hpp>

#include "sai/engine.hpp"
#include "sai/masking.hpp"

namespace sai {

using Json = nlohmann::json;

Json to_json(const FocalSurfaceParams& p);
Json to_json(const MaskConfig& m);
Json to_json(const Intrinsics& k);
/// 16 numbers, row-major camera-to-world.
Json to_json(const Pose& pose);

// The update_* functions apply any subset of keys (keys are matched
// case-insensitively, so "TX" and "tx" are the same) and throw
// InvalidArgument on unknown keys or wrongly typed values. The target is
// left untouched on error.
void update_from_json(FocalSurfaceParams& p, const Json& j);
void update_from_json(MaskConfig& m, const Json& j);
void update_from_json(Intrinsics& k, const Json& j);

/// Parses 16 row-major numbers without checking orthonormality.
Pose pose_from_json(const Json& j);

}  // namespace sai
