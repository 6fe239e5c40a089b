#include "sai/params_json.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "sai/error.hpp"

namespace sai {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double number(const Json& v, const std::string& key) {
  if (!v.is_number()) throw Error(ErrorCode::InvalidArgument, "'" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

Json to_json(const FocalSurfaceParams& p) {
  return Json{{"z", p.z},   {"tx", p.tx}, {"ty", p.ty}, {"rx", p.rx},     {"ry", p.ry},
              {"rz", p.rz}, {"sx", p.sx}, {"sy", p.sy}, {"sz", p.sz}, {"grid", p.grid}};
}

Json to_json(const MaskConfig& m) {
  Json j{{"source", to_string(m.source)}, {"t", m.t}, {"lb", m.lb}, {"ub", m.ub}};
  if (!m.channel.empty()) j["channel"] = m.channel;
  return j;
}

Json to_json(const Intrinsics& k) {
  return Json{{"fx", k.fx},       {"fy", k.fy},          {"cx", k.cx},
              {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Json to_json(const Pose& pose) {
  const Mat4 m = pose.matrix();
  Json a = Json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  return a;
}

void update_from_json(FocalSurfaceParams& p, const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "surface must be an object");
  FocalSurfaceParams next = p;
  for (const auto& [raw, v] : j.items()) {
    const std::string key = lower(raw);
    if (key == "grid") {
      if (!v.is_boolean()) throw Error(ErrorCode::InvalidArgument, "'grid' must be a boolean");
      next.grid = v.get<bool>();
      continue;
    }
    double* slot = key == "z"    ? &next.z
                   : key == "tx" ? &next.tx
                   : key == "ty" ? &next.ty
                   : key == "rx" ? &next.rx
                   : key == "ry" ? &next.ry
                   : key == "rz" ? &next.rz
                   : key == "sx" ? &next.sx
                   : key == "sy" ? &next.sy
                   : key == "sz" ? &next.sz
                                 : nullptr;
    if (!slot) throw Error(ErrorCode::InvalidArgument, "unknown surface parameter '" + raw + "'");
    *slot = number(v, raw);
  }
  p = next;
}

void update_from_json(MaskConfig& m, const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "mask must be an object");
  MaskConfig next = m;
  for (const auto& [raw, v] : j.items()) {
    const std::string key = lower(raw);
    if (key == "source") {
      if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, "'source' must be a string");
      next.source = mask_source_from_string(v.get<std::string>());
    } else if (key == "channel") {
      if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, "'channel' must be a string");
      next.channel = v.get<std::string>();
    } else if (key == "t") {
      next.t = number(v, raw);
    } else if (key == "lb") {
      next.lb = number(v, raw);
    } else if (key == "ub") {
      next.ub = number(v, raw);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown mask parameter '" + raw + "'");
    }
  }
  m = next;
}

void update_from_json(Intrinsics& k, const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "intrinsics must be an object");
  Intrinsics next = k;
  for (const auto& [raw, v] : j.items()) {
    const std::string key = lower(raw);
    if (key == "fx") next.fx = number(v, raw);
    else if (key == "fy") next.fy = number(v, raw);
    else if (key == "cx") next.cx = number(v, raw);
    else if (key == "cy") next.cy = number(v, raw);
    else if (key == "width" || key == "height") {
      if (!v.is_number_integer()) {
        throw Error(ErrorCode::InvalidArgument, "'" + raw + "' must be an integer");
      }
      (key == "width" ? next.width : next.height) = v.get<int>();
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown intrinsics parameter '" + raw + "'");
    }
  }
  k = next;
}

Pose pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16) {
    throw Error(ErrorCode::InvalidArgument, "pose must be 16 numbers");
  }
  Mat4 m;
  for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = number(j[i], "pose");
  return Pose::from_matrix(m);
}

}  // namespace sai
