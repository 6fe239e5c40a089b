#include "sai/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "sai/error.hpp"
#include "sai/png_io.hpp"
#include "sai/sim.hpp"

namespace sai {

namespace {

Error malformed(const std::string& why) { return Error(ErrorCode::MalformedMessage, why); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

void check_camera(const VirtualCamera& cam) {
  const auto& k = cam.intrinsics;
  if (k.width > kMaxFrameWidth || k.height > kMaxFrameHeight) {
    throw malformed("render size " + std::to_string(k.width) + "x" + std::to_string(k.height) +
                    " exceeds " + std::to_string(kMaxFrameWidth) + "x" +
                    std::to_string(kMaxFrameHeight));
  }
  k.validate();
  if (!cam.pose.is_valid(1e-6)) throw malformed("camera pose is not a rigid transform");
}

}  // namespace

std::string to_string(Aperture a) { return a == Aperture::Open ? "open" : "pinhole"; }

bool ViewState::operator==(const ViewState& o) const {
  return to_json(vcam.intrinsics) == to_json(o.vcam.intrinsics) &&
         vcam.pose.matrix() == o.vcam.pose.matrix() && surf == o.surf && mask == o.mask &&
         aperture == o.aperture && pinhole_index == o.pinhole_index && grid == o.grid &&
         frame_id == o.frame_id;
}

MessageOutcome handle_message(const ViewState& state, const Json& msg, std::size_t capture_count) {
  if (capture_count == 0) throw Error(ErrorCode::NoSession, "no session loaded");
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    throw malformed("message must be an object with a string 'type'");
  }
  Json body = msg;
  body.erase("type");
  const std::string type = msg["type"].get<std::string>();

  MessageOutcome out{state, std::nullopt};
  ViewState& s = out.state;
  try {
    if (type == "set_surface") {
      update_from_json(s.surf, body);
      s.surf.validate();
      s.grid = s.surf.grid;
    } else if (type == "set_mask") {
      update_from_json(s.mask, body);
      s.mask.validate();
    } else if (type == "set_aperture") {
      const std::string mode = body.value("mode", body.value("aperture", std::string()));
      if (mode == "open") s.aperture = Aperture::Open;
      else if (mode == "pinhole") s.aperture = Aperture::Pinhole;
      else throw malformed("aperture mode must be 'open' or 'pinhole'");
    } else if (type == "jump") {
      const Json step = body.value("step", Json(1));
      if (!step.is_number_integer() || std::abs(step.get<long long>()) != 1) {
        throw malformed("jump step must be +1 or -1");
      }
      const auto n = static_cast<long long>(capture_count);
      long long i = static_cast<long long>(s.pinhole_index) + step.get<long long>();
      s.pinhole_index = static_cast<std::size_t>(((i % n) + n) % n);
    } else if (type == "set_camera") {
      if (body.contains("pose")) s.vcam.pose = pose_from_json(body["pose"]);
      if (body.contains("intrinsics")) update_from_json(s.vcam.intrinsics, body["intrinsics"]);
      check_camera(s.vcam);
    } else if (type == "set_grid") {
      const Json g = body.value("grid", body.value("enabled", Json()));
      if (!g.is_boolean()) throw malformed("set_grid needs a boolean 'grid'");
      s.grid = g.get<bool>();
      s.surf.grid = s.grid;
    } else if (type != "request_frame") {
      throw malformed("unknown message type '" + type + "'");
    }
  } catch (const Json::exception& e) {
    throw malformed(e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MalformedMessage) throw;
    throw malformed(e.what());
  }
  out.job = FrameJob{s};
  return out;
}

MessageOutcome handle_message(const ViewState& state, const std::string& text,
                              std::size_t capture_count) {
  Json msg;
  try {
    msg = Json::parse(text);
  } catch (const Json::exception& e) {
    throw malformed(std::string("not valid JSON: ") + e.what());
  }
  return handle_message(state, msg, capture_count);
}

Json params_echo(const ViewState& state) {
  Json j = to_json(state.surf);
  j["grid"] = state.grid;
  j["mask"] = to_json(state.mask);
  j["aperture"] = to_string(state.aperture);
  j["pinhole_index"] = state.pinhole_index;
  j["frame_id"] = state.frame_id;
  j["camera"] = {{"pose", to_json(state.vcam.pose)}, {"intrinsics", to_json(state.vcam.intrinsics)}};
  return j;
}

std::string encode_frame(const IntegralImage& img, std::uint32_t frame_id, const std::string& echo) {
  if (img.color.empty()) throw Error(ErrorCode::EncodingFailure, "empty frame");
  const std::vector<std::uint8_t> png = encode_png(img.color, 8);
  std::string out;
  out.reserve(24 + png.size() + echo.size());
  put_u32(out, kFrameMagic);
  put_u32(out, frame_id);
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u32(out, static_cast<std::uint32_t>(png.size()));
  out.append(reinterpret_cast<const char*>(png.data()), png.size());
  put_u32(out, static_cast<std::uint32_t>(echo.size()));
  out.append(echo);
  return out;
}

Frame decode_frame(std::string_view bytes) {
  if (bytes.size() < 20) throw malformed("frame shorter than its header");
  if (get_u32(bytes, 0) != kFrameMagic) throw malformed("bad frame magic");
  Frame f;
  f.frame_id = get_u32(bytes, 4);
  f.width = static_cast<int>(get_u32(bytes, 8));
  f.height = static_cast<int>(get_u32(bytes, 12));
  const std::size_t len = get_u32(bytes, 16);
  if (bytes.size() < 20 + len + 4) throw malformed("truncated frame payload");
  const std::size_t echo_len = get_u32(bytes, 20 + len);
  if (bytes.size() != 24 + len + echo_len) throw malformed("frame length mismatch");
  try {
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + 20);
    f.pixels = decode_png({p, len}).pixels;
  } catch (const Error& e) {
    throw malformed(e.what());
  }
  if (f.pixels.width() != f.width || f.pixels.height() != f.height) {
    throw malformed("payload size does not match the header");
  }
  f.echo = std::string(bytes.substr(24 + len, echo_len));
  return f;
}

Renderer::Renderer(CaptureSession session, SessionDefaults defaults)
    : session_(std::move(session)), defaults_(std::move(defaults)) {
  session_.validate();
  Vec3 mean = Vec3::Zero();
  for (const auto& c : session_.captures) mean += c.pose.center();
  mean /= static_cast<double>(session_.size());
  ref_pose_.rotation = session_.captures.front().pose.rotation;
  ref_pose_.translation = mean;
}

ViewState Renderer::initial_state() const {
  ViewState s;
  s.vcam.intrinsics = session_.captures.front().intrinsics;
  s.vcam.pose = ref_pose_;
  s.surf = defaults_.surface;
  s.grid = s.surf.grid;
  s.mask = defaults_.mask;
  return s;
}

const CaptureSession& Renderer::masked(const MaskConfig& mask) {
  if (mask.source == MaskSource::None) return session_;
  if (!cached_mask_ || !(*cached_mask_ == mask)) {
    cached_ = build_alpha_masks(session_, mask);
    cached_mask_ = mask;
  }
  return cached_;
}

IntegralImage Renderer::render(const ViewState& state, const RenderOptions& options) {
  const CaptureSession& s = masked(state.mask);
  IntegralImage img = state.aperture == Aperture::Open
                          ? render_integral(s, state.vcam, state.surf, ref_pose_, options)
                          : render_pinhole(s, state.pinhole_index, state.vcam, state.surf,
                                           ref_pose_, options);
  if (state.grid) draw_surface_grid(img, state.vcam, state.surf, ref_pose_);
  return img;
}

void draw_surface_grid(IntegralImage& img, const VirtualCamera& vcam, const FocalSurfaceParams& surf,
                       const Pose& ref_pose) {
  constexpr double kSpacing = 0.1;
  constexpr float kLine[3] = {1.0f, 0.85f, 0.2f};
  const FocalSurface surface(surf, ref_pose);
  const int ch = img.color.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto hit = surface.intersect(pixel_ray(vcam.intrinsics, vcam.pose, x, y));
      if (!hit) continue;
      const Vec3 q = ref_pose.to_camera(*hit);
      // Half a pixel's footprint at this depth keeps lines about 1 px wide.
      const double half = 0.5 * std::abs(q.z()) / vcam.intrinsics.fx;
      const auto near_line = [&](double v) {
        return std::abs(v - kSpacing * std::round(v / kSpacing)) <= half;
      };
      if (!near_line(q.x()) && !near_line(q.y())) continue;
      for (int c = 0; c < ch; ++c) {
        float& v = img.color.at(x, y, c);
        v = 0.5f * v + 0.5f * (ch == 3 ? kLine[c] : 1.0f);
      }
    }
  }
}

FrameScheduler::FrameScheduler(Work work)
    : work_(std::move(work)), worker_([this](std::stop_token st) { run(st); }) {}

FrameScheduler::~FrameScheduler() {
  worker_.request_stop();
  cv_.notify_all();
}

void FrameScheduler::submit(FrameJob job) {
  {
    std::lock_guard lock(mu_);
    pending_ = std::move(job);  // latest wins
  }
  cv_.notify_all();
}

void FrameScheduler::wait_idle() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !busy_ && !pending_; });
}

std::uint32_t FrameScheduler::frames_started() const {
  std::lock_guard lock(mu_);
  return next_id_ - 1;
}

void FrameScheduler::run(std::stop_token stop) {
  std::unique_lock lock(mu_);
  while (true) {
    if (!cv_.wait(lock, stop, [&] { return pending_.has_value(); })) return;
    FrameJob job = std::move(*pending_);
    pending_.reset();
    busy_ = true;
    const std::uint32_t id = next_id_++;
    lock.unlock();
    work_(job, id);
    lock.lock();
    busy_ = false;
    cv_.notify_all();
  }
}

RenderService::RenderService(CaptureSession session, SessionDefaults defaults,
                             RenderOptions render_options)
    : renderer_(std::move(session), std::move(defaults)), render_options_(render_options) {
  state_ = renderer_.initial_state();
  scheduler_ = std::make_unique<FrameScheduler>(
      [this](const FrameJob& job, std::uint32_t id) { render_job(job, id); });
}

RenderService::~RenderService() { scheduler_.reset(); }

std::optional<std::string> RenderService::handle_text(const std::string& text) {
  std::optional<FrameJob> job;
  try {
    std::lock_guard lock(state_mu_);
    MessageOutcome out = handle_message(state_, text, renderer_.capture_count());
    state_ = out.state;
    job = std::move(out.job);
  } catch (const Error& e) {
    Json reply{{"type", "error"}, {"code", std::string(to_string(e.code()))},
               {"message", e.what()}, {"echo", text}};
    return reply.dump(-1, ' ', false, Json::error_handler_t::replace);
  }
  if (job) scheduler_->submit(std::move(*job));
  return std::nullopt;
}

void RenderService::render_job(const FrameJob& job, std::uint32_t frame_id) {
  ViewState s = job.state;
  s.frame_id = frame_id;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const IntegralImage img = renderer_.render(s, render_options_);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    Json echo = params_echo(s);
    echo["render_ms"] = ms;
    broadcast({true, std::make_shared<const std::string>(encode_frame(img, frame_id, echo.dump()))});
  } catch (const std::exception& e) {
    const Error* err = dynamic_cast<const Error*>(&e);
    Json reply{{"type", "error"},
               {"code", err ? std::string(to_string(err->code())) : std::string("RuntimeError")},
               {"message", e.what()},
               {"frame_id", frame_id}};
    broadcast({false, std::make_shared<const std::string>(reply.dump())});
  }
  std::lock_guard lock(state_mu_);
  state_.frame_id = std::max(state_.frame_id, frame_id);
}

void RenderService::broadcast(const Outgoing& out) {
  std::lock_guard lock(subs_mu_);
  for (auto& [id, fn] : subscribers_) fn(out);
}

int RenderService::subscribe(Subscriber fn) {
  std::lock_guard lock(subs_mu_);
  subscribers_[next_sub_] = std::move(fn);
  return next_sub_++;
}

void RenderService::unsubscribe(int id) {
  std::lock_guard lock(subs_mu_);
  subscribers_.erase(id);
}

ViewState RenderService::state() const {
  std::lock_guard lock(state_mu_);
  return state_;
}

void RenderService::wait_idle() { scheduler_->wait_idle(); }

LoadedSession bundled_scene() {
  sim::SceneConfig cfg;
  cfg.density = 0.6;
  cfg.seed = 7;
  const sim::SyntheticScene scene = sim::generate_scene(cfg);
  sim::TrajectorySpec traj;
  traj.sa_width = 0.15;
  traj.count = 30;
  LoadedSession out;
  out.session = sim::render_views(scene, sim::generate_trajectory(traj), cfg.reference);
  out.session.metadata["name"] = "bundled dense foliage scene";
  out.defaults.surface = FocalSurfaceParams::plane(cfg.bg_depth);
  out.defaults.mask = MaskConfig{};
  return out;
}

}  // namespace sai
