#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <string>
#include <thread>
#include <vector>

#include "sai/dataset.hpp"
#include "sai/engine.hpp"
#include "sai/masking.hpp"
#include "sai/params_json.hpp"

namespace sai {

enum class Aperture { Open, Pinhole };

std::string to_string(Aperture a);

/// Largest render the service accepts.
inline constexpr int kMaxFrameWidth = 1280;
inline constexpr int kMaxFrameHeight = 960;

struct ViewState {
  VirtualCamera vcam;
  FocalSurfaceParams surf;
  MaskConfig mask;
  Aperture aperture = Aperture::Open;
  std::size_t pinhole_index = 0;
  bool grid = false;
  std::uint32_t frame_id = 0;  // id of the last frame rendered

  bool operator==(const ViewState& o) const;
};

/// Snapshot of the state to render.
struct FrameJob {
  ViewState state;
};

struct MessageOutcome {
  ViewState state;
  std::optional<FrameJob> job;
};

/// Applies one control message, e.g. {"type": "set_surface", "z": 2.5}.
/// Kinds: set_surface (any of z/tx/ty/rx/ry/rz/sx/sy/sz, radians),
/// set_mask (source/channel/t/lb/ub), set_aperture {"mode": "open"|"pinhole"},
/// jump {"step": +1|-1}, set_camera {"pose": [16], "intrinsics": {...}},
/// set_grid {"grid": bool}, request_frame. Throws MalformedMessage (the
/// input state is never modified) or NoSession when capture_count is 0.
MessageOutcome handle_message(const ViewState& state, const Json& msg, std::size_t capture_count);
MessageOutcome handle_message(const ViewState& state, const std::string& text,
                              std::size_t capture_count);
inline MessageOutcome handle_message(const ViewState& state, const char* text,
                                     std::size_t capture_count) {
  return handle_message(state, std::string(text), capture_count);
}

/// Parameter echo carried by every frame. Surface parameters sit at the top
/// level so `echo["z"]` is the rendered focal depth.
Json params_echo(const ViewState& state);

struct Frame {
  std::uint32_t frame_id = 0;
  int width = 0;
  int height = 0;
  Image pixels;      // 8-bit quantized, normalized to [0, 1]
  std::string echo;  // UTF-8 JSON
};

inline constexpr std::uint32_t kFrameMagic = 0x53414946;

/// Little-endian: magic, frame_id, width, height, payload_len (all u32),
/// 8-bit PNG payload, then a u32-length-prefixed UTF-8 parameter echo.
std::string encode_frame(const IntegralImage& img, std::uint32_t frame_id,
                         const std::string& echo = "{}");
/// Throws MalformedMessage on truncated or inconsistent input.
Frame decode_frame(std::string_view bytes);

/// Holds the session and renders ViewStates. Masked variants of the session
/// are cached per MaskConfig.
class Renderer {
 public:
  Renderer(CaptureSession session, SessionDefaults defaults = {});

  const CaptureSession& session() const { return session_; }
  std::size_t capture_count() const { return session_.size(); }
  /// Default state: reference camera = first capture's intrinsics at the
  /// mean camera center, looking along the first capture's axis.
  ViewState initial_state() const;
  const Pose& reference_pose() const { return ref_pose_; }

  IntegralImage render(const ViewState& state, const RenderOptions& options = {});

 private:
  const CaptureSession& masked(const MaskConfig& mask);

  CaptureSession session_;
  SessionDefaults defaults_;
  Pose ref_pose_;
  std::optional<MaskConfig> cached_mask_;
  CaptureSession cached_;
};

/// Overlays the focal-surface grid (10 cm lines in the reference frame).
void draw_surface_grid(IntegralImage& img, const VirtualCamera& vcam, const FocalSurfaceParams& surf,
                       const Pose& ref_pose);

/// One render worker with latest-wins coalescing: at most one job renders
/// and at most one waits; a newer job replaces the waiting one. Each job
/// runs with the next frame id.
class FrameScheduler {
 public:
  using Work = std::function<void(const FrameJob&, std::uint32_t frame_id)>;

  explicit FrameScheduler(Work work);
  ~FrameScheduler();

  void submit(FrameJob job);
  /// Blocks until nothing is rendering or pending.
  void wait_idle();
  std::uint32_t frames_started() const;

 private:
  void run(std::stop_token stop);

  Work work_;
  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::optional<FrameJob> pending_;
  bool busy_ = false;
  std::uint32_t next_id_ = 1;
  std::jthread worker_;  // last member: joins before the rest is destroyed
};

/// Message sent to viewers: a binary frame or a UTF-8 text document.
struct Outgoing {
  bool binary = true;
  std::shared_ptr<const std::string> bytes;
};

/// Session-level glue used by the network server: serializes messages,
/// renders through a FrameScheduler and fans every delivered message out to
/// all subscribers.
class RenderService {
 public:
  using Subscriber = std::function<void(const Outgoing&)>;

  explicit RenderService(CaptureSession session, SessionDefaults defaults = {},
                         RenderOptions render_options = {});
  ~RenderService();

  /// Handles one text message; returns the error reply (JSON text) for
  /// malformed input, nullopt otherwise.
  std::optional<std::string> handle_text(const std::string& text);

  int subscribe(Subscriber fn);
  void unsubscribe(int id);

  ViewState state() const;
  void wait_idle();

 private:
  void render_job(const FrameJob& job, std::uint32_t frame_id);
  void broadcast(const Outgoing& out);

  Renderer renderer_;
  RenderOptions render_options_;
  mutable std::mutex state_mu_;
  ViewState state_;
  std::mutex subs_mu_;
  std::map<int, Subscriber> subscribers_;
  int next_sub_ = 1;
  std::unique_ptr<FrameScheduler> scheduler_;
};

/// Session the service shows when started without a dataset: a dense
/// foliage scene seen by 30 horizontally shifted 640x480 views.
LoadedSession bundled_scene();

struct ServerOptions {
  std::string bind = "127.0.0.1";
  unsigned short port = 8080;
  std::string assets_dir;  // served at "/"
};

/// Serves /stream (websocket), /health and static assets until `stop` is
/// requested or the process receives SIGINT/SIGTERM. `on_listening`
/// receives the bound port (useful with port 0).
void run_server(RenderService& service, const ServerOptions& options,
                std::function<void(unsigned short)> on_listening = {},
                std::stop_token stop = {});

}  // namespace sai
