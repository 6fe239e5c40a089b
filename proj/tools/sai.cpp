// sai: batch entry points for synthetic-aperture rendering, autofocus,
// simulator sweeps, dataset adaptation and the interactive service.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "sai/autofocus.hpp"
#include "sai/dataset.hpp"
#include "sai/error.hpp"
#include "sai/masking.hpp"
#include "sai/png_io.hpp"
#include "sai/service.hpp"
#include "sai/sim.hpp"

namespace {

using namespace sai;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

constexpr double kDeg = std::numbers::pi / 180.0;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses "z=5,SX=1e4,RX=10"; angles are degrees.
FocalSurfaceParams parse_surface(const std::string& text, FocalSurfaceParams p) {
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("surface item '" + item + "' is not key=value");
    std::string key = item.substr(0, eq);
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError("surface value '" + item + "' is not a number");
    }
    if (key == "plane") {
      const FocalSurfaceParams flat = FocalSurfaceParams::plane(v);
      p.z = flat.z;
      p.sx = flat.sx;
      p.sy = flat.sy;
      p.sz = flat.sz;
    }
    else if (key == "z") p.z = v;
    else if (key == "tx") p.tx = v;
    else if (key == "ty") p.ty = v;
    else if (key == "rx") p.rx = v * kDeg;
    else if (key == "ry") p.ry = v * kDeg;
    else if (key == "rz") p.rz = v * kDeg;
    else if (key == "sx") p.sx = v;
    else if (key == "sy") p.sy = v;
    else if (key == "sz") p.sz = v;
    else throw UsageError("unknown surface key '" + key + "'");
  }
  return p;
}

// "0.1:0.9:0.1" (inclusive) or "0.1,0.3,0.5".
std::vector<double> parse_densities(const std::string& text) {
  std::vector<double> out;
  try {
    if (text.find(':') != std::string::npos) {
      std::stringstream ss(text);
      std::string a, b, c;
      std::getline(ss, a, ':');
      std::getline(ss, b, ':');
      std::getline(ss, c, ':');
      const double lo = std::stod(a), hi = std::stod(b), step = std::stod(c);
      if (!(step > 0.0) || hi < lo) throw UsageError("densities need lo <= hi and step > 0");
      const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
      for (int i = 0; i <= n; ++i) out.push_back(std::round((lo + i * step) * 1e9) / 1e9);
    } else {
      std::stringstream ss(text);
      for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stod(item));
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("cannot parse densities '" + text + "'");
  }
  if (out.empty()) throw UsageError("no densities given");
  return out;
}

std::vector<int> parse_ints(const std::string& text, std::size_t count, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  try {
    for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoi(item));
  } catch (const std::exception&) {
    throw UsageError(what + " must be " + std::to_string(count) + " comma-separated integers");
  }
  if (out.size() != count) {
    throw UsageError(what + " must be " + std::to_string(count) + " comma-separated integers");
  }
  return out;
}

LoadedSession load_or_data_error(const std::string& dataset, int workers) {
  try {
    LoadOptions opt;
    opt.workers = workers;
    LoadedSession s = load_session(dataset, opt);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    return s;
  } catch (const Error& e) {
    if (is_data_error(e.code())) throw;
    // Anything wrong with the files is a data problem from the user's view.
    throw Error(ErrorCode::IoFailure, std::string(e.what()));
  }
}

struct MaskFlags {
  std::string source;
  std::string channel;
  std::optional<double> t, lb, ub;

  void add(CLI::App* app) {
    app->add_option("--mask", source, "Occluder mask source: none | vdvi | external")
        ->check(CLI::IsMember({"none", "vdvi", "external"}));
    app->add_option("--channel", channel, "Aux plane name for --mask external");
    app->add_option("--t", t, "Mask threshold T (mask-value units, [-1, 1])");
    app->add_option("--lb", lb, "Lower bound LB: values <= LB keep weight 1 (mask-value units)");
    app->add_option("--ub", ub, "Upper bound UB: values >= UB get weight 0 (mask-value units)");
  }

  MaskConfig apply(MaskConfig m) const {
    if (!source.empty()) m.source = mask_source_from_string(source);
    if (!channel.empty()) m.channel = channel;
    if (t) {
      // A bare threshold gets the default +-0.05 band unless bounds are given.
      m.t = *t;
      m.lb = lb.value_or(*t - 0.05);
      m.ub = ub.value_or(*t + 0.05);
    } else {
      if (lb) m.lb = *lb;
      if (ub) m.ub = *ub;
    }
    try {
      m.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return m;
  }
};

std::string surface_help() {
  return "Focal surface as key=value list: z (m, depth of the dome base), TX, TY (m), RX, RY, RZ "
         "(degrees), SX, SY, SZ (m, semi-axes); plane=D (m) sets a flat plane at depth D; "
         "e.g. z=5,SX=1e4,SY=1e4,SZ=1 or plane=5";
}

// Flag values that name an enum; a bad name is a usage error.
template <typename Fn>
auto parse_name(Fn&& fn, const std::string& name) {
  try {
    return fn(name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

sim::MotionKind parse_motion(const std::string& name) {
  return parse_name(sim::motion_kind_from_string, name);
}

sim::OccluderShape parse_shape(const std::string& name) {
  return parse_name(sim::occluder_shape_from_string, name);
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-aperture imaging through occlusion: render, autofocus, simulate, sweep, "
               "adapt and serve."};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "Worker threads (0 = all cores); results do not depend on it")
      ->check(CLI::NonNegativeNumber);

  // render
  auto* render = app.add_subcommand("render", "Render an integral (or pinhole) image of a dataset");
  std::string r_dataset, r_surface, r_out = "render.png", r_aperture = "open";
  std::size_t r_index = 0;
  int r_depth = 8;
  MaskFlags r_mask;
  render->add_option("--dataset", r_dataset, "Dataset directory or session.json")->required();
  render->add_option("--surface", r_surface, surface_help());
  r_mask.add(render);
  render->add_option("--aperture", r_aperture, "open (integral) | pinhole (one capture reprojected)")
      ->check(CLI::IsMember({"open", "pinhole"}));
  render->add_option("--index", r_index, "Capture index for --aperture pinhole (0-based)");
  render->add_option("--out", r_out, "Output PNG; a <out>.json parameter sidecar is written next to it");
  render->add_option("--bit-depth", r_depth, "PNG bit depth: 8 | 16")->check(CLI::IsMember({8, 16}));

  // autofocus
  auto* af = app.add_subcommand("autofocus", "Find the focal depth that maximizes RoI sharpness");
  std::string af_dataset, af_surface, af_roi;
  double af_zmin = 0.5, af_zmax = 50.0;
  af->add_option("--dataset", af_dataset, "Dataset directory or session.json")->required();
  af->add_option("--zmin", af_zmin, "Near end of the depth bracket (m)")->check(CLI::PositiveNumber);
  af->add_option("--zmax", af_zmax, "Far end of the depth bracket (m)")->check(CLI::PositiveNumber);
  af->add_option("--roi", af_roi, "Region of interest x,y,w,h in pixels (default: centered half)");
  af->add_option("--surface", af_surface,
                 surface_help() + "; only z is searched, the rest is the template");

  // simulate
  auto* simc = app.add_subcommand("simulate", "Render a simulated two-plane session to a dataset");
  std::string s_out = "sim_session", s_motion = "horizontal", s_shape = "disks", s_palette = "foliage";
  double s_sa = 0.15, s_density = 0.3, s_occ = 1.0, s_bg = 5.0, s_jitter = 0.0, s_pivot = 0.5;
  int s_n = 20, s_width = 640, s_height = 480;
  double s_focal = 500.0;
  std::uint64_t s_seed = 1;
  simc->add_option("--out", s_out, "Output dataset directory");
  simc->add_option("--motion", s_motion, "horizontal | vertical | diagonal | planar-grid | rotation");
  simc->add_option("--sa", s_sa, "Synthetic-aperture width (m); chord length for rotation")
      ->check(CLI::PositiveNumber);
  simc->add_option("--n", s_n, "Number of captures")->check(CLI::PositiveNumber);
  simc->add_option("--density", s_density, "Occluder density on the occluder plane, [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  simc->add_option("--seed", s_seed, "Scene seed");
  simc->add_option("--shape", s_shape, "Occluder shape: disks | bars | rects");
  simc->add_option("--palette", s_palette, "Occluder colors: foliage | gray")
      ->check(CLI::IsMember({"foliage", "gray"}));
  simc->add_option("--occ-depth", s_occ, "Occluder plane depth (m)")->check(CLI::PositiveNumber);
  simc->add_option("--bg-depth", s_bg, "Background plane depth (m)")->check(CLI::PositiveNumber);
  simc->add_option("--pivot", s_pivot, "Rotation pivot distance behind the arc (m)");
  simc->add_option("--jitter", s_jitter, "Gaussian position noise on camera centers (m)");
  simc->add_option("--width", s_width, "Image width (px)")->check(CLI::PositiveNumber);
  simc->add_option("--height", s_height, "Image height (px)")->check(CLI::PositiveNumber);
  simc->add_option("--focal", s_focal, "Focal length (px)")->check(CLI::PositiveNumber);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Occlusion-density sweep on the simulator; writes CSV");
  std::string w_densities = "0.1:0.9:0.1", w_out, w_motion = "horizontal", w_shape = "disks";
  int w_seeds = 3, w_n = 20;
  double w_sa = 0.15;
  sweep->add_option("--densities", w_densities, "lo:hi:step (inclusive) or comma list, fractions");
  sweep->add_option("--seeds", w_seeds, "Number of seeds (1..K)")->check(CLI::PositiveNumber);
  sweep->add_option("--motion", w_motion, "Trajectory kind (see simulate)");
  sweep->add_option("--sa", w_sa, "Synthetic-aperture width (m)")->check(CLI::PositiveNumber);
  sweep->add_option("--n", w_n, "Captures per trajectory")->check(CLI::PositiveNumber);
  sweep->add_option("--shape", w_shape, "Occluder shape: disks | bars | rects");
  sweep->add_option("--out", w_out, "CSV path (default: standard output)");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "Convert a poses.txt + image folder layout to session.json");
  std::string a_src, a_dst, a_poses = "poses.txt", a_images = "images", a_band = "rgb";
  std::optional<double> a_sa, a_fx, a_fy, a_cx, a_cy;
  adapt->add_option("--src", a_src, "Source directory")->required();
  adapt->add_option("--dst", a_dst, "Destination directory for session.json (default: --src)");
  adapt->add_option("--poses", a_poses, "Pose file relative to --src: 12 or 16 numbers per line");
  adapt->add_option("--images", a_images, "Image folder relative to --src (PNG, sorted by name)");
  adapt->add_option("--sa-width", a_sa, "Expected camera-center spread (m), picks the pose convention");
  adapt->add_option("--fx", a_fx, "Focal length x (px)");
  adapt->add_option("--fy", a_fy, "Focal length y (px, default fx)");
  adapt->add_option("--cx", a_cx, "Principal point x (px, default image center)");
  adapt->add_option("--cy", a_cy, "Principal point y (px, default image center)");
  adapt->add_option("--band", a_band, "Spectral band: rgb | nir | fir | reg | mono");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the interactive render service");
  std::string v_dataset, v_assets = SAI_DEFAULT_ASSETS;
  unsigned short v_port = 8080;
  serve->add_option("--port", v_port, "TCP port (bind address from SAI_BIND_ADDR, default 127.0.0.1)");
  serve->add_option("--dataset", v_dataset, "Dataset to serve (default: bundled simulated scene)");
  serve->add_option("--assets", v_assets, "Directory with the viewer assets served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    RenderOptions ropt;
    ropt.workers = workers;

    if (*render) {
      parse_surface(r_surface, {});  // report usage errors before loading
      LoadedSession ds = load_or_data_error(r_dataset, workers);
      Renderer renderer(std::move(ds.session), ds.defaults);
      ViewState state = renderer.initial_state();
      state.surf = parse_surface(r_surface, state.surf);
      state.mask = r_mask.apply(state.mask);
      state.aperture = r_aperture == "open" ? Aperture::Open : Aperture::Pinhole;
      state.pinhole_index = r_index;
      const auto t0 = std::chrono::steady_clock::now();
      const IntegralImage img = renderer.render(state, ropt);
      const double ms = elapsed_ms(t0);
      export_image(img, r_out, r_depth, state.mask);
      std::cout << "render_ms " << ms << "\n"
                << "captures " << renderer.capture_count() << "\n"
                << "valid_fraction "
                << static_cast<double>(img.valid_count()) / (img.width() * img.height()) << "\n"
                << "wrote " << r_out << "\n";
      return 0;
    }

    if (*af) {
      parse_surface(af_surface, {});
      if (!af_roi.empty()) parse_ints(af_roi, 4, "--roi");
      if (!(af_zmin < af_zmax)) throw UsageError("--zmin must be below --zmax");
      LoadedSession ds = load_or_data_error(af_dataset, workers);
      Renderer renderer(std::move(ds.session), ds.defaults);
      ViewState state = renderer.initial_state();
      const FocalSurfaceParams tmpl = parse_surface(af_surface, state.surf);
      const auto& k = state.vcam.intrinsics;
      RoI roi = RoI::centered(k.width, k.height, 0.5);
      if (!af_roi.empty()) {
        const auto v = parse_ints(af_roi, 4, "--roi");
        roi = RoI{v[0], v[1], v[2], v[3]};
      }
      if (!(af_zmin < af_zmax)) throw UsageError("--zmin must be below --zmax");
      AutofocusOptions opt;
      opt.render = ropt;
      const auto t0 = std::chrono::steady_clock::now();
      const AutofocusResult res = autofocus_depth(renderer.session(), state.vcam, roi, af_zmin,
                                                  af_zmax, tmpl, renderer.reference_pose(), opt);
      std::cout << "z " << res.z << "\n"
                << "metric " << res.metric << "\n"
                << "evaluations " << res.samples.size() << "\n"
                << "elapsed_ms " << elapsed_ms(t0) << "\n";
      return 0;
    }

    if (*simc) {
      sim::SceneConfig cfg;
      cfg.density = s_density;
      cfg.seed = s_seed;
      cfg.occ_depth = s_occ;
      cfg.bg_depth = s_bg;
      cfg.shape = parse_shape(s_shape);
      cfg.palette = s_palette == "gray" ? sim::OccluderPalette::Gray : sim::OccluderPalette::Foliage;
      cfg.reference = Intrinsics::centered(s_width, s_height, s_focal);
      sim::TrajectorySpec traj;
      traj.kind = parse_motion(s_motion);
      traj.sa_width = s_sa;
      traj.count = s_n;
      traj.pivot_offset = s_pivot;
      traj.jitter_sigma = s_jitter;
      traj.jitter_seed = s_seed;
      const auto poses = sim::generate_trajectory(traj);
      const sim::SyntheticScene scene = sim::generate_scene(cfg);
      CaptureSession session = sim::render_views(scene, poses, cfg.reference);
      session.metadata["motion"] = sim::to_string(traj.kind);
      std::ostringstream sa;
      sa << s_sa;
      session.metadata["sa_width_m"] = sa.str();
      SessionDefaults defaults;
      defaults.surface = FocalSurfaceParams::plane(cfg.bg_depth);
      save_session(session, s_out, defaults, Band::Rgb);
      const auto [ex, ey] = sim::trajectory_extent(poses);
      std::cout << "captures " << session.size() << "\n"
                << "extent_x " << ex << "\n"
                << "extent_y " << ey << "\n"
                << "measured_density " << scene.measured_density() << "\n"
                << "wrote " << s_out << "\n";
      return 0;
    }

    if (*sweep) {
      const auto densities = parse_densities(w_densities);
      sim::TrajectorySpec traj;
      traj.kind = parse_motion(w_motion);
      traj.sa_width = w_sa;
      traj.count = w_n;
      sim::SceneConfig cfg;
      cfg.shape = parse_shape(w_shape);
      sim::SweepOptions opt;
      opt.seeds.clear();
      for (int s = 1; s <= w_seeds; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
      opt.workers = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
      opt.render.workers = 1;
      const auto t0 = std::chrono::steady_clock::now();
      const auto rows = sim::density_sweep(densities, traj, cfg, FocalSurfaceParams::plane(cfg.bg_depth), opt);
      if (w_out.empty()) {
        sim::write_sweep_csv(std::cout, rows);
      } else {
        std::ofstream out(w_out);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + w_out);
        sim::write_sweep_csv(out, rows);
        if (!out) throw Error(ErrorCode::IoFailure, "short write to " + w_out);
      }
      for (const auto& s : sim::summarize(rows)) {
        std::cerr << "density " << s.density << " mean_improvement_db " << s.mean_improvement_db << "\n";
      }
      std::cerr << "elapsed_ms " << elapsed_ms(t0) << "\n";
      return 0;
    }

    if (*adapt) {
      AdaptOptions opt;
      opt.poses_file = a_poses;
      opt.images_dir = a_images;
      opt.expected_sa_width = a_sa;
      opt.band = parse_name(band_from_string, a_band);
      if (a_fx) {
        // Principal point defaults are filled from the first image below.
        Intrinsics k;
        k.fx = *a_fx;
        k.fy = a_fy.value_or(*a_fx);
        const auto first = [&] {
          std::vector<std::filesystem::path> files;
          for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(a_src) / a_images))
            if (e.path().extension() == ".png") files.push_back(e.path());
          std::sort(files.begin(), files.end());
          if (files.empty()) throw Error(ErrorCode::ImageMissing, a_src + "/" + a_images);
          return files.front();
        }();
        const Image img = read_png(first).pixels;
        k.width = img.width();
        k.height = img.height();
        k.cx = a_cx.value_or(img.width() / 2.0);
        k.cy = a_cy.value_or(img.height() / 2.0);
        opt.intrinsics = k;
      }
      const AdaptReport rep = adapt_dataset(a_src, a_dst.empty() ? a_src : a_dst, opt);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "captures " << rep.captures << "\n"
                << "convention " << to_string(rep.convention) << (rep.ambiguous ? " (ambiguous)" : "")
                << "\n"
                << "extent_c2w " << rep.extent_c2w << "\n"
                << "extent_w2c " << rep.extent_w2c << "\n";
      return 0;
    }

    if (*serve) {
      LoadedSession ds;
      if (v_dataset.empty()) {
        std::cerr << "no dataset given; generating the bundled scene\n";
        ds = bundled_scene();
      } else {
        ds = load_or_data_error(v_dataset, workers);
      }
      RenderService service(std::move(ds.session), ds.defaults, ropt);
      ServerOptions opt;
      opt.port = v_port;
      opt.assets_dir = v_assets;
      if (const char* bind = std::getenv("SAI_BIND_ADDR"); bind && *bind) opt.bind = bind;
      run_server(service, opt, [&](unsigned short port) {
        std::cout << "listening on http://" << opt.bind << ":" << port << "/\n" << std::flush;
      });
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_data_error(e.code()) ? kExitData : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
