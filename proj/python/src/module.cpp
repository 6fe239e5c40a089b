// Python bindings. Images cross the boundary as float32 numpy arrays of
// shape (H, W, C) (or (H, W) for single-plane data); poses as 4x4 arrays.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "sai/autofocus.hpp"
#include "sai/dataset.hpp"
#include "sai/engine.hpp"
#include "sai/error.hpp"
#include "sai/masking.hpp"
#include "sai/png_io.hpp"
#include "sai/service.hpp"
#include "sai/sim.hpp"

namespace py = pybind11;
using namespace sai;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must have shape (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(w, h, c);
  std::memcpy(img.data().data(), a.data(), img.data().size() * sizeof(float));
  return img;
}

py::array_t<float> to_array(const Image& img, bool squeeze = false) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (!(squeeze && img.channels() == 1)) shape.push_back(img.channels());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), img.data().data(), img.data().size() * sizeof(float));
  return out;
}

Pose pose_from(const Mat4& m) { return Pose::from_matrix(m); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Synthetic-aperture integral imaging core";

  static py::exception<Error> sai_error(m, "SaiError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = sai_error;
      py::object inst = exc(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(sai_error.ptr(), inst.ptr());
    }
  });

  // Geometry ---------------------------------------------------------------
  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init<>())
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             return Intrinsics{fx, fy, cx, cy, width, height};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_static("centered", &Intrinsics::centered, py::arg("width"), py::arg("height"), py::arg("focal"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height)
      .def("validate", &Intrinsics::validate)
      .def(py::self == py::self)
      .def("__repr__", [](const Intrinsics& k) {
        return "Intrinsics(fx=" + std::to_string(k.fx) + ", fy=" + std::to_string(k.fy) + ", cx=" +
               std::to_string(k.cx) + ", cy=" + std::to_string(k.cy) + ", " + std::to_string(k.width) +
               "x" + std::to_string(k.height) + ")";
      });

  py::class_<FocalSurfaceParams>(m, "FocalSurfaceParams")
      .def(py::init<>())
      .def_static("plane", &FocalSurfaceParams::plane, py::arg("depth"), py::arg("lateral_scale") = 1e4)
      .def_readwrite("z", &FocalSurfaceParams::z)
      .def_readwrite("tx", &FocalSurfaceParams::tx)
      .def_readwrite("ty", &FocalSurfaceParams::ty)
      .def_readwrite("rx", &FocalSurfaceParams::rx)
      .def_readwrite("ry", &FocalSurfaceParams::ry)
      .def_readwrite("rz", &FocalSurfaceParams::rz)
      .def_readwrite("sx", &FocalSurfaceParams::sx)
      .def_readwrite("sy", &FocalSurfaceParams::sy)
      .def_readwrite("sz", &FocalSurfaceParams::sz)
      .def("validate", &FocalSurfaceParams::validate)
      .def(py::self == py::self);

  m.def("project_point",
        [](const Vec3& p, const Mat4& pose, const Intrinsics& k) {
          const Projection pr = project_point(p, pose_from(pose), k);
          return py::make_tuple(pr.u, pr.v, pr.depth);
        },
        py::arg("point"), py::arg("pose"), py::arg("intrinsics"),
        "Pixel coordinates (u, v) and depth of a world point.");
  m.def("pixel_ray",
        [](const Intrinsics& k, const Mat4& pose, double u, double v) {
          const Ray r = pixel_ray(k, pose_from(pose), u, v);
          return py::make_tuple(r.origin, r.direction);
        },
        py::arg("intrinsics"), py::arg("pose"), py::arg("u"), py::arg("v"));
  m.def("intersect_surface",
        [](const Vec3& origin, const Vec3& direction, const FocalSurfaceParams& s, const Mat4& ref)
            -> std::optional<Vec3> { return intersect_surface(Ray{origin, direction.normalized()}, s, pose_from(ref)); },
        py::arg("origin"), py::arg("direction"), py::arg("surface"), py::arg("ref_pose") = Mat4::Identity());
  m.def("blur_footprint", &blur_footprint, py::arg("surf_depth"), py::arg("occ_depth"), py::arg("sa_width"),
        py::arg("intrinsics"));

  // Sessions -----------------------------------------------------------------
  py::class_<CaptureSession>(m, "CaptureSession")
      .def(py::init<>())
      .def("add",
           [](CaptureSession& s, const FloatArray& image, const Mat4& pose, const Intrinsics& k,
              std::optional<FloatArray> alpha) {
             Capture c{to_image(image), pose_from(pose), k, {}, {}};
             if (alpha) c.alpha = to_image(*alpha);
             s.captures.push_back(std::move(c));
           },
           py::arg("image"), py::arg("pose"), py::arg("intrinsics"), py::arg("alpha") = py::none())
      .def("__len__", &CaptureSession::size)
      .def_property_readonly("channels", &CaptureSession::channels)
      .def("image", [](const CaptureSession& s, std::size_t i) { return to_array(s.captures.at(i).image); })
      .def("pose", [](const CaptureSession& s, std::size_t i) { return s.captures.at(i).pose.matrix(); })
      .def("intrinsics", [](const CaptureSession& s, std::size_t i) { return s.captures.at(i).intrinsics; })
      .def("alpha", [](const CaptureSession& s, std::size_t i) -> std::optional<py::array_t<float>> {
        const auto& a = s.captures.at(i).alpha;
        if (!a) return std::nullopt;
        return to_array(*a, true);
      });

  py::class_<LoadedSession>(m, "LoadedSession")
      .def_readonly("session", &LoadedSession::session)
      .def_property_readonly("surface", [](const LoadedSession& l) { return l.defaults.surface; })
      .def_property_readonly("mask", [](const LoadedSession& l) { return l.defaults.mask; })
      .def_property_readonly("band", [](const LoadedSession& l) { return to_string(l.band); })
      .def_readonly("warnings", &LoadedSession::warnings);

  m.def("load_session", [](const std::filesystem::path& p) { return load_session(p); }, py::arg("path"));
  m.def("save_session",
        [](const CaptureSession& s, const std::filesystem::path& dir, std::optional<FocalSurfaceParams> surface,
           std::optional<MaskConfig> mask) {
          SessionDefaults d;
          if (surface) d.surface = *surface;
          if (mask) d.mask = *mask;
          save_session(s, dir, d);
        },
        py::arg("session"), py::arg("path"), py::arg("surface") = py::none(), py::arg("mask") = py::none());

  // Rendering ------------------------------------------------------------------
  py::class_<IntegralImage>(m, "IntegralImage")
      .def_property_readonly("color", [](const IntegralImage& i) { return to_array(i.color); })
      .def_property_readonly("coverage", [](const IntegralImage& i) { return to_array(i.coverage, true); })
      .def_property_readonly("width", &IntegralImage::width)
      .def_property_readonly("height", &IntegralImage::height)
      .def_readonly("params_echo", &IntegralImage::params_echo)
      .def("valid_count", &IntegralImage::valid_count);

  auto render_opts = [](int workers) {
    RenderOptions o;
    o.workers = workers;
    return o;
  };
  m.def("render_integral",
        [render_opts](const CaptureSession& s, const Intrinsics& k, const Mat4& pose, const FocalSurfaceParams& surf,
                      const Mat4& ref, int workers) {
          py::gil_scoped_release release;
          return render_integral(s, {k, pose_from(pose)}, surf, pose_from(ref), render_opts(workers));
        },
        py::arg("session"), py::arg("intrinsics"), py::arg("pose"), py::arg("surface"),
        py::arg("ref_pose") = Mat4::Identity(), py::arg("workers") = 0);
  m.def("render_pinhole",
        [render_opts](const CaptureSession& s, std::size_t index, const Intrinsics& k, const Mat4& pose,
                      const FocalSurfaceParams& surf, const Mat4& ref, int workers) {
          py::gil_scoped_release release;
          return render_pinhole(s, index, {k, pose_from(pose)}, surf, pose_from(ref), render_opts(workers));
        },
        py::arg("session"), py::arg("index"), py::arg("intrinsics"), py::arg("pose"), py::arg("surface"),
        py::arg("ref_pose") = Mat4::Identity(), py::arg("workers") = 0);
  m.def("export_image",
        [](const IntegralImage& img, const std::filesystem::path& path, int bit_depth, std::optional<MaskConfig> mask) {
          export_image(img, path, bit_depth, mask.value_or(MaskConfig{}));
        },
        py::arg("image"), py::arg("path"), py::arg("bit_depth") = 8, py::arg("mask") = py::none());

  // Masking ----------------------------------------------------------------------
  py::enum_<MaskSource>(m, "MaskSource")
      .value("NONE", MaskSource::None)
      .value("VDVI", MaskSource::Vdvi)
      .value("EXTERNAL", MaskSource::External);
  py::class_<MaskConfig>(m, "MaskConfig")
      .def(py::init<>())
      .def(py::init([](MaskSource source, double t, double lb, double ub, std::string channel) {
             MaskConfig c{source, std::move(channel), t, lb, ub};
             c.validate();
             return c;
           }),
           py::arg("source"), py::arg("t") = 0.05, py::arg("lb") = 0.0, py::arg("ub") = 0.1,
           py::arg("channel") = "")
      .def_static("around", &MaskConfig::around, py::arg("source"), py::arg("t"), py::arg("delta") = 0.05)
      .def_readwrite("source", &MaskConfig::source)
      .def_readwrite("channel", &MaskConfig::channel)
      .def_readwrite("t", &MaskConfig::t)
      .def_readwrite("lb", &MaskConfig::lb)
      .def_readwrite("ub", &MaskConfig::ub)
      .def("validate", &MaskConfig::validate)
      .def(py::self == py::self);
  m.def("compute_vdvi", [](const FloatArray& rgb) { return to_array(compute_vdvi(to_image(rgb)), true); },
        py::arg("rgb"));
  m.def("alpha_from_mask", &alpha_from_mask, py::arg("value"), py::arg("config"));
  m.def("build_alpha_masks", &build_alpha_masks, py::arg("session"), py::arg("config"));

  // Autofocus ----------------------------------------------------------------------
  m.def("focus_metric",
        [](const IntegralImage& img, std::array<int, 4> roi) {
          return focus_metric(img, RoI{roi[0], roi[1], roi[2], roi[3]});
        },
        py::arg("image"), py::arg("roi"));
  m.def("autofocus_depth",
        [](const CaptureSession& s, const Intrinsics& k, const Mat4& pose, std::optional<std::array<int, 4>> roi,
           double z_min, double z_max, std::optional<FocalSurfaceParams> tmpl, const Mat4& ref) {
          const RoI r = roi ? RoI{(*roi)[0], (*roi)[1], (*roi)[2], (*roi)[3]} : RoI::centered(k.width, k.height);
          AutofocusResult res;
          {
            py::gil_scoped_release release;
            res = autofocus_depth(s, {k, pose_from(pose)}, r, z_min, z_max,
                                  tmpl.value_or(FocalSurfaceParams::plane(0.5 * (z_min + z_max))), pose_from(ref));
          }
          return py::make_tuple(res.z, res.metric, res.samples);
        },
        py::arg("session"), py::arg("intrinsics"), py::arg("pose"), py::arg("roi") = py::none(),
        py::arg("z_min") = 1.0, py::arg("z_max") = 30.0, py::arg("template") = py::none(),
        py::arg("ref_pose") = Mat4::Identity(),
        "Returns (z, metric, [(z, metric), ...]).");

  // Simulator ----------------------------------------------------------------------
  py::module_ simm = m.def_submodule("sim", "Two-plane occlusion simulator");
  py::class_<sim::SceneConfig>(simm, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("occ_depth", &sim::SceneConfig::occ_depth)
      .def_readwrite("bg_depth", &sim::SceneConfig::bg_depth)
      .def_readwrite("density", &sim::SceneConfig::density)
      .def_readwrite("seed", &sim::SceneConfig::seed)
      .def_readwrite("reference", &sim::SceneConfig::reference)
      .def_property("shape", [](const sim::SceneConfig& c) { return sim::to_string(c.shape); },
                    [](sim::SceneConfig& c, const std::string& s) { c.shape = sim::occluder_shape_from_string(s); });
  py::class_<sim::SyntheticScene>(simm, "SyntheticScene")
      .def_property_readonly("measured_density", &sim::SyntheticScene::measured_density)
      .def("occluded", [](const sim::SyntheticScene& s, double x, double y) { return s.occluder_at(x, y).has_value(); })
      .def("ground_truth", [](const sim::SyntheticScene& s, const Intrinsics& k, const Mat4& pose) {
        return to_array(s.ground_truth({k, pose_from(pose)}));
      });
  simm.def("generate_scene", &sim::generate_scene, py::arg("config"));

  py::class_<sim::TrajectorySpec>(simm, "TrajectorySpec")
      .def(py::init<>())
      .def_property("kind", [](const sim::TrajectorySpec& t) { return sim::to_string(t.kind); },
                    [](sim::TrajectorySpec& t, const std::string& s) { t.kind = sim::motion_kind_from_string(s); })
      .def_readwrite("sa_width", &sim::TrajectorySpec::sa_width)
      .def_readwrite("count", &sim::TrajectorySpec::count)
      .def_readwrite("pivot_offset", &sim::TrajectorySpec::pivot_offset)
      .def_readwrite("jitter_sigma", &sim::TrajectorySpec::jitter_sigma)
      .def_readwrite("jitter_seed", &sim::TrajectorySpec::jitter_seed);
  simm.def("generate_trajectory",
           [](const sim::TrajectorySpec& t) {
             std::vector<Mat4> out;
             for (const Pose& p : sim::generate_trajectory(t)) out.push_back(p.matrix());
             return out;
           },
           py::arg("spec"));
  simm.def("render_views",
           [](const sim::SyntheticScene& s, const std::vector<Mat4>& poses, const Intrinsics& k) {
             std::vector<Pose> ps;
             for (const Mat4& m : poses) ps.push_back(pose_from(m));
             py::gil_scoped_release release;
             return sim::render_views(s, ps, k);
           },
           py::arg("scene"), py::arg("poses"), py::arg("intrinsics"));
  simm.def("evaluate_recovery",
           [](const IntegralImage& img, const sim::SyntheticScene& s, const Intrinsics& k, const Mat4& pose) {
             const sim::RecoveryMetrics r = sim::evaluate_recovery(img, s, {k, pose_from(pose)});
             py::dict d;
             d["psnr_bg"] = r.psnr_bg;
             d["residual_occ"] = r.residual_occ;
             d["valid_fraction"] = r.valid_fraction;
             return d;
           },
           py::arg("image"), py::arg("scene"), py::arg("intrinsics"), py::arg("pose"));
  simm.def("density_sweep",
           [](const std::vector<double>& densities, const sim::TrajectorySpec& t, const sim::SceneConfig& cfg,
              const FocalSurfaceParams& surf, std::vector<std::uint64_t> seeds) {
             sim::SweepOptions o;
             o.seeds = std::move(seeds);
             std::vector<sim::SweepRow> rows;
             {
               py::gil_scoped_release release;
               rows = sim::density_sweep(densities, t, cfg, surf, o);
             }
             py::list out;
             for (const auto& r : rows)
               out.append(py::make_tuple(r.density, r.seed, r.psnr_single, r.psnr_integral, r.improvement_db));
             return out;
           },
           py::arg("densities"), py::arg("trajectory"), py::arg("scene"), py::arg("surface"),
           py::arg("seeds") = std::vector<std::uint64_t>{1, 2, 3},
           "Rows of (density, seed, psnr_single, psnr_integral, improvement_db).");

  // Frames -----------------------------------------------------------------------------
  m.def("encode_frame",
        [](const IntegralImage& img, std::uint32_t id, const std::string& echo) {
          return py::bytes(encode_frame(img, id, echo));
        },
        py::arg("image"), py::arg("frame_id"), py::arg("echo") = "{}");
  m.def("decode_frame",
        [](const py::bytes& b) {
          const Frame f = decode_frame(std::string_view(b));
          return py::make_tuple(f.frame_id, to_array(f.pixels), f.echo);
        },
        py::arg("data"), "Returns (frame_id, pixels, echo).");
}
