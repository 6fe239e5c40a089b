#include "sai/dataset.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "sai/error.hpp"
#include "sai/params_json.hpp"
#include "sai/png_io.hpp"

namespace fs = std::filesystem;

namespace sai {

namespace {

constexpr int kManifestVersion = 1;
// Rotation blocks closer than this to orthonormal are kept bit-exact;
// anything between this and the load tolerance is re-orthonormalized.
constexpr double kExactOrthonormal = 1e-12;

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ManifestMissing, path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ManifestMissing, path.string() + ": not valid JSON (" + e.what() + ")");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

// Checks one manifest pose; returns a warning when it had to be repaired.
std::optional<std::string> check_pose(Pose& pose, const Mat4& m, std::size_t index,
                                      double tolerance) {
  const auto bad = [&](const std::string& why) {
    return Error(ErrorCode::PoseInvalid, "capture " + std::to_string(index) + ": " + why);
  };
  if (!m.allFinite()) throw bad("non-finite entries");
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw bad("last row must be 0 0 0 1");
  }
  const double err = orthonormality_error(pose.rotation);
  if (err > tolerance || pose.rotation.determinant() <= 0.0) {
    throw bad("rotation block is not orthonormal (error " + std::to_string(err) + ")");
  }
  if (err > kExactOrthonormal) {
    pose.rotation = orthonormalize(pose.rotation);
    std::ostringstream os;
    os << "capture " << index << ": rotation re-orthonormalized (error " << err << ")";
    return os.str();
  }
  return std::nullopt;
}

struct CaptureEntry {
  fs::path image;
  std::map<std::string, fs::path> aux;
};

// Runs fn(i) for i in [0, n) on a few threads. If any call throws, the
// exception of the lowest failing index is rethrown so errors are
// deterministic.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(workers > 0 ? workers : hw));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(run);
    run();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Image aux_from_png(const Image& png) {
  // Stored as p = (v + 1) / 2 so negative mask values survive PNG.
  Image out(png.width(), png.height(), 1);
  for (int y = 0; y < png.height(); ++y)
    for (int x = 0; x < png.width(); ++x) out.at(x, y) = 2.0f * png.at(x, y, 0) - 1.0f;
  return out;
}

Image aux_to_png(const Image& aux) {
  Image out(aux.width(), aux.height(), 1);
  for (int y = 0; y < aux.height(); ++y)
    for (int x = 0; x < aux.width(); ++x) out.at(x, y) = 0.5f * (aux.at(x, y, 0) + 1.0f);
  return out;
}

Image color_channels(const Image& img) {
  if (img.channels() == 1 || img.channels() == 3) return img;
  const int c = img.channels() - 1;  // drop the alpha channel
  Image out(img.width(), img.height(), c);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int k = 0; k < c; ++k) out.at(x, y, k) = img.at(x, y, k);
  return out;
}

std::string metadata_value(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::string to_string(Band band) {
  switch (band) {
    case Band::Rgb: return "rgb";
    case Band::Nir: return "nir";
    case Band::Fir: return "fir";
    case Band::Reg: return "reg";
    case Band::Mono: return "mono";
  }
  return "rgb";
}

Band band_from_string(const std::string& name) {
  if (name == "rgb") return Band::Rgb;
  if (name == "nir") return Band::Nir;
  if (name == "fir") return Band::Fir;
  if (name == "reg") return Band::Reg;
  if (name == "mono") return Band::Mono;
  throw Error(ErrorCode::InvalidArgument, "unknown band '" + name + "'");
}

std::string to_string(PoseConvention convention) {
  return convention == PoseConvention::CameraToWorld ? "camera-to-world" : "world-to-camera";
}


LoadedSession load_session(const fs::path& path, const LoadOptions& options) {
  fs::path manifest = path;
  if (fs::is_directory(path)) manifest = path / kManifestName;
  if (!fs::is_regular_file(manifest)) throw Error(ErrorCode::ManifestMissing, manifest.string());
  const Json j = read_json(manifest);

  LoadedSession out;
  out.root = manifest.parent_path();
  const auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::ManifestMissing, manifest.string() + ": " + why);
  };

  std::vector<CaptureEntry> entries;
  try {
    if (!j.is_object()) throw malformed("top level must be an object");
    if (j.value("version", 0) != kManifestVersion) throw malformed("unsupported version (expected 1)");
    out.band = band_from_string(j.value("band", std::string("rgb")));
    std::optional<Intrinsics> shared;
    if (j.contains("intrinsics")) {
      shared.emplace();
      update_from_json(*shared, j["intrinsics"]);
      shared->validate();
    }
    if (j.contains("defaults")) {
      const Json& d = j["defaults"];
      if (d.contains("surface")) update_from_json(out.defaults.surface, d["surface"]);
      if (d.contains("mask")) update_from_json(out.defaults.mask, d["mask"]);
      out.defaults.surface.validate();
      out.defaults.mask.validate();
    }
    if (j.contains("metadata")) {
      for (const auto& [k, v] : j["metadata"].items()) out.session.metadata[k] = metadata_value(v);
    }

    if (!j.contains("captures") || !j["captures"].is_array()) throw malformed("missing captures");
    const Json& caps = j["captures"];
    entries.resize(caps.size());
    out.session.captures.resize(caps.size());
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const Json& c = caps[i];
      const std::string where = "capture " + std::to_string(i);
      if (!c.is_object() || !c.contains("image_path") || !c["image_path"].is_string()) {
        throw malformed(where + " needs image_path");
      }
      entries[i].image = out.root / c["image_path"].get<std::string>();
      if (c.contains("aux_mask_path")) {
        entries[i].aux[kAuxMaskName] = out.root / c["aux_mask_path"].get<std::string>();
      }
      if (c.contains("aux")) {
        for (const auto& [name, p] : c["aux"].items()) entries[i].aux[name] = out.root / p.get<std::string>();
      }

      Capture& cap = out.session.captures[i];
      const Json pose = c.value("pose", Json());
      if (!pose.is_array() || pose.size() != 16 ||
          !std::all_of(pose.begin(), pose.end(), [](const Json& v) { return v.is_number(); })) {
        throw Error(ErrorCode::PoseInvalid, where + ": pose must be 16 numbers");
      }
      Mat4 m;
      for (int k = 0; k < 16; ++k) m(k / 4, k % 4) = pose[k].get<double>();
      cap.pose = Pose::from_matrix(m);
      if (auto warning = check_pose(cap.pose, m, i, options.pose_tolerance)) {
        out.warnings.push_back(*warning);
      }

      if (c.contains("intrinsics")) {
        cap.intrinsics = shared.value_or(Intrinsics{});
        update_from_json(cap.intrinsics, c["intrinsics"]);
        cap.intrinsics.validate();
      } else if (shared) {
        cap.intrinsics = *shared;
      } else {
        throw malformed(where + " has no intrinsics");
      }
    }
  } catch (const Json::exception& e) {
    throw malformed(e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) throw malformed(e.what());
    throw;
  }

  // Report the first missing file before spending time on decoding.
  for (const auto& e : entries) {
    if (!fs::is_regular_file(e.image)) throw Error(ErrorCode::ImageMissing, e.image.string());
    for (const auto& [name, p] : e.aux) {
      if (!fs::is_regular_file(p)) throw Error(ErrorCode::ImageMissing, p.string());
    }
  }

  std::vector<char> dropped_alpha(entries.size(), 0);
  parallel_for(entries.size(), options.workers, [&](std::size_t i) {
    Capture& cap = out.session.captures[i];
    const Image raw = read_png(entries[i].image).pixels;
    dropped_alpha[i] = raw.channels() == 2 || raw.channels() == 4;
    cap.image = color_channels(raw);
    const auto& k = cap.intrinsics;
    if (cap.image.width() != k.width || cap.image.height() != k.height) {
      throw Error(ErrorCode::ImageMissing,
                  entries[i].image.string() + " is " + std::to_string(cap.image.width()) + "x" +
                      std::to_string(cap.image.height()) + " but the intrinsics say " +
                      std::to_string(k.width) + "x" + std::to_string(k.height));
    }
    for (const auto& [name, p] : entries[i].aux) {
      Image aux = aux_from_png(read_png(p).pixels);
      if (!aux.same_shape(Image(k.width, k.height, 1))) {
        throw Error(ErrorCode::ImageMissing, p.string() + " does not match the capture size");
      }
      cap.aux.emplace(name, std::move(aux));
    }
  });

  for (std::size_t i = 0; i < out.session.size(); ++i) {
    if (out.session.captures[i].image.channels() != out.session.channels()) {
      throw Error(ErrorCode::MixedChannels,
                  entries[i].image.string() + " has " +
                      std::to_string(out.session.captures[i].image.channels()) +
                      " channels, capture 0 has " + std::to_string(out.session.channels()));
    }
    if (dropped_alpha[i]) {
      out.warnings.push_back("capture " + std::to_string(i) + ": alpha channel ignored");
    }
  }
  if (out.session.empty()) throw Error(ErrorCode::EmptySession, manifest.string() + " has no captures");
  return out;
}

void save_session(const CaptureSession& session, const fs::path& dir,
                  const SessionDefaults& defaults, std::optional<Band> band) {
  session.validate();
  ensure_dir(dir / "images");

  Band b = session.channels() == 3 ? Band::Rgb : Band::Mono;
  if (auto it = session.metadata.find("band"); it != session.metadata.end()) {
    b = band_from_string(it->second);
  }
  if (band) b = *band;

  Json j;
  j["version"] = kManifestVersion;
  j["band"] = to_string(b);
  const Intrinsics& k0 = session.captures.front().intrinsics;
  const bool shared = std::all_of(session.captures.begin(), session.captures.end(), [&](const Capture& c) {
    return to_json(c.intrinsics) == to_json(k0);
  });
  if (shared) j["intrinsics"] = to_json(k0);
  j["defaults"] = {{"surface", to_json(defaults.surface)}, {"mask", to_json(defaults.mask)}};
  j["metadata"] = Json::object();
  for (const auto& [key, v] : session.metadata) j["metadata"][key] = v;

  std::vector<std::string> names(session.size());
  Json caps = Json::array();
  for (std::size_t i = 0; i < session.size(); ++i) {
    const Capture& c = session.captures[i];
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << i << ".png";
    names[i] = name.str();
    Json e{{"image_path", "images/" + names[i]}, {"pose", to_json(c.pose)}};
    if (!shared) e["intrinsics"] = to_json(c.intrinsics);
    for (const auto& [plane, img] : c.aux) {
      const std::string rel = "aux/" + plane + "/" + names[i];
      if (plane == kAuxMaskName) e["aux_mask_path"] = rel;
      else e["aux"][plane] = rel;
    }
    caps.push_back(std::move(e));
  }
  j["captures"] = std::move(caps);

  for (const auto& c : session.captures)
    for (const auto& [plane, img] : c.aux) ensure_dir(dir / "aux" / plane);

  parallel_for(session.size(), 0, [&](std::size_t i) {
    const Capture& c = session.captures[i];
    write_png(dir / "images" / names[i], c.image, 16);
    for (const auto& [plane, img] : c.aux) {
      write_png(dir / "aux" / plane / names[i], aux_to_png(img), 16);
    }
  });
  write_text(dir / kManifestName, j.dump(2) + "\n");
}

fs::path sidecar_path(const fs::path& image_path) {
  fs::path p = image_path;
  p += ".json";
  return p;
}

void export_image(const IntegralImage& img, const fs::path& path, int bit_depth,
                  const MaskConfig& mask) {
  const int c = img.color.channels();
  Image out(img.width(), img.height(), c + 1);
  std::size_t valid = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!img.valid(x, y)) continue;  // color and alpha stay 0
      ++valid;
      for (int k = 0; k < c; ++k) out.at(x, y, k) = img.color.at(x, y, k);
      out.at(x, y, c) = 1.0f;
    }
  }
  if (!path.parent_path().empty()) ensure_dir(path.parent_path());
  write_png(path, out, bit_depth);

  const double total = static_cast<double>(img.width()) * img.height();
  Json side{{"image", path.filename().string()},
            {"width", img.width()},
            {"height", img.height()},
            {"bit_depth", bit_depth},
            {"valid_fraction", total > 0 ? valid / total : 0.0},
            {"surface", to_json(img.params_echo)},
            {"mask", to_json(mask)}};
  write_text(sidecar_path(path), side.dump(2) + "\n");
}

double center_spread(const std::vector<Pose>& poses) {
  double best = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i)
    for (std::size_t k = i + 1; k < poses.size(); ++k)
      best = std::max(best, (poses[i].center() - poses[k].center()).norm());
  return best;
}

AdaptReport adapt_dataset(const fs::path& src, const fs::path& dst, const AdaptOptions& options) {
  const fs::path pose_file = src / options.poses_file;
  std::ifstream in(pose_file);
  if (!in) throw Error(ErrorCode::ManifestMissing, pose_file.string());

  AdaptReport report;
  std::vector<Mat4> raw;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (!ls.eof() || (v.size() != 12 && v.size() != 16)) {
      throw Error(ErrorCode::PoseInvalid, pose_file.string() + ":" + std::to_string(lineno) +
                                              ": expected 12 or 16 numbers");
    }
    Mat4 m = Mat4::Identity();
    for (std::size_t k = 0; k < v.size(); ++k) m(k / 4, k % 4) = v[k];
    raw.push_back(m);
  }

  const fs::path image_dir = src / options.images_dir;
  std::vector<fs::path> images;
  if (fs::is_directory(image_dir)) {
    for (const auto& e : fs::directory_iterator(image_dir)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (e.is_regular_file() && ext == ".png") images.push_back(e.path());
    }
  }
  std::sort(images.begin(), images.end());
  if (images.size() < raw.size()) {
    throw Error(ErrorCode::ImageMissing, image_dir.string() + " holds " + std::to_string(images.size()) +
                                             " PNG files for " + std::to_string(raw.size()) + " poses");
  }
  if (images.size() > raw.size()) {
    throw Error(ErrorCode::PoseInvalid, pose_file.string() + " has " + std::to_string(raw.size()) +
                                            " poses for " + std::to_string(images.size()) + " images");
  }
  if (raw.empty()) throw Error(ErrorCode::EmptySession, pose_file.string() + " has no poses");

  std::vector<Pose> c2w, w2c;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Pose p = Pose::from_matrix(raw[i]);
    if (auto w = check_pose(p, raw[i], i, 1e-4)) report.warnings.push_back(*w);
    c2w.push_back(p);
    Pose inv;
    inv.rotation = p.rotation.transpose();
    inv.translation = -inv.rotation * p.translation;
    w2c.push_back(inv);
  }
  report.captures = raw.size();
  report.extent_c2w = center_spread(c2w);
  report.extent_w2c = center_spread(w2c);

  // Pick the reading whose camera centers span the expected width; flag the
  // choice when the data cannot tell the two apart.
  if (options.expected_sa_width && *options.expected_sa_width > 0.0) {
    const auto miss = [&](double extent) {
      return extent > 0.0 ? std::abs(std::log(extent / *options.expected_sa_width)) : 1e9;
    };
    const double mc = miss(report.extent_c2w);
    const double mw = miss(report.extent_w2c);
    report.convention = mw < mc ? PoseConvention::WorldToCamera : PoseConvention::CameraToWorld;
    if (std::min(mc, mw) > std::log(2.0)) {
      report.ambiguous = true;
      report.warnings.push_back("neither pose reading spans the expected SA width; assuming " +
                                to_string(report.convention));
    } else if (std::abs(mc - mw) < std::log(1.25)) {
      report.ambiguous = true;
      report.warnings.push_back("both pose readings span the expected SA width; assuming " +
                                to_string(report.convention));
    }
  } else {
    report.ambiguous = true;
    report.warnings.push_back("no expected SA width given; assuming camera-to-world poses");
  }
  const auto& poses = report.convention == PoseConvention::CameraToWorld ? c2w : w2c;

  Intrinsics k;
  if (options.intrinsics) {
    k = *options.intrinsics;
  } else {
    const Image first = read_png(images.front()).pixels;
    k = Intrinsics::centered(first.width(), first.height(),
                             0.5 * first.width() / std::tan(30.0 * M_PI / 180.0));
    report.warnings.push_back("no intrinsics given; assuming a 60 degree horizontal field of view");
  }
  k.validate();

  ensure_dir(dst);
  const fs::path root = fs::weakly_canonical(fs::absolute(dst));
  Json j{{"version", kManifestVersion}, {"band", to_string(options.band)}, {"intrinsics", to_json(k)}};
  j["defaults"] = {{"surface", to_json(FocalSurfaceParams{})}, {"mask", to_json(MaskConfig{})}};
  j["metadata"] = {{"adapted_from", fs::weakly_canonical(fs::absolute(src)).string()},
                   {"pose_convention", to_string(report.convention)}};
  Json caps = Json::array();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const fs::path rel = fs::relative(fs::weakly_canonical(fs::absolute(images[i])), root);
    caps.push_back({{"image_path", rel.generic_string()}, {"pose", to_json(poses[i])}});
  }
  j["captures"] = std::move(caps);
  write_text(dst / kManifestName, j.dump(2) + "\n");
  return report;
}

}  // namespace sai
