#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sai/dataset.hpp"
#include "sai/png_io.hpp"
#include "support.hpp"

using namespace sai;
using sai::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout only
};

Run sai_cli(const std::string& args) {
  const std::string cmd = std::string(SAI_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "key value" pairs printed one per line.
double value_of(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string k;
  double v = 0;
  while (in >> k) {
    if (k == key && in >> v) return v;
  }
  FAIL("missing key " << key << " in output:\n" << out);
  return 0;
}

const std::string kSmall = "--width 160 --height 120 --focal 125";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(sai_cli("").code == 2);
  CHECK(sai_cli("frobnicate").code == 2);
  CHECK(sai_cli("render").code == 2);  // --dataset is required
  CHECK(sai_cli("render --dataset x --bit-depth 12").code == 2);
  CHECK(sai_cli("render --dataset x --surface z=5,QQ=1").code == 2);
  CHECK(sai_cli("sweep --densities 0.9:0.1:0.1").code == 2);
}

TEST_CASE("data errors exit with 3") {
  TempDir dir;
  CHECK(sai_cli("render --dataset " + (dir / "nope").string()).code == 3);
  CHECK(sai_cli("autofocus --dataset " + dir.path().string()).code == 3);
}

TEST_CASE("help lists units") {
  const std::string render = sai_cli("render --help").out;
  CHECK(render.find("degrees") != std::string::npos);
  CHECK(render.find("(m") != std::string::npos);
  const std::string sim = sai_cli("simulate --help").out;
  for (const char* flag : {"--sa", "--occ-depth", "--bg-depth", "--jitter", "--width", "--focal"}) {
    const auto at = sim.find(flag);
    REQUIRE(at != std::string::npos);
    const std::string line = sim.substr(at, sim.find('\n', sim.find('\n', at) + 1) - at);
    CAPTURE(line);
    CHECK((line.find("(m)") != std::string::npos || line.find("(px)") != std::string::npos));
  }
  CHECK(sai_cli("autofocus --help").out.find("(m)") != std::string::npos);
}

TEST_CASE("simulate feeds render") {
  TempDir dir;
  const fs::path ds = dir / "diag";
  REQUIRE(sai_cli("simulate --motion diagonal --sa 0.16 --n 28 --density 0.3 " + kSmall +
                  " --out " + ds.string())
              .code == 0);
  const LoadedSession s = load_session(ds);
  CHECK(s.session.size() == 28);
  CHECK(s.defaults.surface.z + s.defaults.surface.sz == doctest::Approx(5.0));

  const fs::path out = dir / "o.png";
  const Run r = sai_cli("render --dataset " + ds.string() +
                        " --surface z=5,sx=1e4,sy=1e4,sz=1 --out " + out.string());
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "render_ms") > 0.0);
  CHECK(value_of(r.out, "captures") == 28);
  CHECK(fs::exists(out));
  CHECK(fs::exists(sidecar_path(out)));
  CHECK(read_png(out).pixels.width() == 160);

  // Pinhole view of capture 0 is that capture reprojected through the surface.
  const fs::path pin = dir / "pin.png";
  REQUIRE(sai_cli("render --dataset " + ds.string() + " --aperture pinhole --index 0 --out " +
                  pin.string())
              .code == 0);
  CHECK(sai_cli("render --dataset " + ds.string() + " --aperture pinhole --index 28").code == 4);

  const fs::path masked = dir / "m.png";
  CHECK(sai_cli("render --dataset " + ds.string() +
                " --mask vdvi --t 0.115 --lb 0.065 --ub 0.165 --bit-depth 16 --out " +
                masked.string())
            .code == 0);
  CHECK(read_png(masked).bit_depth == 16);
}

TEST_CASE("runs are byte-reproducible") {
  TempDir dir;
  for (const char* name : {"a", "b"})
    REQUIRE(sai_cli("simulate --n 4 --density 0.4 --seed 3 " + kSmall + " --out " + (dir / name).string())
                .code == 0);
  CHECK(slurp(dir / "a" / kManifestName) == slurp(dir / "b" / kManifestName));
  for (const auto& e : fs::directory_iterator(dir / "a" / "images"))
    CHECK(slurp(e.path()) == slurp(dir / "b" / "images" / e.path().filename()));

  const std::string o1 = (dir / "r1.png").string(), o2 = (dir / "r2.png").string();
  REQUIRE(sai_cli("render --dataset " + (dir / "a").string() + " --out " + o1).code == 0);
  REQUIRE(sai_cli("--workers 3 render --dataset " + (dir / "a").string() + " --out " + o2).code == 0);
  CHECK(slurp(o1) == slurp(o2));

  const Run s1 = sai_cli("sweep --densities 0.2,0.5 --seeds 1 --n 6");
  const Run s2 = sai_cli("sweep --densities 0.2,0.5 --seeds 1 --n 6");
  REQUIRE(s1.code == 0);
  CHECK(s1.out == s2.out);
}

TEST_CASE("autofocus finds the simulated background") {
  TempDir dir;
  const fs::path ds = dir / "af";
  REQUIRE(sai_cli("simulate --density 0.3 --n 20 --width 320 --height 240 --focal 250 --out " +
                  ds.string())
              .code == 0);
  const Run r = sai_cli("autofocus --dataset " + ds.string() + " --zmin 2.5 --zmax 10");
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "z") == doctest::Approx(5.0).epsilon(0.02));
}

TEST_CASE("sweep writes one CSV row per density and seed") {
  const Run r = sai_cli("sweep --densities 0.1:0.9:0.1 --seeds 3");
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "density,seed,psnr_single,psnr_integral,improvement_db");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 27);
}

TEST_CASE("adapt converts a pose-per-line layout") {
  TempDir src;
  fs::create_directories(src / "images");
  std::ofstream poses(src / "poses.txt");
  for (int i = 0; i < 3; ++i) {
    poses << "1 0 0 " << 0.05 * i << " 0 1 0 0 0 0 1 0\n";
    write_png(src / "images" / ("f" + std::to_string(i) + ".png"), testing::random_image(8, 6, 3, i));
  }
  poses.close();
  const Run r = sai_cli("adapt --src " + src.path().string() + " --sa-width 0.1 --fx 10");
  REQUIRE(r.code == 0);
  const LoadedSession s = load_session(src.path());
  CHECK(s.session.size() == 3);
  CHECK(s.session.captures[2].pose.translation.x() == doctest::Approx(0.1));
  CHECK(s.session.captures[0].intrinsics.fx == 10.0);
}
