#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "mvs/errors.h"
#include "mvs/image_io.h"
#include "mvs/scenes.h"

using namespace mvs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("pfm 1x1 exact bytes") {
  auto dir = temp_dir("mvs_pfm1");
  write_pfm(dir / "one.pfm", Tensor::from_data({1, 1}, {2.5}));
  std::vector<char> bytes = slurp(dir / "one.pfm");
  const char header[] = "Pf\n1 1\n-1.0\n";
  REQUIRE(bytes.size() == sizeof(header) - 1 + 4);
  CHECK(std::memcmp(bytes.data(), header, sizeof(header) - 1) == 0);
  float f = 2.5f;
  CHECK(std::memcmp(bytes.data() + sizeof(header) - 1, &f, 4) == 0);
  fs::remove_all(dir);
}

TEST_CASE("pfm round trip within fp32") {
  auto dir = temp_dir("mvs_pfm2");
  std::mt19937_64 rng(3);
  Tensor map = Tensor::uniform({16, 16}, 0.0, 10.0, rng);
  write_pfm(dir / "m.pfm", map);
  Tensor back = read_pfm(dir / "m.pfm");
  REQUIRE(back.shape() == map.shape());
  for (size_t i = 0; i < map.numel(); ++i) {
    CHECK(back.data()[i] == static_cast<double>(static_cast<float>(map.data()[i])));
  }
  fs::remove_all(dir);
}

TEST_CASE("pfm big-endian scale reads with byte swap") {
  auto dir = temp_dir("mvs_pfm3");
  {
    std::ofstream out(dir / "be.pfm", std::ios::binary);
    out << "Pf\n2 1\n1.0\n";
    float vals[2] = {1.5f, -3.25f};
    for (float v : vals) {
      unsigned char b[4];
      std::memcpy(b, &v, 4);
      std::swap(b[0], b[3]);
      std::swap(b[1], b[2]);
      out.write(reinterpret_cast<char*>(b), 4);
    }
  }
  Tensor back = read_pfm(dir / "be.pfm");
  CHECK(back.at({0, 0}) == 1.5);
  CHECK(back.at({0, 1}) == -3.25);
  fs::remove_all(dir);
}

TEST_CASE("malformed pfm errors name the byte offset") {
  auto dir = temp_dir("mvs_pfm4");
  {
    std::ofstream out(dir / "bad.pfm", std::ios::binary);
    out << "PX\n1 1\n-1.0\n";
  }
  try {
    read_pfm(dir / "bad.pfm");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  {
    std::ofstream out(dir / "trunc.pfm", std::ios::binary);
    out << "Pf\n4 4\n-1.0\n";
    out << "xx";  // far too little data
  }
  CHECK_THROWS_AS(read_pfm(dir / "trunc.pfm"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("png round trip is exact at 8-bit resolution") {
  auto dir = temp_dir("mvs_png");
  std::mt19937_64 rng(9);
  Tensor img = Tensor::uniform({3, 12, 10}, 0.0, 1.0, rng);
  write_png_rgb(dir / "img.png", img);
  Tensor back = read_png_rgb(dir / "img.png");
  REQUIRE(back.shape() == img.shape());
  for (size_t i = 0; i < img.numel(); ++i) {
    double q = std::lround(img.data()[i] * 255.0) / 255.0;
    CHECK(back.data()[i] == doctest::Approx(q).epsilon(1e-12));
  }
  fs::remove_all(dir);
}

TEST_CASE("fronto-parallel plane renders constant depth") {
  SceneSpec spec;
  spec.kind = GeometryKind::TexturedPlane;
  spec.views = 3;
  spec.arc_radius = 3.0;
  spec.arc_span_deg = 20.0;
  spec.elevation_deg = 0.0;
  spec.depth_min = 1.5;
  spec.depth_max = 5.0;
  spec.width = 32;
  spec.height = 24;
  SceneData data = render(spec);
  // center view sits on the axis, fronto-parallel to the plane
  const auto& depth = data.views[1].depth;
  for (double d : depth.data()) CHECK(d == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("two-plane scene: two depth values on-axis, silhouette consistent") {
  SceneSpec spec;
  spec.kind = GeometryKind::TwoPlaneOcclusion;
  spec.views = 3;
  spec.arc_radius = 4.0;
  spec.arc_span_deg = 16.0;
  spec.elevation_deg = 0.0;
  spec.focal = 60.0;
  spec.near_offset = 1.5;
  spec.near_half_w = 0.8;
  spec.near_half_h = 0.6;
  spec.depth_min = 1.5;
  spec.depth_max = 6.0;
  spec.width = 48;
  spec.height = 40;
  SceneData data = render(spec);

  const auto& axis = data.views[1];  // on-axis
  std::set<double> uniques(axis.depth.data().begin(), axis.depth.data().end());
  CHECK(uniques.size() == 2);  // 4.0 (background) and 2.5 (occluder)
  CHECK(uniques.count(4.0) == 1);
  CHECK(uniques.count(2.5) == 1);

  // near-plane silhouette: project near pixels of the axis view into the
  // side views; the analytic depth there must agree (same surface point)
  for (size_t ov : {0uL, 2uL}) {
    const auto& other = data.views[ov];
    size_t near_checked = 0;
    for (size_t y = 0; y < spec.height; ++y) {
      for (size_t x = 0; x < spec.width; ++x) {
        double d = axis.depth.at({y, x});
        if (d != 2.5) continue;  // near-plane pixels only
        Eigen::Vector3d xw = axis.camera.unproject(x, y, d);
        Eigen::Vector3d proj = other.camera.project(xw);
        if (proj.x() < 0 || proj.x() > spec.width - 1 || proj.y() < 0 ||
            proj.y() > spec.height - 1) {
          continue;
        }
        double da = analytic_depth(*data.spec, other.camera, proj.x(), proj.y());
        CHECK(std::abs(da - proj.z()) <= 1e-6);
        ++near_checked;
      }
    }
    CHECK(near_checked > 50);
  }
}

TEST_CASE("rendering is deterministic: bit-identical files") {
  SceneSpec spec;
  spec.views = 2;
  spec.width = 24;
  spec.height = 16;
  spec.kind = GeometryKind::HeightField;
  spec.relief_amplitude = 0.5;
  auto d1 = temp_dir("mvs_det1");
  auto d2 = temp_dir("mvs_det2");
  write_dataset(render(spec), d1);
  write_dataset(render(spec), d2);
  for (const char* rel : {"images/0000.png", "cams/0001_cam.txt", "depths/0000.pfm",
                          "manifest.txt"}) {
    CHECK(slurp(d1 / rel) == slurp(d2 / rel));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("dataset round trip: depths exact through fp32, cameras exact") {
  SceneSpec spec;
  spec.views = 5;
  spec.width = 32;
  spec.height = 24;
  auto dir = temp_dir("mvs_ds");
  SceneData data = render(spec);
  write_dataset(data, dir);
  SceneData back = load_dataset(dir);
  REQUIRE(back.views.size() == 5);
  for (size_t v = 0; v < 5; ++v) {
    const auto& a = data.views[v];
    const auto& b = back.views[v];
    for (size_t i = 0; i < a.depth.numel(); ++i) {
      CHECK(b.depth.data()[i] ==
            static_cast<double>(static_cast<float>(a.depth.data()[i])));
    }
    CHECK((a.camera.K - b.camera.K).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.camera.R - b.camera.R).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.camera.t - b.camera.t).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.neighbors == b.neighbors);
    // images come back quantized to 8 bits
    for (size_t i = 0; i < a.image.numel(); ++i) {
      double q = std::lround(a.image.data()[i] * 255.0) / 255.0;
      CHECK(std::abs(b.image.data()[i] - q) <= 1e-12);
    }
  }

  // neighbor lists: each view lists the other 4 ordered by pose distance
  for (size_t v = 0; v < 5; ++v) {
    CHECK(back.views[v].neighbors.size() == 4);
    double prev = -1.0;
    for (size_t n : back.views[v].neighbors) {
      double d = (data.views[v].camera.center() - data.views[n].camera.center()).norm();
      CHECK(d >= prev);
      prev = d;
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest with unknown ids raises") {
  SceneSpec spec;
  spec.views = 2;
  spec.width = 16;
  spec.height = 16;
  auto dir = temp_dir("mvs_badman");
  write_dataset(render(spec), dir);
  {
    std::ofstream out(dir / "manifest.txt", std::ios::app);
    out << "7 images/0000.png cams/0000_cam.txt depths/0000.pfm 0\n";
  }
  CHECK_THROWS_AS(load_dataset(dir), DataError);
  fs::remove_all(dir);
}

TEST_CASE("missing files raise an error naming the view") {
  SceneSpec spec;
  spec.views = 2;
  spec.width = 16;
  spec.height = 16;
  auto dir = temp_dir("mvs_missing");
  write_dataset(render(spec), dir);
  fs::remove(dir / "depths" / "0001.pfm");
  try {
    load_dataset(dir);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("view 1") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("cross-view consistency of rendered depth (1e-6)") {
  for (auto kind : {GeometryKind::TexturedPlane, GeometryKind::HeightField,
                    GeometryKind::TwoPlaneOcclusion}) {
    SceneSpec spec;
    spec.kind = kind;
    spec.views = 3;
    spec.width = 32;
    spec.height = 24;
    spec.relief_amplitude = 0.7;
    SceneData data = render(spec);
    size_t consistent = 0, occluded = 0;
    const auto& a = data.views[0];
    const auto& b = data.views[2];
    for (size_t y = 0; y < spec.height; y += 2) {
      for (size_t x = 0; x < spec.width; x += 2) {
        double d = a.depth.at({y, x});
        if (d <= 0.0) continue;
        Eigen::Vector3d xw = a.camera.unproject(x, y, d);
        Eigen::Vector3d proj = b.camera.project(xw);
        if (proj.z() <= 0 || proj.x() < 0 || proj.x() > spec.width - 1 ||
            proj.y() < 0 || proj.y() > spec.height - 1) {
          continue;
        }
        double db = analytic_depth(*data.spec, b.camera, proj.x(), proj.y());
        if (db > 0.0 && db < proj.z() - 1e-4) {
          ++occluded;  // another surface patch hides this point from b
        } else {
          CHECK(std::abs(db - proj.z()) <= 1e-6);
          ++consistent;
        }
      }
    }
    CHECK(consistent > 50);
    if (kind == GeometryKind::TexturedPlane) CHECK(occluded == 0);
  }
}

TEST_CASE("textureless band is flat, textured area is not") {
  SceneSpec spec;
  spec.kind = GeometryKind::TexturedPlane;
  spec.views = 2;
  spec.width = 64;
  spec.height = 32;
  spec.textureless_frac = 0.3;
  spec.elevation_deg = 0.0;
  SceneData data = render(spec);
  const auto& img = data.views[0].image;
  // center columns image the band around x=0
  size_t cx = spec.width / 2;
  double lo = 1.0, hi = 0.0;
  for (size_t y = 8; y < 24; ++y) {
    for (size_t x = cx - 2; x <= cx + 2; ++x) {
      double v = img.at({0, y, x});
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  CHECK(hi - lo <= 1e-12);  // flat gray
  double tlo = 1.0, thi = 0.0;
  for (size_t y = 8; y < 24; ++y) {
    for (size_t x = 2; x < 10; ++x) {
      double v = img.at({0, y, x});
      tlo = std::min(tlo, v);
      thi = std::max(thi, v);
    }
  }
  CHECK(thi - tlo > 0.05);  // actual texture
}

TEST_CASE("default suite covers the required scene mix") {
  auto suite = default_suite();
  REQUIRE(suite.size() == 7);
  size_t train = 0, eval = 0;
  for (const auto& [name, spec] : suite) {
    spec.validate();
    CHECK(spec.views == 5);
    CHECK(spec.width == 80);
    CHECK(spec.height == 64);
    if (name.starts_with("train_")) ++train;
    if (name.starts_with("eval_")) ++eval;
  }
  CHECK(train == 5);
  CHECK(eval == 2);
}

TEST_CASE("suite scene depths stay inside the declared range") {
  auto suite = default_suite();
  // one scene of each kind is enough to validate the geometry envelope
  for (size_t idx : {1uL, 2uL, 4uL}) {
    SceneSpec spec = suite[idx].second;
    spec.views = 2;  // keep the test quick
    SceneData data = render(spec);
    for (const auto& view : data.views) {
      for (double d : view.depth.data()) {
        if (d > 0.0) {
          CHECK(d >= spec.depth_min);
          CHECK(d <= spec.depth_max);
        }
      }
    }
  }
}
