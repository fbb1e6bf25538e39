#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mvs/errors.h"
#include "mvs/fusion.h"
#include "mvs/metrics.h"
#include "mvs/ply.h"
#include "mvs/scenes.h"

using namespace mvs;
namespace fs = std::filesystem;

namespace {

// O(n^2) oracle with the same per-pair arithmetic as the grid index.
double brute_nearest(const Eigen::Vector3d& q,
                     const std::vector<Eigen::Vector3d>& pts, double cap) {
  double best = cap;
  for (const auto& p : pts) {
    double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
    double d = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (d < best) best = d;
  }
  return best;
}

CloudMetrics brute_metrics(const PointCloud& recon, const PointCloud& gt,
                           double cap) {
  CloudMetrics m;
  for (const auto& p : recon.points) m.accuracy += brute_nearest(p, gt.points, cap);
  for (const auto& p : gt.points) m.completeness += brute_nearest(p, recon.points, cap);
  m.accuracy /= static_cast<double>(recon.points.size());
  m.completeness /= static_cast<double>(gt.points.size());
  m.overall = 0.5 * (m.accuracy + m.completeness);
  return m;
}

PointCloud random_cloud(size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointCloud c;
  for (size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

}  // namespace

TEST_CASE("ply round trip and structural validity") {
  std::mt19937_64 rng(5);
  PointCloud cloud = random_cloud(64, rng, 3.0);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    cloud.colors.push_back({static_cast<uint8_t>(i), 128, 250});
  }
  auto path = fs::temp_directory_path() / "mvs_cloud.ply";
  write_ply(path, cloud);

  // structural validation: header fields and vertex rows
  {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "ply");
    std::getline(in, line);
    CHECK(line == "format ascii 1.0");
    std::getline(in, line);
    CHECK(line == "element vertex 64");
    std::vector<std::string> props;
    while (std::getline(in, line) && line != "end_header") {
      CHECK(line.starts_with("property "));
      props.push_back(line);
    }
    CHECK(props.size() == 6);
    size_t rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      double x, y, z;
      int r, g, b;
      CHECK((is >> x >> y >> z >> r >> g >> b));
      ++rows;
    }
    CHECK(rows == 64);
  }

  PointCloud back = read_ply(path);
  REQUIRE(back.points.size() == cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    CHECK((back.points[i] - cloud.points[i]).norm() <= 1e-6);
    CHECK(back.colors[i] == cloud.colors[i]);
  }
  fs::remove(path);
}

TEST_CASE("identical clouds score zero") {
  std::mt19937_64 rng(7);
  PointCloud c = random_cloud(200, rng);
  CloudMetrics m = pointcloud_metrics(c, c, 0.5);
  CHECK(m.accuracy == 0.0);
  CHECK(m.completeness == 0.0);
  CHECK(m.overall == 0.0);
}

TEST_CASE("plane patch shifted along its normal scores the shift") {
  PointCloud gt, recon;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      Eigen::Vector3d p(0.0, i * 0.05, j * 0.05);
      gt.points.push_back(p);
      recon.points.push_back(p + Eigen::Vector3d(0.1, 0, 0));
    }
  }
  CloudMetrics m = pointcloud_metrics(recon, gt, 1.0);
  CHECK(m.accuracy == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(m.completeness == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(m.overall == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("grid nearest neighbor equals brute force exactly") {
  for (uint64_t seed : {1, 2, 3, 4, 5}) {
    std::mt19937_64 rng(seed);
    PointCloud a = random_cloud(500, rng);
    PointCloud b = random_cloud(500, rng);
    double cap = 0.4;
    CloudMetrics fast = pointcloud_metrics(a, b, cap);
    CloudMetrics slow = brute_metrics(a, b, cap);
    CHECK(fast.accuracy == slow.accuracy);
    CHECK(fast.completeness == slow.completeness);
    CHECK(fast.overall == slow.overall);
  }
}

TEST_CASE("swapping the clouds swaps accuracy and completeness") {
  std::mt19937_64 rng(11);
  PointCloud a = random_cloud(300, rng);
  PointCloud b = random_cloud(250, rng);
  CloudMetrics ab = pointcloud_metrics(a, b, 0.6);
  CloudMetrics ba = pointcloud_metrics(b, a, 0.6);
  CHECK(ab.accuracy == ba.completeness);
  CHECK(ab.completeness == ba.accuracy);
}

TEST_CASE("metrics are invariant under a rigid transform of both clouds") {
  std::mt19937_64 rng(13);
  PointCloud a = random_cloud(200, rng);
  PointCloud b = random_cloud(200, rng);
  CloudMetrics before = pointcloud_metrics(a, b, 0.5);
  Eigen::Matrix3d rot =
      (Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(-0.3, Eigen::Vector3d::UnitX())).toRotationMatrix();
  Eigen::Vector3d shift(1.3, -2.1, 0.4);
  PointCloud ar = a, br = b;
  for (auto& p : ar.points) p = rot * p + shift;
  for (auto& p : br.points) p = rot * p + shift;
  CloudMetrics after = pointcloud_metrics(ar, br, 0.5);
  CHECK(std::abs(after.accuracy - before.accuracy) <= 1e-9);
  CHECK(std::abs(after.completeness - before.completeness) <= 1e-9);
}

TEST_CASE("empty clouds are rejected") {
  PointCloud empty, one;
  one.points.emplace_back(0, 0, 0);
  CHECK_THROWS_AS(pointcloud_metrics(empty, one, 0.5), DataError);
  CHECK_THROWS_AS(pointcloud_metrics(one, empty, 0.5), DataError);
}

TEST_CASE("depth metrics hand-computed values") {
  Tensor gt = Tensor::from_data({1, 3}, {2.0, 2.0, 2.0});
  Tensor pred = Tensor::from_data({1, 3}, {2.5, 4.0, 6.0});  // errors .5, 2, 4
  Tensor valid = Tensor::full({1, 3}, 1.0);
  DepthMetricsResult r = depth_metrics(pred, gt, valid);
  CHECK(r.epe == doctest::Approx(6.5 / 3.0).epsilon(1e-12));
  CHECK(r.e1 == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(r.e3 == doctest::Approx(100.0 / 3.0).epsilon(1e-12));

  DepthMetricsResult zero = depth_metrics(gt, gt, valid);
  CHECK(zero.epe == 0.0);
  CHECK(zero.e1 == 0.0);
  CHECK(zero.e3 == 0.0);

  // a masked pixel with a huge error changes nothing
  Tensor pred2 = Tensor::from_data({1, 3}, {2.5, 4.0, 1e6});
  Tensor valid2 = Tensor::from_data({1, 3}, {1.0, 1.0, 0.0});
  Tensor gt2 = Tensor::from_data({1, 2}, {2.0, 2.0});
  Tensor pr2 = Tensor::from_data({1, 2}, {2.5, 4.0});
  DepthMetricsResult masked = depth_metrics(pred2, gt, valid2);
  DepthMetricsResult plain = depth_metrics(pr2, gt2, Tensor::full({1, 2}, 1.0));
  CHECK(masked.epe == plain.epe);
  CHECK(masked.e1 == plain.e1);
  CHECK(masked.e3 == plain.e3);

  CHECK_THROWS_AS(depth_metrics(pred, gt, Tensor::full({1, 3}, 0.0)), DataError);
}

TEST_CASE("depth metrics are monotone in pointwise error") {
  std::mt19937_64 rng(17);
  Tensor gt = Tensor::uniform({4, 4}, 2.0, 4.0, rng);
  Tensor valid = Tensor::full({4, 4}, 1.0);
  std::vector<double> err(16);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (auto& e : err) e = u(rng);
  auto offset = [&](double extra) {
    std::vector<double> data(16);
    for (size_t i = 0; i < 16; ++i) data[i] = gt.data()[i] + err[i] + extra;
    return Tensor::from_data({4, 4}, data);
  };
  DepthMetricsResult small = depth_metrics(offset(0.0), gt, valid);
  DepthMetricsResult big = depth_metrics(offset(0.8), gt, valid);
  CHECK(big.epe >= small.epe);
  CHECK(big.e1 >= small.e1);
  CHECK(big.e3 >= small.e3);
}

namespace {

SceneSpec fusion_scene() {
  SceneSpec spec;
  spec.kind = GeometryKind::TexturedPlane;
  spec.views = 4;
  spec.arc_radius = 4.0;
  spec.arc_span_deg = 6.0;
  spec.elevation_deg = 30.0;
  spec.focal = 100.0;
  spec.width = 64;
  spec.height = 48;
  spec.depth_min = 2.3;
  spec.depth_max = 8.3;
  return spec;
}

std::vector<FusionView> to_fusion_views(const SceneData& data) {
  std::vector<FusionView> views;
  for (const auto& v : data.views) {
    FusionView fv;
    fv.depth = v.depth;
    fv.confidence = Tensor::full(v.depth.shape(), 1.0);
    fv.camera = v.camera;
    fv.neighbors = v.neighbors;
    fv.image = v.image;
    views.push_back(std::move(fv));
  }
  return views;
}

// Can neighbor j bilinearly sample the surface point X seen by (v, pixel)?
bool observable(const SceneData& data, const Eigen::Vector3d& xw, size_t j) {
  const auto& cam = data.views[j].camera;
  size_t h = data.views[j].depth.dim(0), w = data.views[j].depth.dim(1);
  Eigen::Vector3d proj = cam.project(xw);
  if (proj.z() <= 0.0) return false;
  if (!(proj.x() >= 0 && proj.x() <= static_cast<double>(w - 1) &&
        proj.y() >= 0 && proj.y() <= static_cast<double>(h - 1))) {
    return false;
  }
  double da = analytic_depth(*data.spec, cam, proj.x(), proj.y());
  return da > 0.0 && std::abs(da - proj.z()) <= 1e-6;  // unoccluded
}

}  // namespace

TEST_CASE("fusing ground truth keeps exactly the observable pixels") {
  SceneData data = render(fusion_scene());
  FusionParams params;
  params.min_confidence = 0.0;
  params.max_reproj_px = 0.5;
  params.max_rel_depth_diff = 0.01;
  params.min_consistent = 3;  // k = N-1
  PointCloud cloud = filter_and_fuse(to_fusion_views(data), params);

  size_t expected = 0;
  for (size_t v = 0; v < data.views.size(); ++v) {
    const auto& view = data.views[v];
    for (size_t y = 0; y < view.depth.dim(0); ++y) {
      for (size_t x = 0; x < view.depth.dim(1); ++x) {
        double d = view.depth.at({y, x});
        if (d <= 0.0) continue;
        Eigen::Vector3d xw = view.camera.unproject(x, y, d);
        size_t obs = 0;
        for (size_t j : view.neighbors) obs += observable(data, xw, j) ? 1 : 0;
        if (obs >= params.min_consistent) ++expected;
      }
    }
  }
  CHECK(cloud.points.size() == expected);
  CHECK(expected > 10000);  // the rig overlaps almost everywhere
}

TEST_CASE("zero confidence under a positive threshold fuses nothing") {
  SceneData data = render(fusion_scene());
  auto views = to_fusion_views(data);
  for (auto& v : views) v.confidence = Tensor::zeros(v.depth.shape());
  FusionParams params;
  params.min_confidence = 0.3;
  PointCloud cloud = filter_and_fuse(views, params);
  CHECK(cloud.points.empty());
}

TEST_CASE("one inconsistent view among three consistent: kept at k=2") {
  SceneData data = render(fusion_scene());
  auto views = to_fusion_views(data);
  // corrupt the depth of the last view; pixels of view 0 still agree with 2
  // of their 3 neighbors
  views[3].depth = mul_scalar(views[3].depth, 1.5);
  FusionParams params;
  params.min_confidence = 0.0;
  params.min_consistent = 2;
  PointCloud kept = filter_and_fuse(views, params);
  CHECK(kept.points.size() > 8000);

  // corrupt two more: nobody reaches 2 consistent neighbors
  views[1].depth = mul_scalar(views[1].depth, 1.4);
  views[2].depth = mul_scalar(views[2].depth, 1.3);
  PointCloud gone = filter_and_fuse(views, params);
  CHECK(gone.points.size() == 0);
}

TEST_CASE("fused ground truth matches the analytic surface sampling") {
  SceneData data = render(fusion_scene());
  FusionParams params;
  params.min_confidence = 0.0;
  params.min_consistent = 2;
  PointCloud cloud = filter_and_fuse(to_fusion_views(data), params);
  PointCloud gt;
  gt.points = analytic_surface_cloud(data);
  CloudMetrics m = pointcloud_metrics(cloud, gt, 0.7);
  CHECK(m.accuracy < 1e-3);
  CHECK(m.completeness < 1e-3);
}
