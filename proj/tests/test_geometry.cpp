#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mvs/camera.h"
#include "mvs/errors.h"
#include "mvs/gradcheck.h"
#include "mvs/hypotheses.h"
#include "mvs/warp.h"

using namespace mvs;

namespace {

Camera simple_camera(double f, double cx, double cy, const Eigen::Matrix3d& R,
                     const Eigen::Vector3d& t, double dmin = 0.5,
                     double dmax = 10.0) {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = f;
  K(1, 1) = f;
  K(0, 2) = cx;
  K(1, 2) = cy;
  return Camera(K, R, t, dmin, dmax);
}

Eigen::Matrix3d rot_y(double rad) {
  return Eigen::AngleAxisd(rad, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

}  // namespace

TEST_CASE("camera construction validates invariants") {
  Eigen::Matrix3d bad_r = Eigen::Matrix3d::Identity();
  bad_r(0, 0) = 1.5;
  CHECK_THROWS_AS(simple_camera(100, 0, 0, bad_r, Eigen::Vector3d::Zero()),
                  DataError);

  Eigen::Matrix3d mirror = Eigen::Matrix3d::Identity();
  mirror(0, 0) = -1;  // orthonormal but det -1
  CHECK_THROWS_AS(simple_camera(100, 0, 0, mirror, Eigen::Vector3d::Zero()),
                  DataError);

  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(1, 0) = 2.0;
  CHECK_THROWS_AS(Camera(k, Eigen::Matrix3d::Identity(),
                         Eigen::Vector3d::Zero(), 1, 2),
                  DataError);
  k = Eigen::Matrix3d::Identity();
  k(0, 0) = -5.0;
  CHECK_THROWS_AS(Camera(k, Eigen::Matrix3d::Identity(),
                         Eigen::Vector3d::Zero(), 1, 2),
                  DataError);

  CHECK_THROWS_AS(simple_camera(100, 0, 0, Eigen::Matrix3d::Identity(),
                                Eigen::Vector3d::Zero(), 3.0, 2.0),
                  DataError);
}

TEST_CASE("warp_pixel identity pose is exact, many random poses") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::Matrix3d R = rot_y(u01(rng) - 0.5) *
                        Eigen::AngleAxisd(u01(rng) - 0.5,
                                          Eigen::Vector3d::UnitX())
                            .toRotationMatrix();
    Eigen::Vector3d t(u01(rng), u01(rng), u01(rng));
    Camera cam = simple_camera(50.0 + 100.0 * u01(rng), 10.0 * u01(rng),
                               10.0 * u01(rng), R, t);
    double px = 30.0 * u01(rng);
    double py = 20.0 * u01(rng);
    double d = 0.6 + 5.0 * u01(rng);
    PixelWarp w = warp_pixel(px, py, d, cam, cam, 64, 64);
    CHECK(w.valid);
    CHECK(std::abs(w.x - px) <= 1e-12);
    CHECK(std::abs(w.y - py) <= 1e-12);
    CHECK(w.src_depth == doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("warp_pixel baseline-translation example") {
  // K = diag(100,100,1), zero principal point, identity rotation,
  // source displaced by t = (1,0,0); p = (0,0), d = 2.
  // K^-1 p * d = (0,0,2); + t = (1,0,2); project -> (100/2, 0) = (50, 0).
  Camera ref = simple_camera(100, 0, 0, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d::Zero());
  Camera src = simple_camera(100, 0, 0, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d(1, 0, 0));
  PixelWarp w = warp_pixel(0, 0, 2.0, ref, src, 128, 128);
  CHECK(w.valid);
  CHECK(std::abs(w.x - 50.0) <= 1e-9);
  CHECK(std::abs(w.y - 0.0) <= 1e-9);
}

TEST_CASE("warp_pixel rejects points behind the source camera") {
  Camera ref = simple_camera(100, 32, 32, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d::Zero());
  // source looks the opposite way: 180 degree rotation about y
  Camera src = simple_camera(100, 32, 32, rot_y(M_PI), Eigen::Vector3d::Zero());
  PixelWarp w = warp_pixel(32, 32, 2.0, ref, src, 64, 64);
  CHECK_FALSE(w.valid);
  CHECK(w.src_depth < 0.0);
}

TEST_CASE("epipolar sanity: pure translation, shared K, d -> infinity") {
  Camera ref = simple_camera(80, 20, 15, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d::Zero(), 0.5, 1e9);
  Camera src = simple_camera(80, 20, 15, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d(0.3, -0.2, 0.0), 0.5, 1e9);
  double px = 11.0, py = 23.0;
  double prev_dist = 1e18;
  for (double d : {1.0, 10.0, 100.0, 1e4, 1e6}) {
    PixelWarp w = warp_pixel(px, py, d, ref, src, 40, 40);
    double dist = std::hypot(w.x - px, w.y - py);
    CHECK(dist < prev_dist);
    prev_dist = dist;
  }
  PixelWarp far = warp_pixel(px, py, 1e8, ref, src, 40, 40);
  CHECK(std::hypot(far.x - px, far.y - py) < 1e-5);
}

TEST_CASE("warp_feature_map identity pose replicates features") {
  std::mt19937_64 rng(5);
  Tensor feat = Tensor::uniform({3, 6, 8}, -1.0, 1.0, rng);
  Camera cam = simple_camera(40, 3.5, 2.5, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d::Zero(), 1.0, 5.0);
  DepthHypotheses hyp = make_uniform_hypotheses(4, 1.0, 5.0, 6, 8);
  WarpedFeatures wf = warp_feature_map(feat, hyp, cam, cam);
  REQUIRE(wf.volume.shape() == Shape{3, 4, 6, 8});
  for (double m : wf.mask.data()) CHECK(m == 1.0);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t d = 0; d < 4; ++d) {
      for (size_t y = 0; y < 6; ++y) {
        for (size_t x = 0; x < 8; ++x) {
          CHECK(wf.volume.at({c, d, y, x}) ==
                doctest::Approx(feat.at({c, y, x})).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("warping a constant map yields the constant wherever mask=1") {
  Tensor feat = Tensor::full({2, 10, 12}, 3.25);
  Camera ref = simple_camera(30, 5.5, 4.5, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d::Zero(), 1.0, 6.0);
  Camera src = simple_camera(30, 5.5, 4.5, rot_y(0.08),
                             Eigen::Vector3d(0.2, 0.1, 0.05), 1.0, 6.0);
  DepthHypotheses hyp = make_uniform_hypotheses(5, 1.0, 6.0, 10, 12);
  WarpedFeatures wf = warp_feature_map(feat, hyp, ref, src);
  size_t masked = 0;
  for (size_t d = 0; d < 5; ++d) {
    for (size_t y = 0; y < 10; ++y) {
      for (size_t x = 0; x < 12; ++x) {
        if (wf.mask.at({d, y, x}) == 1.0) {
          ++masked;
          for (size_t c = 0; c < 2; ++c) {
            CHECK(wf.volume.at({c, d, y, x}) ==
                  doctest::Approx(3.25).epsilon(1e-12));
          }
        } else {
          for (size_t c = 0; c < 2; ++c) CHECK(wf.volume.at({c, d, y, x}) == 0.0);
        }
      }
    }
  }
  CHECK(masked > 0);  // setup keeps a good part of the image in view
}

TEST_CASE("mask agrees with warp_pixel validity everywhere") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    Camera ref = simple_camera(25, 5.0, 4.0, Eigen::Matrix3d::Identity(),
                               Eigen::Vector3d::Zero(), 1.0, 6.0);
    Camera src = simple_camera(25, 5.0, 4.0, rot_y(u(rng)),
                               Eigen::Vector3d(u(rng), u(rng), u(rng)), 1.0, 6.0);
    Tensor feat = Tensor::uniform({1, 9, 11}, -1.0, 1.0, rng);
    DepthHypotheses hyp = make_uniform_hypotheses(3, 1.0, 6.0, 9, 11);
    WarpedFeatures wf = warp_feature_map(feat, hyp, ref, src);
    for (size_t d = 0; d < 3; ++d) {
      for (size_t y = 0; y < 9; ++y) {
        for (size_t x = 0; x < 11; ++x) {
          PixelWarp w = warp_pixel(static_cast<double>(x), static_cast<double>(y),
                                   hyp.values.at({d, y, x}), ref, src, 11, 9);
          CHECK(wf.mask.at({d, y, x}) == (w.valid ? 1.0 : 0.0));
        }
      }
    }
  }
}

TEST_CASE("warp gradient matches finite differences") {
  std::mt19937_64 rng(31);
  Tensor feat = Tensor::uniform({2, 6, 6}, -1.0, 1.0, rng, true);
  Camera ref = simple_camera(12, 2.5, 2.5, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d::Zero(), 1.0, 4.0);
  Camera src = simple_camera(12, 2.5, 2.5, rot_y(0.07),
                             Eigen::Vector3d(0.15, 0.06, 0.02), 1.0, 4.0);
  DepthHypotheses hyp = make_uniform_hypotheses(3, 1.0, 4.0, 6, 6);
  Tensor w = Tensor::uniform({2, 3, 6, 6}, -1.0, 1.0, rng);
  auto f = [&](const std::vector<Tensor>& in) {
    return sum(mul(warp_feature_map(in[0], hyp, ref, src).volume, w));
  };
  GradCheckReport rep = gradcheck(f, {feat});
  CHECK(rep.max_rel_err <= 1e-5);
}

TEST_CASE("uniform hypotheses: range [2,4], D=5") {
  DepthHypotheses hyp = make_uniform_hypotheses(5, 2.0, 4.0, 2, 2);
  hyp.validate(2.0, 4.0);
  std::vector<double> expect{2.0, 2.5, 3.0, 3.5, 4.0};
  for (size_t k = 0; k < 5; ++k) {
    CHECK(hyp.values.at({k, 0, 0}) == doctest::Approx(expect[k]).epsilon(1e-15));
    CHECK(hyp.values.at({k, 1, 1}) == doctest::Approx(expect[k]).epsilon(1e-15));
  }
}

TEST_CASE("refined hypotheses: centered window") {
  Tensor prev = Tensor::full({2, 2}, 3.0);
  DepthHypotheses hyp = make_refined_hypotheses(prev, 4, 0.1, 2.0, 4.0, 2, 2);
  hyp.validate(2.0, 4.0);
  std::vector<double> expect{2.85, 2.95, 3.05, 3.15};
  for (size_t k = 0; k < 4; ++k) {
    CHECK(hyp.values.at({k, 0, 0}) == doctest::Approx(expect[k]).epsilon(1e-12));
  }
}

TEST_CASE("refined hypotheses clamp at the range boundary") {
  Tensor prev = Tensor::full({2, 2}, 2.0);  // at depth_min
  DepthHypotheses lo = make_refined_hypotheses(prev, 4, 0.1, 2.0, 4.0, 2, 2);
  lo.validate(2.0, 4.0);
  CHECK(lo.values.at({0, 0, 0}) == doctest::Approx(2.0));
  CHECK(lo.values.at({3, 0, 0}) == doctest::Approx(2.3));

  Tensor hi = Tensor::full({2, 2}, 4.0);
  DepthHypotheses hih = make_refined_hypotheses(hi, 4, 0.1, 2.0, 4.0, 2, 2);
  hih.validate(2.0, 4.0);
  CHECK(hih.values.at({3, 0, 0}) == doctest::Approx(4.0));
  CHECK(hih.values.at({0, 0, 0}) == doctest::Approx(3.7));
}

TEST_CASE("make_hypotheses requires prev_depth beyond stage 1") {
  HypothesisConfig cfg;
  cfg.depth_min = 2.0;
  cfg.depth_max = 4.0;
  CHECK_THROWS_AS(make_hypotheses(2, nullptr, cfg, 4, 4), DataError);
  DepthHypotheses s1 = make_hypotheses(1, nullptr, cfg, 4, 4);
  CHECK(s1.depth_count() == 16);
}

TEST_CASE("camera file round trip is exact") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d R = rot_y(0.31) *
                      Eigen::AngleAxisd(-0.12, Eigen::Vector3d::UnitX())
                          .toRotationMatrix();
  Camera cam = simple_camera(123.456789012345, 31.25 + u(rng) * 1e-3,
                             24.0 + u(rng) * 1e-3, R,
                             Eigen::Vector3d(u(rng), u(rng), 2.0 + u(rng)),
                             1.983475, 7.12948);
  auto path = std::filesystem::temp_directory_path() / "mvs_cam_test.txt";
  write_camera_file(path, cam, 0.0875, 48);
  CameraRecord rec = read_camera_file(path);
  CHECK(rec.depth_count == 48);
  CHECK(rec.depth_interval == 0.0875);
  CHECK((rec.camera.K - cam.K).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rec.camera.R - cam.R).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rec.camera.t - cam.t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(rec.camera.depth_min == cam.depth_min);
  CHECK(rec.camera.depth_max == cam.depth_max);
  std::filesystem::remove(path);
}

TEST_CASE("malformed camera file errors name the problem") {
  auto path = std::filesystem::temp_directory_path() / "mvs_cam_bad.txt";
  {
    std::ofstream out(path);
    out << "extrinsic\n1 0 0 0\n0 1 0 oops\n";
  }
  CHECK_THROWS_AS(read_camera_file(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_camera_file(path), DataError);  // missing file
}

TEST_CASE("scaled camera keeps pixel-center geometry consistent") {
  Camera cam = simple_camera(64, 31.5, 23.5, Eigen::Matrix3d::Identity(),
                             Eigen::Vector3d(0.1, -0.2, 0.3), 1.0, 5.0);
  Camera half = cam.scaled(0.5);
  // a world point projecting to fine pixel (2u+0.5, 2v+0.5)-ish must land at
  // (u,v)-ish in the half-resolution camera
  Eigen::Vector3d xw = cam.unproject(21.0, 13.0, 2.5);
  Eigen::Vector3d fine = cam.project(xw);
  Eigen::Vector3d coarse = half.project(xw);
  CHECK(coarse.x() == doctest::Approx((fine.x() + 0.5) * 0.5 - 0.5).epsilon(1e-12));
  CHECK(coarse.y() == doctest::Approx((fine.y() + 0.5) * 0.5 - 0.5).epsilon(1e-12));
}
