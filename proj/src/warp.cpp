#include "mvs/warp.h"

#include <cmath>

#include "mvs/errors.h"

namespace mvs {

namespace {

struct RelativePose {
  Eigen::Matrix3d rot;       // src <- ref camera frame
  Eigen::Vector3d trans;
  Eigen::Matrix3d ref_K_inv;
  Eigen::Matrix3d src_K;
};

RelativePose relative_pose(const Camera& ref, const Camera& src) {
  RelativePose rp;
  rp.rot = src.R * ref.R.transpose();
  rp.trans = src.t - rp.rot * ref.t;
  rp.ref_K_inv = ref.K.inverse();
  rp.src_K = src.K;
  return rp;
}

// Projections that land within this distance of the image border still count
// as inside; exact-boundary warps (e.g. identity pose at the last column)
// would otherwise flip on fp round-off.
constexpr double kBoundsEps = 1e-9;

bool in_bounds(double u, double v, size_t w, size_t h) {
  return u >= -kBoundsEps && u <= static_cast<double>(w - 1) + kBoundsEps &&
         v >= -kBoundsEps && v <= static_cast<double>(h - 1) + kBoundsEps;
}

}  // namespace

PixelWarp warp_pixel(double x, double y, double depth, const Camera& ref_cam,
                     const Camera& src_cam, size_t src_width,
                     size_t src_height) {
  if (!(depth > 0.0)) throw DataError("warp_pixel: depth must be positive");
  RelativePose rp = relative_pose(ref_cam, src_cam);
  Eigen::Vector3d ray = rp.ref_K_inv * Eigen::Vector3d(x, y, 1.0);
  Eigen::Vector3d x_src = rp.rot * (ray * depth) + rp.trans;
  Eigen::Vector3d proj = rp.src_K * x_src;

  PixelWarp out;
  out.src_depth = x_src.z();
  if (!(x_src.z() > 0.0)) {
    out.valid = false;
    return out;
  }
  out.x = proj.x() / proj.z();
  out.y = proj.y() / proj.z();
  out.valid = in_bounds(out.x, out.y, src_width, src_height);
  return out;
}

WarpedFeatures warp_feature_map(const Tensor& src_features,
                                const DepthHypotheses& hypotheses,
                                const Camera& ref_cam, const Camera& src_cam) {
  if (src_features.ndim() != 3) {
    throw DataError("warp_feature_map: features must be [C,H,W]");
  }
  const size_t C = src_features.dim(0);
  const size_t SH = src_features.dim(1);
  const size_t SW = src_features.dim(2);
  const size_t D = hypotheses.depth_count();
  const size_t H = hypotheses.height();
  const size_t W = hypotheses.width();
  for (double v : src_features.data()) {
    if (!std::isfinite(v)) throw NumericError("warp_feature_map: non-finite feature");
  }

  RelativePose rp = relative_pose(ref_cam, src_cam);
  const size_t plane = H * W;
  const size_t n = D * plane;

  // Precompute bilinear taps per (d,y,x); base < 0 marks invalid samples.
  std::vector<long> base(n, -1);
  std::vector<double> w00(n, 0), w01(n, 0), w10(n, 0), w11(n, 0);
  std::vector<double> mask(n, 0.0);
  const double* hyp = hypotheses.values.data().data();

  for (size_t y = 0; y < H; ++y) {
    for (size_t x = 0; x < W; ++x) {
      // projection is linear in depth for a fixed pixel ray
      Eigen::Vector3d ray =
          rp.rot * (rp.ref_K_inv *
                    Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0));
      for (size_t d = 0; d < D; ++d) {
        size_t i = d * plane + y * W + x;
        Eigen::Vector3d x_src = ray * hyp[i] + rp.trans;
        if (!(x_src.z() > 0.0)) continue;
        Eigen::Vector3d proj = rp.src_K * x_src;
        double u = proj.x() / proj.z();
        double v = proj.y() / proj.z();
        if (!in_bounds(u, v, SW, SH)) continue;
        u = std::min(std::max(u, 0.0), static_cast<double>(SW - 1));
        v = std::min(std::max(v, 0.0), static_cast<double>(SH - 1));
        size_t x0 = std::min(static_cast<size_t>(u), SW >= 2 ? SW - 2 : 0);
        size_t y0 = std::min(static_cast<size_t>(v), SH >= 2 ? SH - 2 : 0);
        double fx = u - static_cast<double>(x0);
        double fy = v - static_cast<double>(y0);
        base[i] = static_cast<long>(y0 * SW + x0);
        w00[i] = (1 - fy) * (1 - fx);
        w01[i] = (1 - fy) * fx;
        w10[i] = fy * (1 - fx);
        w11[i] = fy * fx;
        mask[i] = 1.0;
      }
    }
  }

  std::vector<double> out(C * n, 0.0);
  const double* src = src_features.data().data();
  for (size_t c = 0; c < C; ++c) {
    const double* sp = src + c * SH * SW;
    double* op = out.data() + c * n;
    for (size_t i = 0; i < n; ++i) {
      long b = base[i];
      if (b < 0) continue;
      op[i] = w00[i] * sp[b] + w01[i] * sp[b + 1] + w10[i] * sp[b + SW] +
              w11[i] * sp[b + SW + 1];
    }
  }

  Tensor volume = Tensor::make_op(
      {C, D, H, W}, std::move(out), {src_features.node()},
      [C, SH, SW, n, base, w00, w01, w10, w11](Tensor::Node& self) {
        auto& pa = self.parents[0];
        if (!pa->requires_grad) return;
        for (size_t c = 0; c < C; ++c) {
          double* gp = pa->grad.data() + c * SH * SW;
          const double* go = self.grad.data() + c * n;
          for (size_t i = 0; i < n; ++i) {
            long b = base[i];
            if (b < 0) continue;
            double g = go[i];
            gp[b] += g * w00[i];
            gp[b + 1] += g * w01[i];
            gp[b + SW] += g * w10[i];
            gp[b + SW + 1] += g * w11[i];
          }
        }
      });
  Tensor mask_t = Tensor::from_data({D, H, W}, std::move(mask));
  return WarpedFeatures{volume, mask_t};
}

}  // namespace mvs
