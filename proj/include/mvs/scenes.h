#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvs/camera.h"
#include "mvs/tensor.h"

namespace mvs {

enum class GeometryKind { TexturedPlane, HeightField, TwoPlaneOcclusion };

/// Synthetic scene: a textured surface around the world origin (z=0 plane),
/// observed by an arc of inward-looking cameras at distance arc_radius.
struct SceneSpec {
  GeometryKind kind = GeometryKind::TexturedPlane;
  uint64_t texture_seed = 1;
  size_t views = 5;
  double arc_radius = 4.5;
  double arc_span_deg = 40.0;  // total azimuth covered by the camera arc
  double elevation_deg = 30.0;
  size_t width = 80;
  size_t height = 64;
  double focal = 100.0;  // pixels
  double depth_min = 2.3;
  double depth_max = 8.3;
  double contrast = 1.0;
  double textureless_frac = 0.0;  // zero-contrast band width / surface footprint
  double noise_freq = 1.1;        // texture octave-0 frequency (1/scene unit)
  // height-field relief (kind == HeightField)
  double relief_amplitude = 0.7;
  double relief_freq = 0.45;
  // foreground plane (kind == TwoPlaneOcclusion)
  double near_offset = 1.2;  // z of the occluder plane
  double near_half_w = 1.0;
  double near_half_h = 0.7;

  void validate() const;
};

struct SceneView {
  Tensor image;  // [3,H,W] in [0,1]
  Tensor depth;  // [H,W]; 0 marks invalid
  Camera camera;
  std::vector<size_t> neighbors;  // other views sorted by camera-center distance
};

struct SceneData {
  std::optional<SceneSpec> spec;  // present for rendered (not loaded) scenes
  std::vector<SceneView> views;
};

/// Ray-cast the scene: per pixel, intersect the camera ray with the surface;
/// color from procedural value-noise texture; depth is z in the camera
/// frame. Deterministic in the spec.
SceneData render(const SceneSpec& spec);

/// Exact surface depth along the ray through continuous pixel (u,v);
/// 0 when the ray misses.
double analytic_depth(const SceneSpec& spec, const Camera& cam, double u,
                      double v);

/// Every valid ground-truth pixel of every view unprojected to its exact
/// surface point.
std::vector<Eigen::Vector3d> analytic_surface_cloud(const SceneData& data);

/// Directory layout: images/%04zu.png, cams/%04zu_cam.txt, depths/%04zu.pfm
/// and manifest.txt with lines "id img cam depth neighbors...".
void write_dataset(const SceneData& data, const std::filesystem::path& dir);
SceneData load_dataset(const std::filesystem::path& dir);

/// The bundled synthetic suite: pairs of (directory name, spec); names
/// starting with "eval" are held out from training.
std::vector<std::pair<std::string, SceneSpec>> default_suite();

/// Render every suite scene beneath `root` (skips scenes already present).
void materialize_suite(const std::filesystem::path& root);

}  // namespace mvs
