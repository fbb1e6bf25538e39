#include "mvs/features.h"

#include "mvs/errors.h"

namespace mvs {

namespace {

struct ConvSpec {
  std::string name;
  Shape kernel;  // [O,C,kh,kw]
};

std::vector<ConvSpec> conv_specs(const FeatureConfig& cfg) {
  size_t b = cfg.base_channels;
  auto [c1, c2, c3] = cfg.stage_channels;
  return {
      {"feat.enc0a", {b, 3, 3, 3}}, {"feat.enc0b", {b, b, 3, 3}},
      {"feat.enc1a", {b, b, 3, 3}}, {"feat.enc1b", {b, b, 3, 3}},
      {"feat.enc2a", {b, b, 3, 3}}, {"feat.enc2b", {b, b, 3, 3}},
      {"feat.out1", {c1, b, 1, 1}}, {"feat.lat2", {c2, b, 1, 1}},
      {"feat.lat3", {c3, b, 1, 1}}, {"feat.top3", {c3, c2, 1, 1}},
  };
}

const Tensor& param(const ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw DataError("missing parameter: " + name);
  return it->second;
}

Tensor conv(const Tensor& x, const ParamMap& p, const std::string& name,
            size_t stride, size_t padding) {
  return conv2d(x, param(p, name + ".w"), param(p, name + ".b"), stride, padding);
}

}  // namespace

ParamMap init_feature_params(const FeatureConfig& cfg, std::mt19937_64& rng) {
  if (cfg.stage_channels[0] != cfg.stage_channels[1]) {
    throw DataError("features: stage 1 and 2 channel counts must match");
  }
  ParamMap params;
  for (const auto& spec : conv_specs(cfg)) {
    size_t fan_in = spec.kernel[1] * spec.kernel[2] * spec.kernel[3];
    params.emplace(spec.name + ".w", he_uniform(spec.kernel, fan_in, rng));
    // small nonzero biases keep relu units off the exact kink on the flat
    // (zero-variance / zero-input) regions the pipeline produces
    params.emplace(spec.name + ".b",
                   Tensor::uniform({spec.kernel[0]}, -0.02, 0.02, rng, true));
  }
  return params;
}

FeaturePyramid extract(const Tensor& image, const ParamMap& params,
                       const FeatureConfig& cfg) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DataError("extract: image must be [3,H,W]");
  }
  size_t h = image.dim(1), w = image.dim(2);
  if (h % 4 != 0 || w % 4 != 0) {
    throw DataError("extract: H and W must be divisible by 4 (pad the image to "
                    "the next multiple of 4)");
  }

  Tensor a0 = relu(conv(image, params, "feat.enc0a", 1, 1));
  Tensor a0b = relu(conv(a0, params, "feat.enc0b", 1, 1));
  Tensor a1 = relu(conv(a0b, params, "feat.enc1a", 2, 1));
  Tensor a1b = relu(conv(a1, params, "feat.enc1b", 1, 1));
  Tensor a2 = relu(conv(a1b, params, "feat.enc2a", 2, 1));
  Tensor a2b = relu(conv(a2, params, "feat.enc2b", 1, 1));

  Tensor s1 = conv(a2b, params, "feat.out1", 1, 0);
  Tensor s2 = add(conv(a1b, params, "feat.lat2", 1, 0), upsample_nearest2x(s1));
  Tensor s3 = add(conv(a0b, params, "feat.lat3", 1, 0),
                  conv(upsample_nearest2x(s2), params, "feat.top3", 1, 0));
  return FeaturePyramid{{s1, s2, s3}};
}

}  // namespace mvs
