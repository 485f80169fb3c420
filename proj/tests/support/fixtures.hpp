#pragma once

#include <cstdint>

#include "vgidm/matcher.hpp"
#include "vgidm/rng.hpp"
#include "vgidm/scene.hpp"

namespace vgidm::testing {

/// Frame with `count` random-pixel patches at random 3D locations; patch ids are id * 100 + k.
inline Frame random_frame(std::int64_t id, std::size_t count, Rng& rng, int size = 8) {
  Frame f;
  f.id = id;
  f.camera = CameraModel::at(Intrinsics{}, 1280, 960, Vec3::Zero());
  for (std::size_t k = 0; k < count; ++k) {
    Patch p;
    p.id = id * 100 + static_cast<std::int64_t>(k);
    p.frame_id = id;
    p.bbox = {10, 10, 20, 20};
    p.pixels = Image(size, size, 1);
    for (auto& v : p.pixels.pixels) v = static_cast<std::uint8_t>(rng.integer(0, 255));
    p.loc3d = Vec3{rng.uniform(-5, 5), rng.uniform(-2, 2), rng.uniform(10, 20)};
    f.patches.push_back(std::move(p));
  }
  return f;
}

/// Small model for fast tests: n = 4, K = 3.
inline ModelConfig small_config(GnnArch arch = GnnArch::gat, FeaturizerKind feat = FeaturizerKind::fixed_hist) {
  ModelConfig c;
  c.n = 4;
  c.k = 3;
  c.heads = 2;
  c.conv_width = 3;
  c.arch = arch;
  c.featurizer = feat;
  return c;
}

}  // namespace vgidm::testing
