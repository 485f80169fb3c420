#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vgidm/scene.hpp"

namespace vgidm {

/// Two-view street-scene benchmark: one frame pair per scene.
struct SynthConfig {
  int scenes = 60;
  SceneConfig scene;
  RenderConfig render;
  Intrinsics intrinsics;
  int image_width = 1280;
  int image_height = 960;
  double min_gap = 2.0;        ///< forward camera displacement between views, meters
  double max_gap = 8.0;
  double lateral_jitter = 0.5;
  double yaw_jitter = 0.05;    ///< radians
  double test_fraction = 1.0 / 3.0;
  GroundTruthConfig ground_truth;
};

/**
 * Builds the two-view benchmark. Scene s yields frames 2s and 2s+1; the last
 * round(scenes * test_fraction) scenes form the test split.
 */
inline Dataset build_pair_dataset(const SynthConfig& cfg, std::uint64_t seed) {
  Dataset ds;
  const Rng root(seed);
  const int test_scenes = static_cast<int>(std::lround(cfg.scenes * cfg.test_fraction));
  for (int s = 0; s < cfg.scenes; ++s) {
    Rng srng = root.split(static_cast<std::uint64_t>(s));
    const auto scene = generate_scene(cfg.scene, srng.split("scene").seed(), static_cast<std::int64_t>(s) * 1000);
    Rng pose = srng.split("pose");
    const Vec3 c0{pose.uniform(-cfg.lateral_jitter, cfg.lateral_jitter), 0.0, 0.0};
    const Vec3 c1{pose.uniform(-cfg.lateral_jitter, cfg.lateral_jitter), 0.0, pose.uniform(cfg.min_gap, cfg.max_gap)};
    const auto cam0 = CameraModel::at(cfg.intrinsics, cfg.image_width, cfg.image_height, c0,
                                      pose.uniform(-cfg.yaw_jitter, cfg.yaw_jitter));
    const auto cam1 = CameraModel::at(cfg.intrinsics, cfg.image_width, cfg.image_height, c1,
                                      pose.uniform(-cfg.yaw_jitter, cfg.yaw_jitter));
    auto [fa, fb] = render_views(scene, cam0, cam1, cfg.render, srng.split("render").seed(), 2 * s);
    Rng sub = srng.split("subsample");
    auto gt = ground_truth_pairs(fa, fb, cfg.ground_truth, &sub);
    auto& split = s >= cfg.scenes - test_scenes ? ds.test : ds.train;
    split.pairs.insert(split.pairs.end(), gt.pairs.begin(), gt.pairs.end());
    ds.frames.push_back(std::move(fa));
    ds.frames.push_back(std::move(fb));
  }
  ds.reindex();
  return ds;
}

/// Small noise-free set where matched patches look alike and unmatched ones differ in class.
inline Dataset build_toy_separable_dataset(std::uint64_t seed, int scenes = 8) {
  SynthConfig cfg;
  cfg.scenes = scenes;
  cfg.scene.class_counts = {1, 1, 1, 1};
  cfg.scene.min_spacing = 4.0;
  cfg.render.depth_noise = 0.0;
  cfg.render.occlusion = 0.0;
  cfg.render.pixel_noise = 0.0;
  cfg.render.brightness_jitter = 0.0;
  cfg.min_gap = 0.5;
  cfg.max_gap = 1.0;
  cfg.lateral_jitter = 0.0;
  cfg.yaw_jitter = 0.0;
  cfg.test_fraction = 0.25;
  return build_pair_dataset(cfg, seed);
}

/// Two traversals of one long street for place recognition.
struct RouteConfig {
  double length = 240.0;       ///< meters of street along +z
  int landmarks = 120;
  double spacing = 2.0;
  double frame_step = 6.0;     ///< distance between consecutive frames of one traversal
  double revisit_offset = 1.0; ///< lateral offset of the second traversal
  double revisit_jitter = 3.0; ///< along-track jitter of second-traversal frames
  RenderConfig render;
  Intrinsics intrinsics;
  int image_width = 1280;
  int image_height = 960;
};

/// Frames of the first traversal come first, then the second traversal.
inline Dataset build_route_dataset(const RouteConfig& cfg, std::uint64_t seed, std::size_t* first_revisit = nullptr) {
  const Rng root(seed);
  SceneConfig sc;
  const int per_class = cfg.landmarks / 4;
  sc.class_counts = {per_class, per_class, per_class, cfg.landmarks - 3 * per_class};
  sc.bounds_min = {-10.0, -6.0, 0.0};
  sc.bounds_max = {10.0, 1.0, cfg.length};
  sc.min_spacing = cfg.spacing;
  const auto scene = generate_scene(sc, root.split("scene").seed());
  RenderConfig rc = cfg.render;
  Dataset ds;
  Rng pose = root.split("pose");
  std::int64_t fid = 0;
  const int steps = static_cast<int>((cfg.length - cfg.render.max_range) / cfg.frame_step);
  for (int pass = 0; pass < 2; ++pass) {
    if (pass == 1 && first_revisit) *first_revisit = ds.frames.size();
    for (int k = 0; k <= steps; ++k) {
      double z = k * cfg.frame_step - 10.0;
      double x = 0.0;
      if (pass == 1) {
        z += pose.uniform(-cfg.revisit_jitter, cfg.revisit_jitter);
        x = cfg.revisit_offset;
      }
      const auto cam = CameraModel::at(cfg.intrinsics, cfg.image_width, cfg.image_height, Vec3{x, 0.0, z},
                                       pose.uniform(-0.03, 0.03));
      ds.frames.push_back(render_frame(scene, cam, fid, rc, root.split("render").split(static_cast<std::uint64_t>(fid))));
      ++fid;
    }
  }
  ds.reindex();
  return ds;
}

/// Rectified stereo rig: right camera displaced by `baseline` along +x.
struct StereoConfig {
  int scenes = 20;
  double baseline = 0.5;
  SceneConfig scene;
  RenderConfig render;
  Intrinsics intrinsics;
  int image_width = 1280;
  int image_height = 960;
};

inline Dataset build_stereo_dataset(const StereoConfig& cfg, std::uint64_t seed) {
  const Rng root(seed);
  Dataset ds;
  for (int s = 0; s < cfg.scenes; ++s) {
    Rng srng = root.split(static_cast<std::uint64_t>(s));
    const auto scene = generate_scene(cfg.scene, srng.split("scene").seed(), static_cast<std::int64_t>(s) * 1000);
    const auto left = CameraModel::at(cfg.intrinsics, cfg.image_width, cfg.image_height, Vec3::Zero());
    const auto right =
        CameraModel::at(cfg.intrinsics, cfg.image_width, cfg.image_height, Vec3{cfg.baseline, 0.0, 0.0});
    auto [fl, fr] = render_views(scene, left, right, cfg.render, srng.split("render").seed(), 2 * s);
    auto gt = ground_truth_pairs(fl, fr, GroundTruthConfig{});
    ds.test.pairs.insert(ds.test.pairs.end(), gt.pairs.begin(), gt.pairs.end());
    ds.frames.push_back(std::move(fl));
    ds.frames.push_back(std::move(fr));
  }
  ds.reindex();
  return ds;
}

}  // namespace vgidm
