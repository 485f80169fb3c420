#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vgidm/image.hpp"
#include "vgidm/rng.hpp"

namespace vgidm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class LandmarkClass { traffic_light = 0, traffic_sign = 1, pole = 2, window = 3 };

inline constexpr std::array<const char*, 4> kLandmarkClassNames = {"traffic_light", "traffic_sign", "pole",
                                                                   "window"};

struct Landmark3D {
  std::int64_t id = 0;
  LandmarkClass cls = LandmarkClass::traffic_light;
  Vec3 position = Vec3::Zero();
  std::uint64_t appearance_seed = 0;
};

struct Intrinsics {
  double fx = 700.0;
  double fy = 700.0;
  double cx = 640.0;
  double cy = 480.0;
};

class CameraError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Pinhole camera; the pose maps world to camera coordinates, X_c = R X_w + t.
struct CameraModel {
  Intrinsics intrinsics;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1280;
  int height = 960;

  /// Camera at `position` looking along world +z, turned by `yaw` radians about the y axis.
  static CameraModel at(const Intrinsics& k, int w, int h, const Vec3& position, double yaw = 0.0) {
    CameraModel cam;
    cam.intrinsics = k;
    cam.width = w;
    cam.height = h;
    const Mat3 cam_to_world = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
    cam.rotation = cam_to_world.transpose();
    cam.translation = -cam.rotation * position;
    cam.validate();
    return cam;
  }

  Vec3 position() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3& camera) const { return rotation.transpose() * (camera - translation); }

  void validate() const {
    const auto& k = intrinsics;
    if (!(k.fx > 0 && k.fy > 0)) throw CameraError("camera: focal lengths must be positive");
    if (!(k.cx >= 0 && k.cx < width && k.cy >= 0 && k.cy < height)) {
      throw CameraError("camera: principal point outside the image");
    }
  }
};

class BehindCameraError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool in_view = false;
};

/// Projects a camera-frame point: u = fx X/Z + cx, v = fy Y/Z + cy.
inline Projection project_camera_point(const Vec3& pc, const CameraModel& cam) {
  if (!(pc.z() > 0.0)) throw BehindCameraError("point is behind the camera (z = " + std::to_string(pc.z()) + ")");
  const auto& k = cam.intrinsics;
  Projection p;
  p.u = k.fx * pc.x() / pc.z() + k.cx;
  p.v = k.fy * pc.y() / pc.z() + k.cy;
  p.depth = pc.z();
  p.in_view = p.u >= 0.0 && p.u < cam.width && p.v >= 0.0 && p.v < cam.height;
  return p;
}

/// Projects a world point through the camera pose and intrinsics.
inline Projection project_to_image(const Vec3& world, const CameraModel& cam) {
  return project_camera_point(cam.to_camera(world), cam);
}

/// Inverse of the pinhole projection for a known depth, in camera coordinates.
inline Vec3 back_project(double u, double v, double depth, const Intrinsics& k) {
  return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

struct BBox {
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;

  double width() const { return u1 - u0; }
  double height() const { return v1 - v0; }
  double center_u() const { return 0.5 * (u0 + u1); }
  double center_v() const { return 0.5 * (v0 + v1); }
  bool valid() const { return u0 < u1 && v0 < v1; }
  bool inside(int w, int h) const { return u0 >= 0 && v0 >= 0 && u1 <= w && v1 <= h; }
};

struct Patch {
  std::int64_t id = 0;
  std::int64_t frame_id = 0;
  BBox bbox;         ///< tight object box, pixels
  double margin = 0; ///< context margin added around bbox when the pixels were cropped
  Image pixels;
  std::optional<Vec3> loc3d;  ///< estimated 3D location, meters
  bool loc_is_world = true;
  std::optional<std::int64_t> landmark_id;
  std::optional<Vec3> true_loc3d;
};

struct Frame {
  std::int64_t id = 0;
  CameraModel camera;
  Vec3 position = Vec3::Zero();
  std::vector<Patch> patches;
};

struct PairLabel {
  std::int64_t a = 0;
  std::int64_t b = 0;
  bool matched = false;

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

enum class Split { train, test };

struct PairDataset {
  Split split = Split::train;
  std::vector<PairLabel> pairs;
};

/// Frames plus labelled train/test pairs, with a patch-id index.
struct Dataset {
  std::vector<Frame> frames;
  PairDataset train{Split::train, {}};
  PairDataset test{Split::test, {}};

  void reindex() {
    index_.clear();
    frame_index_.clear();
    for (std::size_t f = 0; f < frames.size(); ++f) {
      frame_index_[frames[f].id] = f;
      for (std::size_t p = 0; p < frames[f].patches.size(); ++p) index_[frames[f].patches[p].id] = {f, p};
    }
  }

  bool has_patch(std::int64_t id) const { return index_.count(id) != 0; }

  const Patch& patch(std::int64_t id) const {
    const auto [f, p] = locate(id);
    return frames[f].patches[p];
  }
  std::size_t frame_index_of_patch(std::int64_t id) const { return locate(id).first; }
  std::size_t position_in_frame(std::int64_t id) const { return locate(id).second; }
  std::size_t frame_index(std::int64_t frame_id) const {
    auto it = frame_index_.find(frame_id);
    if (it == frame_index_.end()) throw std::out_of_range("unknown frame id " + std::to_string(frame_id));
    return it->second;
  }
  std::size_t patch_count() const { return index_.size(); }

 private:
  std::pair<std::size_t, std::size_t> locate(std::int64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("unknown patch id " + std::to_string(id));
    return it->second;
  }

  std::unordered_map<std::int64_t, std::pair<std::size_t, std::size_t>> index_;
  std::unordered_map<std::int64_t, std::size_t> frame_index_;
};

// ---------------------------------------------------------------------------
// Scene generation

struct SceneConfig {
  std::array<int, 4> class_counts = {3, 3, 2, 2};
  Vec3 bounds_min{-10.0, -6.0, 12.0};
  Vec3 bounds_max{10.0, 1.0, 40.0};
  double min_spacing = 2.0;
  int max_attempts = 2000;  ///< rejection-sampling attempts per landmark
  /// Distinct looks per class within one scene; 0 gives every landmark its own.
  int prototypes_per_class = 0;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection-samples landmark positions with pairwise spacing >= min_spacing.
inline std::vector<Landmark3D> generate_scene(const SceneConfig& cfg, std::uint64_t seed,
                                              std::int64_t first_id = 0) {
  Rng rng(seed);
  std::vector<Landmark3D> out;
  std::int64_t next_id = first_id;
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < cfg.class_counts[static_cast<std::size_t>(c)]; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
        Vec3 p;
        for (int a = 0; a < 3; ++a) p[a] = rng.uniform(cfg.bounds_min[a], cfg.bounds_max[a]);
        bool ok = true;
        for (const auto& l : out) ok = ok && (l.position - p).norm() >= cfg.min_spacing;
        if (!ok) continue;
        std::uint64_t look = 0xA5A5ULL + out.size();
        if (cfg.prototypes_per_class > 0) {
          look = 0x5A5AULL + static_cast<std::uint64_t>(c) * 64 +
                 static_cast<std::uint64_t>(k % cfg.prototypes_per_class);
        }
        out.push_back({next_id++, static_cast<LandmarkClass>(c), p, splitmix64(seed ^ look)});
        placed = true;
      }
      if (!placed) {
        throw GenerationError("generate_scene: could not place landmark " + std::to_string(out.size()) +
                              " with spacing " + std::to_string(cfg.min_spacing) + " m after " +
                              std::to_string(cfg.max_attempts) + " attempts");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderConfig {
  int patch_size = 32;           ///< output H_p = W_p
  double depth_noise = 0.2;      ///< sigma_d, meters, per axis
  double occlusion = 0.1;        ///< probability a visible landmark is dropped
  double pixel_noise = 6.0;      ///< per-pixel Gaussian sigma, intensity units
  double brightness_jitter = 10; ///< per-view brightness offset sigma
  double margin = 0.0;           ///< context margin in pixels around the tight box
  double max_range = 60.0;       ///< landmarks farther than this are not detected
  int max_native = 96;           ///< cap on the native render resolution
};

namespace detail {

struct ClassGeometry {
  double width_m;
  double height_m;
};

inline ClassGeometry class_geometry(LandmarkClass c) {
  switch (c) {
    case LandmarkClass::traffic_light: return {0.35, 0.9};
    case LandmarkClass::traffic_sign: return {0.7, 0.7};
    case LandmarkClass::pole: return {0.25, 2.5};
    case LandmarkClass::window: return {1.0, 1.4};
  }
  return {1.0, 1.0};
}

/// Per-instance appearance parameters, fixed by the landmark's appearance seed.
struct Appearance {
  double base = 0, accent = 0, detail = 0, background = 0;
  int variant = 0, count = 0;
  double angle = 0, scale = 1;
};

inline Appearance appearance_of(const Landmark3D& l) {
  Rng r(l.appearance_seed);
  Appearance a;
  a.background = r.uniform(90, 150);
  a.scale = r.uniform(0.85, 1.15);
  switch (l.cls) {
    case LandmarkClass::traffic_light:
      a.base = r.uniform(15, 70);
      a.accent = r.uniform(170, 255);
      a.detail = a.base + r.uniform(15, 50);
      a.variant = static_cast<int>(r.integer(0, 2));
      break;
    case LandmarkClass::traffic_sign:
      a.base = r.uniform(150, 245);
      a.accent = r.uniform(10, 110);
      a.detail = r.uniform(10, 120);
      a.variant = static_cast<int>(r.integer(0, 2));
      a.angle = r.uniform(0, 3.14159);
      break;
    case LandmarkClass::pole:
      a.base = r.uniform(50, 170);
      a.accent = r.uniform(180, 250);
      a.count = static_cast<int>(r.integer(0, 3));
      break;
    case LandmarkClass::window:
      a.base = r.uniform(130, 230);
      a.accent = r.uniform(15, 90);
      a.count = static_cast<int>(r.integer(1, 3));
      a.variant = static_cast<int>(r.integer(1, 3));
      break;
  }
  return a;
}

/// Intensity of the landmark texture at normalized object coordinates (s, t) in [0,1]^2.
inline double texture(LandmarkClass c, const Appearance& a, double s, double t) {
  switch (c) {
    case LandmarkClass::traffic_light: {
      for (int k = 0; k < 3; ++k) {
        const double cy = (k + 0.5) / 3.0;
        const double dx = (s - 0.5) / 0.5, dy = (t - cy) / (1.0 / 6.0);
        if (dx * dx + dy * dy < 0.55) return k == a.variant ? a.accent : a.detail;
      }
      return a.base;
    }
    case LandmarkClass::traffic_sign: {
      const double x = s - 0.5, y = t - 0.5;
      bool inside = false, rim = false;
      if (a.variant == 0) {
        const double r = std::sqrt(x * x + y * y);
        inside = r < 0.5;
        rim = r > 0.4;
      } else if (a.variant == 1) {
        inside = t > 0.05 && std::abs(x) < 0.5 * (t - 0.05) / 0.95;
        rim = inside && !(t > 0.2 && std::abs(x) < 0.5 * (t - 0.2) / 0.95 - 0.05);
      } else {
        inside = std::abs(x) < 0.45 && std::abs(y) < 0.45;
        rim = inside && (std::abs(x) > 0.37 || std::abs(y) > 0.37);
      }
      if (!inside) return a.background;
      if (rim) return a.accent;
      const double proj = x * std::cos(a.angle) + y * std::sin(a.angle);
      return std::abs(proj) < 0.06 ? a.detail : a.base;
    }
    case LandmarkClass::pole: {
      if (std::abs(s - 0.5) > 0.4) return a.background;
      if (a.count > 0) {
        const double band = std::fmod(t * (2 * a.count + 1), 2.0);
        if (band > 1.0) return a.accent;
      }
      return a.base * (0.85 + 0.3 * (1.0 - std::abs(s - 0.5) / 0.4));
    }
    case LandmarkClass::window: {
      const double fs = s * a.variant, ft = t * a.count;
      const double ds = fs - std::floor(fs), dt = ft - std::floor(ft);
      const bool frame = s < 0.08 || s > 0.92 || t < 0.06 || t > 0.94 || ds < 0.1 || ds > 0.9 || dt < 0.08 ||
                         dt > 0.92;
      return frame ? a.base : a.accent;
    }
  }
  return a.background;
}

}  // namespace detail

/**
 * Renders the grayscale pixel block of one landmark as seen at a given box
 * size. The texture is sampled at the native pixel resolution of the box,
 * then resampled to patch_size x patch_size.
 */
inline Image render_landmark_pixels(const Landmark3D& l, double box_w, double box_h, double margin,
                                    const RenderConfig& cfg, Rng& view_rng) {
  const auto a = detail::appearance_of(l);
  const int nw = std::clamp(static_cast<int>(std::lround(box_w + 2 * margin)), 3, cfg.max_native);
  const int nh = std::clamp(static_cast<int>(std::lround(box_h + 2 * margin)), 3, cfg.max_native);
  const double brightness = view_rng.normal(0.0, cfg.brightness_jitter);
  const double mu = margin / (box_w + 2 * margin), mv = margin / (box_h + 2 * margin);
  Image native(nw, nh, 1);
  for (int y = 0; y < nh; ++y) {
    for (int x = 0; x < nw; ++x) {
      const double s = ((x + 0.5) / nw - mu) / (1.0 - 2 * mu);
      const double t = ((y + 0.5) / nh - mv) / (1.0 - 2 * mv);
      double v = (s < 0 || s > 1 || t < 0 || t > 1) ? a.background : detail::texture(l.cls, a, s, t);
      v += brightness + (cfg.pixel_noise > 0 ? view_rng.normal(0.0, cfg.pixel_noise) : 0.0);
      native.at(x, y) = to_u8(v);
    }
  }
  return resize_bilinear(native, cfg.patch_size, cfg.patch_size);
}

/**
 * Renders one frame: every landmark in front of the camera, within range,
 * whose box lies fully inside the image, survives the occlusion draw and
 * becomes a patch. Patch ids are frame_id * 1000 + k.
 */
inline Frame render_frame(const std::vector<Landmark3D>& scene, const CameraModel& cam, std::int64_t frame_id,
                          const RenderConfig& cfg, Rng rng) {
  Frame frame;
  frame.id = frame_id;
  frame.camera = cam;
  frame.position = cam.position();
  Rng occl = rng.split("occlusion");
  Rng depth = rng.split("depth");
  Rng pix = rng.split("pixels");
  std::int64_t k = 0;
  for (const auto& l : scene) {
    const Vec3 pc = cam.to_camera(l.position);
    // Draw unconditionally so each landmark consumes the same random stream.
    const bool dropped = occl.bernoulli(cfg.occlusion);
    const Vec3 noise{depth.normal(0.0, 1.0), depth.normal(0.0, 1.0), depth.normal(0.0, 1.0)};
    Rng view_rng = pix.split(static_cast<std::uint64_t>(l.id));
    if (pc.z() <= 0.5 || pc.z() > cfg.max_range || dropped) continue;
    const auto proj = project_camera_point(pc, cam);
    const auto geo = detail::class_geometry(l.cls);
    const double scale = detail::appearance_of(l).scale;
    const double bw = cam.intrinsics.fx * geo.width_m * scale / pc.z();
    const double bh = cam.intrinsics.fy * geo.height_m * scale / pc.z();
    BBox box{proj.u - bw / 2, proj.v - bh / 2, proj.u + bw / 2, proj.v + bh / 2};
    if (!box.inside(cam.width, cam.height)) continue;
    Patch p;
    p.id = frame_id * 1000 + k++;
    p.frame_id = frame_id;
    p.bbox = box;
    p.margin = cfg.margin;
    p.pixels = render_landmark_pixels(l, bw, bh, cfg.margin, cfg, view_rng);
    p.loc3d = l.position + cfg.depth_noise * noise;
    p.loc_is_world = true;
    p.landmark_id = l.id;
    p.true_loc3d = l.position;
    frame.patches.push_back(std::move(p));
  }
  return frame;
}

/// Renders the scene into two views with independent noise streams.
inline std::pair<Frame, Frame> render_views(const std::vector<Landmark3D>& scene, const CameraModel& a,
                                            const CameraModel& b, const RenderConfig& cfg, std::uint64_t seed,
                                            std::int64_t first_frame_id = 0) {
  Rng rng(seed);
  return {render_frame(scene, a, first_frame_id, cfg, rng.split("view0")),
          render_frame(scene, b, first_frame_id + 1, cfg, rng.split("view1"))};
}

// ---------------------------------------------------------------------------
// Ground truth and frame pairing

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroundTruthConfig {
  double tau_match = 1.0;            ///< meters, inclusive
  std::size_t max_unmatched = 0;     ///< per frame pair, 0 keeps all
};

struct GroundTruth {
  std::vector<PairLabel> pairs;
  std::size_t disagreements = 0;     ///< pairs where landmark ids and distance disagree
};

/**
 * Labels every cross-frame patch pair. Landmark ids decide when both patches
 * carry one; otherwise the L2 distance between 3D locations (true ones when
 * known, else estimated) decides, with distance <= tau counting as matched.
 */
inline GroundTruth ground_truth_pairs(const Frame& a, const Frame& b, const GroundTruthConfig& cfg,
                                      Rng* subsample = nullptr) {
  auto location = [](const Patch& p) -> const Vec3& {
    if (p.true_loc3d) return *p.true_loc3d;
    if (p.loc3d) return *p.loc3d;
    throw IngestionError("patch " + std::to_string(p.id) + " has no 3D location");
  };
  GroundTruth gt;
  std::vector<PairLabel> unmatched;
  for (const auto& pa : a.patches) {
    for (const auto& pb : b.patches) {
      const bool by_distance = (location(pa) - location(pb)).norm() <= cfg.tau_match;
      bool matched = by_distance;
      if (pa.landmark_id && pb.landmark_id) {
        matched = *pa.landmark_id == *pb.landmark_id;
        if (matched != by_distance) ++gt.disagreements;
      }
      (matched ? gt.pairs : unmatched).push_back({pa.id, pb.id, matched});
    }
  }
  if (cfg.max_unmatched > 0 && unmatched.size() > cfg.max_unmatched) {
    if (subsample == nullptr) throw std::invalid_argument("ground_truth_pairs: subsampling needs an Rng");
    subsample->shuffle(unmatched.begin(), unmatched.end());
    unmatched.resize(cfg.max_unmatched);
  }
  gt.pairs.insert(gt.pairs.end(), unmatched.begin(), unmatched.end());
  return gt;
}

/// Frame index pairs (i < j) whose camera distance lies in [min_gap, max_dist].
inline std::vector<std::pair<std::size_t, std::size_t>> pair_frames(const std::vector<Frame>& frames,
                                                                     double min_gap, double max_dist) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = i + 1; j < frames.size(); ++j) {
      const double d = (frames[i].position - frames[j].position).norm();
      if (d >= min_gap && d <= max_dist) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace vgidm
