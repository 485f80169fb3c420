#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "vgidm/matcher.hpp"
#include "vgidm/metrics.hpp"
#include "vgidm/scene.hpp"
#include "vgidm/tensor.hpp"

namespace vgidm {

/// S[i][j] = S_match(a_i, b_j) for bundles of two frames.
inline Tensor score_matrix(const std::vector<EmbeddingBundle>& a, const std::vector<EmbeddingBundle>& b,
                           const PairScorer& scorer) {
  if (a.empty() || b.empty()) throw std::invalid_argument("score_matrix: empty frame");
  Tensor S({a.size(), b.size()});
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) S.at(i, j) = scorer(a[i], b[j]).score;
  return S;
}

inline Tensor score_matrix(const Frame& a, const Frame& b, MatchModel& model) {
  if (a.patches.empty() || b.patches.empty()) throw std::invalid_argument("score_matrix: empty frame");
  return score_matrix(frame_bundles(a, model), frame_bundles(b, model), make_scorer(model));
}

struct SinkhornConfig {
  double dustbin = 0.2;
  double temperature = 0.1;
  int iterations = 100;
};

struct PartialAssignment {
  Tensor plan;  ///< (A+1) x (B+1), last row and column are the dustbins
  double row_residual = 0.0;  ///< max |row sum - 1| over the real rows
  double col_residual = 0.0;  ///< max |col sum - 1| over the real columns
};

namespace detail {

inline double logsumexp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

/**
 * Log-domain Sinkhorn over S augmented with a dustbin row and column of score z.
 * Real rows and columns carry unit mass; the dustbin row carries B and the
 * dustbin column A.
 */
inline PartialAssignment sinkhorn_assign(const Tensor& S, const SinkhornConfig& cfg = {}) {
  if (S.rank() != 2 || S.rows() == 0 || S.cols() == 0) throw ShapeError("sinkhorn: need a nonempty matrix");
  if (!S.all_finite() || !std::isfinite(cfg.dustbin)) throw std::invalid_argument("sinkhorn: non-finite entries");
  if (cfg.iterations < 1) throw std::invalid_argument("sinkhorn: iterations must be >= 1");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("sinkhorn: temperature must be > 0");
  const std::size_t A = S.rows(), B = S.cols();
  Tensor Z({A + 1, B + 1}, cfg.dustbin / cfg.temperature);
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < B; ++j) Z.at(i, j) = S.at(i, j) / cfg.temperature;
  std::vector<double> log_a(A + 1, 0.0), log_b(B + 1, 0.0);
  log_a[A] = std::log(static_cast<double>(B));
  log_b[B] = std::log(static_cast<double>(A));
  std::vector<double> u(A + 1, 0.0), v(B + 1, 0.0), buf;
  for (int t = 0; t < cfg.iterations; ++t) {
    for (std::size_t i = 0; i <= A; ++i) {
      buf.assign(B + 1, 0.0);
      for (std::size_t j = 0; j <= B; ++j) buf[j] = Z.at(i, j) + v[j];
      u[i] = log_a[i] - detail::logsumexp(buf);
    }
    for (std::size_t j = 0; j <= B; ++j) {
      buf.assign(A + 1, 0.0);
      for (std::size_t i = 0; i <= A; ++i) buf[i] = Z.at(i, j) + u[i];
      v[j] = log_b[j] - detail::logsumexp(buf);
    }
  }
  PartialAssignment out;
  out.plan = Tensor({A + 1, B + 1});
  for (std::size_t i = 0; i <= A; ++i)
    for (std::size_t j = 0; j <= B; ++j) out.plan.at(i, j) = std::exp(Z.at(i, j) + u[i] + v[j]);
  for (std::size_t i = 0; i < A; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= B; ++j) s += out.plan.at(i, j);
    out.row_residual = std::max(out.row_residual, std::abs(s - 1.0));
  }
  for (std::size_t j = 0; j < B; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i <= A; ++i) s += out.plan.at(i, j);
    out.col_residual = std::max(out.col_residual, std::abs(s - 1.0));
  }
  return out;
}

struct FrameMatch {
  double score = 0.0;
  int decision = 0;
};

/// sum_{i<A, j<B} S_ij P_ij / min(A, B); decision is score > threshold.
inline FrameMatch frame_match_score(const Tensor& S, const Tensor& P, double threshold = 0.5) {
  if (P.rank() != 2 || P.rows() < S.rows() || P.cols() < S.cols()) {
    throw ShapeError("frame_match_score: plan " + P.describe() + " vs scores " + S.describe());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < S.rows(); ++i)
    for (std::size_t j = 0; j < S.cols(); ++j) s += S.at(i, j) * P.at(i, j);
  FrameMatch m;
  m.score = s / static_cast<double>(std::min(S.rows(), S.cols()));
  m.decision = m.score > threshold ? 1 : 0;
  return m;
}

/// Sinkhorn-weighted frame score from per-frame bundles. A frame without patches scores 0.
inline FrameMatch frame_pair_score(const std::vector<EmbeddingBundle>& a, const std::vector<EmbeddingBundle>& b,
                                   const PairScorer& scorer, const SinkhornConfig& cfg, double threshold = 0.5) {
  if (a.empty() || b.empty()) return {};
  const Tensor S = score_matrix(a, b, scorer);
  return frame_match_score(S, sinkhorn_assign(S, cfg).plan, threshold);
}

inline constexpr double kSamePlaceRadius = 10.0;

/// Same place iff the camera centers are closer than 10 m.
inline bool same_place(const Frame& a, const Frame& b, double radius = kSamePlaceRadius) {
  return (a.position - b.position).norm() < radius;
}

struct PlaceResult {
  double threshold = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  Metrics metrics;
};

/**
 * Frame threshold maximizing F1 on validation scores; candidates are midpoints
 * between sorted distinct scores plus both ends, ties go to the lower threshold.
 */
inline double tune_threshold(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.empty()) throw std::invalid_argument("tune_threshold: empty validation set");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{sorted.front() - 1e-9};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  candidates.push_back(sorted.back());
  double best = candidates.front(), best_f1 = -1.0;
  for (double c : candidates) {
    const double f1 = evaluate_scores(scores, labels, c).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = c;
    }
  }
  return best;
}

/// Tunes the frame threshold on the validation scores and reports F1 and accuracy on the test scores.
inline PlaceResult place_recognition_eval(const std::vector<double>& val_scores, const std::vector<bool>& val_labels,
                                          const std::vector<double>& test_scores,
                                          const std::vector<bool>& test_labels) {
  PlaceResult r;
  r.threshold = tune_threshold(val_scores, val_labels);
  r.metrics = evaluate_scores(test_scores, test_labels, r.threshold);
  r.f1 = r.metrics.f1;
  r.accuracy = r.metrics.accuracy;
  return r;
}

struct Disparity {
  double pixels = 0.0;
  bool valid = false;  ///< false for non-positive disparity
};

/// Difference of the tight-box center columns, left minus right.
inline Disparity stereo_disparity(const Patch& left, const Patch& right) {
  Disparity d;
  d.pixels = left.bbox.center_u() - right.bbox.center_u();
  d.valid = d.pixels > 0.0;
  return d;
}

/// Z = fx * B / disparity.
inline double disparity_to_depth(double disparity, double fx, double baseline) {
  if (!(disparity > 0.0)) throw std::domain_error("disparity_to_depth: disparity must be positive");
  if (!(fx > 0.0) || !(baseline > 0.0)) throw std::domain_error("disparity_to_depth: fx and baseline must be positive");
  return fx * baseline / disparity;
}

/// Worst-case depth error for a disparity error of at most delta pixels: fx B delta / (d (d - delta)).
inline double depth_error_bound(double disparity, double fx, double baseline, double delta = 0.5) {
  return fx * baseline * delta / (disparity * (disparity - delta));
}

struct StereoSample {
  std::int64_t left_id = 0;
  std::int64_t right_id = 0;
  double score = 0.0;
  Disparity disparity;
  double depth = 0.0;       ///< estimated, 0 when the disparity is invalid
  double true_depth = 0.0;  ///< depth of the landmark in the left camera
};

struct StereoReport {
  std::vector<StereoSample> samples;
  double rmse = 0.0;        ///< over valid accepted samples
  std::size_t accepted = 0; ///< pairs with score above the threshold
  std::size_t invalid = 0;
};

inline constexpr double kStereoThreshold = 0.9;

/**
 * Depth from matched stereo patches. A pair enters the estimate when its
 * score exceeds the threshold; scores come from `score_of` and ground-truth
 * depth from the patch's true location in the left camera.
 */
template <class ScoreFn>
inline StereoReport stereo_eval(const Dataset& ds, const std::vector<PairLabel>& pairs, double baseline,
                                ScoreFn&& score_of, double threshold = kStereoThreshold) {
  StereoReport r;
  double se = 0.0;
  for (const auto& p : pairs) {
    const Patch& l = ds.patch(p.a);
    const Patch& rp = ds.patch(p.b);
    StereoSample s;
    s.left_id = p.a;
    s.right_id = p.b;
    s.score = score_of(p);
    if (!(s.score > threshold)) continue;
    ++r.accepted;
    const Frame& lf = ds.frames[ds.frame_index_of_patch(p.a)];
    s.disparity = stereo_disparity(l, rp);
    if (l.true_loc3d) s.true_depth = lf.camera.to_camera(*l.true_loc3d).z();
    if (s.disparity.valid) {
      s.depth = disparity_to_depth(s.disparity.pixels, lf.camera.intrinsics.fx, baseline);
      if (l.true_loc3d) se += (s.depth - s.true_depth) * (s.depth - s.true_depth);
    } else {
      ++r.invalid;
    }
    r.samples.push_back(s);
  }
  const std::size_t valid = r.accepted - r.invalid;
  r.rmse = valid ? std::sqrt(se / static_cast<double>(valid)) : 0.0;
  return r;
}

}  // namespace vgidm
