#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "vgidm/autodiff.hpp"
#include "vgidm/image.hpp"
#include "vgidm/rng.hpp"

namespace vgidm {

enum class FeaturizerKind { fixed_hist, tiny_conv };

struct FeaturizerConfig {
  FeaturizerKind kind = FeaturizerKind::fixed_hist;
  std::size_t n = 32;            ///< output dimension
  std::size_t channels = 1;      ///< input channels
  std::size_t conv_width = 8;    ///< tiny_conv feature maps per block
};

inline constexpr std::size_t kIntensityBins = 16;
inline constexpr std::size_t kOrientationBins = 8;
inline constexpr std::size_t kHistogramLength = kIntensityBins + kOrientationBins;

/// Uniform in [-bound, bound] entries.
inline Tensor uniform_tensor(Tensor::Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

/// Registers featurizer parameters under the "feat." prefix.
inline void init_featurizer(ParamSet& params, const FeaturizerConfig& cfg, Rng rng) {
  if (cfg.kind == FeaturizerKind::fixed_hist) {
    const std::size_t in = kHistogramLength * cfg.channels;
    Tensor proj({cfg.n, in});
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : proj.data()) v = rng.normal(0.0, s);
    params.add("feat.projection", std::move(proj));
    return;
  }
  const std::size_t w = cfg.conv_width;
  std::size_t in = cfg.channels;
  for (int b = 1; b <= 3; ++b) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
    params.add("feat.conv" + std::to_string(b) + ".w", uniform_tensor({w, in, 3, 3}, bound, rng));
    params.add("feat.conv" + std::to_string(b) + ".b", Tensor({w}));
    in = w;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(w));
  params.add("feat.linear.w", uniform_tensor({cfg.n, w}, bound, rng));
  params.add("feat.linear.b", Tensor({cfg.n}));
}

/**
 * Intensity (16 bins) and gradient-orientation (8 bins) histograms per
 * channel, each normalized by the pixel count. Pixels with zero gradient vote
 * into orientation bin 0.
 */
inline Tensor patch_histograms(const Image& img) {
  if (img.empty()) throw std::invalid_argument("featurize: empty pixel block");
  const std::size_t C = static_cast<std::size_t>(img.channels);
  Tensor h({kHistogramLength * C});
  const double inv = 1.0 / (static_cast<double>(img.width) * img.height);
  for (int c = 0; c < img.channels; ++c) {
    const std::size_t off = kHistogramLength * static_cast<std::size_t>(c);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        h[off + img.at(x, y, c) * kIntensityBins / 256] += inv;
        const double gx = img.at(std::min(x + 1, img.width - 1), y, c) - img.at(std::max(x - 1, 0), y, c);
        const double gy = img.at(x, std::min(y + 1, img.height - 1), c) - img.at(x, std::max(y - 1, 0), c);
        std::size_t bin = 0;
        if (gx != 0.0 || gy != 0.0) {
          const double a = std::atan2(gy, gx) + std::numbers::pi;  // [0, 2pi]
          bin = static_cast<std::size_t>(a / (2.0 * std::numbers::pi) * kOrientationBins) % kOrientationBins;
        }
        h[off + kIntensityBins + bin] += inv;
      }
    }
  }
  double norm = 0.0;
  for (double v : h.data()) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0) h *= 1.0 / norm;
  return h;
}

/// Histogram descriptor through the fixed seeded projection: R^{24C} -> R^n.
inline Tensor extract_fixed(const Image& img, const Tensor& projection) {
  const Tensor h = patch_histograms(img);
  if (projection.rank() != 2 || projection.cols() != h.size()) {
    throw ShapeError("extract_fixed: projection " + projection.describe() + " vs histogram " + h.describe());
  }
  Tensor out({projection.rows()});
  for (std::size_t i = 0; i < projection.rows(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) out[i] += projection.at(i, j) * h[j];
  return out;
}

/// Pixels scaled to [-0.5, 0.5] as a C x H x W tensor.
inline Tensor image_tensor(const Image& img) {
  if (img.empty()) throw std::invalid_argument("featurize: empty pixel block");
  Tensor t({static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
            static_cast<std::size_t>(img.width)});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            img.at(x, y, c) / 255.0 - 0.5;
  return t;
}

/// Three (3x3 conv, stride 2, ReLU) blocks, global average pooling, then a linear map to R^n.
inline Var extract_conv(Tape& tape, Var input, ParamSet& params) {
  Var x = input;
  for (int b = 1; b <= 3; ++b) {
    const std::string p = "feat.conv" + std::to_string(b);
    x = ops::relu(ops::conv2d(x, tape.param(params.at(p + ".w")), tape.param(params.at(p + ".b")), 2, 1));
  }
  Var pooled = ops::global_avg_pool(x);
  return ops::add(ops::matvec(tape.param(params.at("feat.linear.w")), pooled), tape.param(params.at("feat.linear.b")));
}

/// f(x) for one patch on the tape. The fixed variant is a constant node.
inline Var featurize(Tape& tape, const Image& img, ParamSet& params, const FeaturizerConfig& cfg) {
  if (cfg.kind == FeaturizerKind::fixed_hist) {
    return tape.constant(extract_fixed(img, params.at("feat.projection").value));
  }
  return extract_conv(tape, tape.constant(image_tensor(img)), params);
}

}  // namespace vgidm
