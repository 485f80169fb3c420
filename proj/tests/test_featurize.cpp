#include <gtest/gtest.h>

#include "vgidm/featurize.hpp"

using namespace vgidm;

namespace {

Image noise_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 1);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.integer(0, 255));
  return img;
}

FeaturizerConfig conv_config(std::size_t n = 4, std::size_t width = 3) {
  FeaturizerConfig cfg;
  cfg.kind = FeaturizerKind::tiny_conv;
  cfg.n = n;
  cfg.conv_width = width;
  return cfg;
}

}  // namespace

TEST(Histograms, ConstantPatchPutsAllGradientMassInBinZero) {
  const Image flat(8, 8, 1, 77);
  const Tensor h = patch_histograms(flat);
  for (std::size_t b = 1; b < kOrientationBins; ++b) EXPECT_EQ(h[kIntensityBins + b], 0.0);
  EXPECT_GT(h[kIntensityBins], 0.0);
  // One intensity bin and one orientation bin with equal mass, unit norm overall.
  EXPECT_NEAR(h[77 * kIntensityBins / 256], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(patch_histograms(flat), h);
}

TEST(Histograms, EmptyImageThrows) { EXPECT_THROW(patch_histograms(Image{}), std::invalid_argument); }

TEST(Histograms, ColorPatchHasOneBlockPerChannel) {
  EXPECT_EQ(patch_histograms(Image(4, 4, 3, 10)).size(), 3 * kHistogramLength);
}

TEST(FixedFeaturizer, DeterministicAndSensitiveToOnePixel) {
  ParamSet ps;
  FeaturizerConfig cfg;
  init_featurizer(ps, cfg, Rng(1));
  const Image a = noise_image(16, 3);
  Image b = a;
  b.at(5, 5) = static_cast<std::uint8_t>(b.at(5, 5) ^ 0x80);
  const Tensor fa = extract_fixed(a, ps.at("feat.projection").value);
  EXPECT_EQ(fa, extract_fixed(a, ps.at("feat.projection").value));
  EXPECT_GT(max_abs_diff(fa, extract_fixed(b, ps.at("feat.projection").value)), 0.0);
  EXPECT_EQ(fa.size(), cfg.n);
}

TEST(FixedFeaturizer, ProjectionShapeMismatchThrows) {
  EXPECT_THROW(extract_fixed(noise_image(8, 1), Tensor({4, 5})), ShapeError);
}

TEST(ConvFeaturizer, ZeroWeightsGiveZeroVector) {
  ParamSet ps;
  const auto cfg = conv_config(6);
  init_featurizer(ps, cfg, Rng(2));
  for (auto& [name, p] : ps) p.value.fill(0.0);
  Tape t;
  const Tensor out = featurize(t, noise_image(8, 4), ps, cfg).value();
  EXPECT_EQ(out.size(), 6u);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvFeaturizer, GradientOfScalarHead) {
  const auto cfg = conv_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParamSet ps;
    init_featurizer(ps, cfg, Rng(seed));
    // Nonzero biases keep every ReLU away from its kink.
    Rng b(seed + 100);
    for (auto& [name, p] : ps)
      if (name.ends_with(".b")) p.value = uniform_tensor(p.value.shape(), 0.1, b);
    const Image img = noise_image(8, seed);
    const Tensor head = uniform_tensor({cfg.n}, 1.0, b);
    const auto r = grad_check_params(ps, [&](Tape& t) {
      return ops::dot(featurize(t, img, ps, cfg), t.constant(head));
    });
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(ConvFeaturizer, ForwardIsStatelessAcrossCalls) {
  ParamSet ps;
  const auto cfg = conv_config();
  init_featurizer(ps, cfg, Rng(9));
  const Image a = noise_image(8, 1), b = noise_image(8, 2);
  Tape t1;
  const Tensor first = featurize(t1, a, ps, cfg).value();
  Tape t2;
  featurize(t2, b, ps, cfg);
  const Tensor again = featurize(t2, a, ps, cfg).value();
  EXPECT_EQ(first, again);
}

TEST(ConvFeaturizer, ParameterShapes) {
  ParamSet ps;
  init_featurizer(ps, conv_config(5, 4), Rng(0));
  EXPECT_EQ(ps.at("feat.conv1.w").value.shape(), (Tensor::Shape{4, 1, 3, 3}));
  EXPECT_EQ(ps.at("feat.conv3.w").value.shape(), (Tensor::Shape{4, 4, 3, 3}));
  EXPECT_EQ(ps.at("feat.linear.w").value.shape(), (Tensor::Shape{5, 4}));
}
