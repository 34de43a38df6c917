#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pmrf/degrade.hpp"

namespace {

namespace degrade = pmrf::degrade;
using pmrf::RngKey;
using pmrf::Tensor;

TEST(Blur, FiveTapUnitSigmaKernelWeights) {
  // Blurring a unit impulse exposes the kernel row; compare against the
  // normalized exp(-i^2/2) weights computed right here.
  Tensor impulse({9});
  impulse[4] = 1.0;
  Tensor blurred = degrade::gaussian_blur(impulse, 1.0, 5);

  double weights[5];
  double total = 0.0;
  for (int i = -2; i <= 2; ++i) {
    weights[i + 2] = std::exp(-0.5 * i * i);
    total += weights[i + 2];
  }
  for (double& w : weights) w /= total;

  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(blurred[2 + i], weights[i], 1e-15) << "tap " << i;
  }
  EXPECT_NEAR(blurred[0], 0.0, 1e-15);
  EXPECT_NEAR(blurred[8], 0.0, 1e-15);
}

TEST(Blur, PreservesConstantImages) {
  Tensor img = Tensor::full({6, 5, 3}, 0.7);
  Tensor out = degrade::gaussian_blur(img, 2.5, 41);  // kernel wider than image
  for (double v : out.data()) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(Blur, ZeroSigmaIsIdentity) {
  Tensor img({2, 2}, {1, 2, 3, 4});
  Tensor out = degrade::gaussian_blur(img, 0.0, 5);
  EXPECT_EQ(out.data(), img.data());
}

TEST(Blur, SmoothsNoise) {
  Tensor noise = pmrf::sample_standard_normal(RngKey{5, 0}, {64, 64});
  Tensor out = degrade::gaussian_blur(noise, 2.0, 13);
  auto variance = [](const Tensor& t) {
    double mean = 0.0;
    for (double v : t.data()) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (double v : t.data()) var += (v - mean) * (v - mean);
    return var / static_cast<double>(t.size() - 1);
  };
  EXPECT_LT(variance(out), 0.25 * variance(noise));
}

TEST(Blur, RejectsBadArguments) {
  Tensor img({4, 4});
  EXPECT_THROW(degrade::gaussian_blur(img, 1.0, 4), pmrf::ValueError);
  EXPECT_THROW(degrade::gaussian_blur(img, 1.0, 0), pmrf::ValueError);
  EXPECT_THROW(degrade::gaussian_blur(img, -1.0, 5), pmrf::ValueError);
}

TEST(Resample, UpscalesTheRampExactly) {
  Tensor v({2}, {0.0, 1.0});
  Tensor up = degrade::resample(v, 2.0, degrade::ResampleDir::up);
  ASSERT_EQ(up.size(), 4u);
  EXPECT_NEAR(up[0], 0.0, 1e-12);
  EXPECT_NEAR(up[1], 0.25, 1e-12);
  EXPECT_NEAR(up[2], 0.75, 1e-12);
  EXPECT_NEAR(up[3], 1.0, 1e-12);
}

TEST(Resample, DownscalesWithHalfPixelCenters) {
  // Source [0, 0.25, 0.75, 1], factor 2: outputs sit at source coordinates
  // 0.5 and 2.5, i.e. the midpoints 0.125 and 0.875.
  Tensor v({4}, {0.0, 0.25, 0.75, 1.0});
  Tensor down = degrade::resample(v, 2.0, degrade::ResampleDir::down);
  ASSERT_EQ(down.size(), 2u);
  EXPECT_NEAR(down[0], 0.125, 1e-12);
  EXPECT_NEAR(down[1], 0.875, 1e-12);
}

TEST(Resample, FactorOneIsExactIdentity) {
  Tensor img = pmrf::sample_standard_normal(RngKey{6, 0}, {5, 7, 3});
  Tensor out = degrade::resample(img, 1.0, degrade::ResampleDir::down);
  EXPECT_EQ(out.data(), img.data());
}

TEST(Resample, BilinearUpscaleMatchesTheLinearSurface) {
  // Pixel values 2y + x form a plane, which bilinear interpolation (with
  // edge clamping) reproduces at the mapped coordinates.
  Tensor img({2, 2}, {0, 1, 2, 3});
  Tensor up = degrade::resample(img, 2.0, degrade::ResampleDir::up);
  const double coords[4] = {0.0, 0.25, 0.75, 1.0};  // clamped half-pixel map
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      EXPECT_NEAR(up.at(y, x), 2.0 * coords[y] + coords[x], 1e-12);
    }
  }
}

TEST(Resample, RejectsDegenerateAndInvalidFactors) {
  Tensor v({4}, {1, 2, 3, 4});
  EXPECT_THROW(degrade::resample(v, 32.0, degrade::ResampleDir::down),
               pmrf::ShapeError);
  EXPECT_THROW(degrade::resample(v, 0.5, degrade::ResampleDir::down),
               pmrf::ValueError);
  Tensor img({16, 16});
  EXPECT_NO_THROW(degrade::resample(img, 32.0, degrade::ResampleDir::down));
}

TEST(NearestUpsample, ReplicatesBlocks) {
  Tensor img({2, 2}, {1, 2, 3, 4});
  Tensor up = degrade::nearest_upsample(img, 2);
  ASSERT_EQ(up.shape(), (std::vector<std::size_t>{4, 4}));
  const double expected[4][4] = {
      {1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      EXPECT_DOUBLE_EQ(up.at(y, x), expected[y][x]);
}

TEST(AddNoise, ZeroDeltaIsIdentityAndSpreadMatches) {
  Tensor img = pmrf::sample_standard_normal(RngKey{7, 0}, {32, 32});
  EXPECT_EQ(degrade::add_noise(img, 0.0, RngKey{8, 0}).data(), img.data());

  const double delta = 0.05;
  Tensor noisy = degrade::add_noise(img, delta, RngKey{8, 0});
  double acc = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = noisy[i] - img[i];
    acc += d * d;
  }
  EXPECT_NEAR(std::sqrt(acc / img.size()), delta, 0.005);

  Tensor again = degrade::add_noise(img, delta, RngKey{8, 0});
  EXPECT_EQ(noisy.data(), again.data());
  EXPECT_THROW(degrade::add_noise(img, -0.1, RngKey{}), pmrf::ValueError);
}

TEST(MaskPixels, ErasesTheRoundedPixelCount) {
  Tensor img = Tensor::full({16, 16, 3}, 1.0);
  degrade::MaskedImage masked = degrade::mask_pixels(img, 0.9, RngKey{9, 0});
  std::size_t zeros = 0;
  for (double v : masked.mask.data()) zeros += v == 0.0;
  EXPECT_EQ(zeros, 230u);  // llround(0.9 * 256)

  // Every erased position is zero across all channels; kept pixels survive.
  for (std::size_t p = 0; p < 256; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double expected = masked.mask.data()[p] == 0.0 ? 0.0 : 1.0;
      EXPECT_DOUBLE_EQ(masked.image.data()[p * 3 + ch], expected);
    }
  }
}

TEST(MaskPixels, EdgeFractionsAndValidation) {
  Tensor img = Tensor::full({4, 4}, 2.0);
  degrade::MaskedImage none = degrade::mask_pixels(img, 0.0, RngKey{10, 0});
  EXPECT_EQ(none.image.data(), img.data());
  degrade::MaskedImage all = degrade::mask_pixels(img, 1.0, RngKey{10, 0});
  for (double v : all.image.data()) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_THROW(degrade::mask_pixels(img, 1.5, RngKey{}), pmrf::ValueError);
  EXPECT_THROW(degrade::mask_pixels(img, -0.1, RngKey{}), pmrf::ValueError);

  degrade::MaskedImage a = degrade::mask_pixels(img, 0.5, RngKey{11, 0});
  degrade::MaskedImage b = degrade::mask_pixels(img, 0.5, RngKey{11, 0});
  EXPECT_EQ(a.mask.data(), b.mask.data());
}

TEST(Desaturate, AveragesChannels) {
  Tensor img({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor gray = degrade::desaturate(img);
  ASSERT_EQ(gray.shape(), (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_DOUBLE_EQ(gray[0], 2.0);
  EXPECT_DOUBLE_EQ(gray[1], 5.0);
  EXPECT_THROW(degrade::desaturate(Tensor({2, 2})), pmrf::ShapeError);

  Tensor lifted = degrade::replicate_channels(gray, 3);
  EXPECT_EQ(degrade::desaturate(lifted).data(), gray.data());
}

TEST(Pipeline, CollapsedRangesAreTheIdentity) {
  degrade::PipelineSpec spec;
  spec.blur_sigma = {0.0, 0.0};
  spec.down_factor = {1.0, 1.0};
  spec.noise_delta = {0.0, 0.0};
  Tensor img = pmrf::sample_standard_normal(RngKey{12, 0}, {8, 8, 3});
  Tensor out = degrade::apply_pipeline(img, spec, RngKey{13, 0});
  EXPECT_EQ(out.data(), img.data());
}

TEST(Pipeline, PreservesShapeAndIsDeterministic) {
  degrade::PipelineSpec spec;  // full default ranges
  Tensor img = pmrf::sample_standard_normal(RngKey{14, 0}, {16, 16, 3});
  Tensor a = degrade::apply_pipeline(img, spec, RngKey{15, 0});
  Tensor b = degrade::apply_pipeline(img, spec, RngKey{15, 0});
  Tensor c = degrade::apply_pipeline(img, spec, RngKey{15, 1});
  EXPECT_EQ(a.shape(), img.shape());
  EXPECT_EQ(a.data(), b.data());
  EXPECT_NE(a.data(), c.data());
  EXPECT_TRUE(a.all_finite());
}

TEST(Pipeline, ValidatesItsSpec) {
  degrade::PipelineSpec spec;
  spec.down_factor = {3.0, 2.0};
  Tensor img({8, 8});
  EXPECT_THROW(degrade::apply_pipeline(img, spec, RngKey{}), pmrf::ValueError);
  degrade::PipelineSpec even;
  even.blur_ksize = 10;
  EXPECT_THROW(degrade::apply_pipeline(img, even, RngKey{}), pmrf::ValueError);
}

}  // namespace
