#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pmrf/error.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::degrade {

// Measurement synthesis: Gaussian blur, bilinear resampling, additive noise,
// pixel masking and desaturation, plus the randomized
// blur->downsample->noise->upsample pipeline built from them.
// Images are [H, W] or [H, W, C]; rank-1 tensors are treated as 1-D signals.

namespace degrade_detail {

// Mirror an out-of-range index back into [0, n): ... 2 1 | 0 1 2 | 1 0 ...
inline std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n) - 2;
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

inline std::vector<double> gaussian_kernel(double sigma, int ksize) {
  if (ksize < 1 || ksize % 2 == 0) {
    throw ValueError("gaussian_blur",
                     "kernel size must be odd and positive, got " +
                         std::to_string(ksize));
  }
  if (!(sigma > 0.0)) {
    throw ValueError("gaussian_blur", "sigma must be > 0 for a kernel");
  }
  const int half = ksize / 2;
  std::vector<double> k(ksize);
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double w = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[i + half] = w;
    total += w;
  }
  for (double& w : k) w /= total;
  return k;
}

// Convolve one axis of a [outer, n, inner]-strided view with a symmetric
// kernel under reflect padding.
inline void convolve_axis(std::vector<double>& data, std::size_t outer,
                          std::size_t n, std::size_t inner,
                          const std::vector<double>& kernel) {
  const int half = static_cast<int>(kernel.size()) / 2;
  std::vector<double> line(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double* base = data.data() + (o * n) * inner + in;
      for (std::size_t j = 0; j < n; ++j) line[j] = base[j * inner];
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
          const std::size_t src =
              reflect_index(static_cast<long long>(j) + k, n);
          acc += kernel[k + half] * line[src];
        }
        base[j * inner] = acc;
      }
    }
  }
}

struct ImageDims {
  std::size_t h, w, c;
};

inline ImageDims image_dims(const Tensor& img, const char* context) {
  if (img.rank() == 2) return {img.shape()[0], img.shape()[1], 1};
  if (img.rank() == 3) return {img.shape()[0], img.shape()[1], img.shape()[2]};
  throw ShapeError(context, "expected an [H,W] or [H,W,C] image, got " +
                                Tensor::shape_string(img.shape()));
}

}  // namespace degrade_detail

// Separable Gaussian blur with reflect padding; sigma == 0 is the identity.
inline Tensor gaussian_blur(const Tensor& img, double sigma, int ksize) {
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw ValueError("gaussian_blur", "sigma must be finite and >= 0");
  }
  if (sigma == 0.0) return img;
  const std::vector<double> kernel = degrade_detail::gaussian_kernel(sigma, ksize);
  Tensor out = img;
  if (img.rank() == 1) {
    degrade_detail::convolve_axis(out.data(), 1, img.shape()[0], 1, kernel);
    return out;
  }
  const auto [h, w, c] = degrade_detail::image_dims(img, "gaussian_blur");
  degrade_detail::convolve_axis(out.data(), 1, h, w * c, kernel);       // rows
  degrade_detail::convolve_axis(out.data(), h, w, c, kernel);           // cols
  return out;
}

enum class ResampleDir { down, up };

// Bilinear resize to explicit extents with the half-pixel (align-corners-off)
// mapping src = (dst + 0.5) * in/out - 0.5 and edge clamping.
inline Tensor bilinear_resize(const Tensor& img, std::size_t h_out,
                              std::size_t w_out) {
  if (h_out == 0 || w_out == 0) {
    throw ShapeError("bilinear_resize", "output extents must be positive");
  }
  const auto [h, w, c] = degrade_detail::image_dims(img, "bilinear_resize");

  auto coords = [](std::size_t n_out, std::size_t n_in) {
    std::vector<std::pair<std::size_t, double>> m(n_out);  // (low index, frac)
    const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (std::size_t d = 0; d < n_out; ++d) {
      double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
      const double fl = std::floor(s);
      std::size_t lo = static_cast<std::size_t>(fl);
      if (lo + 1 >= n_in) lo = n_in - 1;
      m[d] = {lo, s - static_cast<double>(lo)};
    }
    return m;
  };
  const auto ys = coords(h_out, h);
  const auto xs = coords(w_out, w);

  Tensor out(img.rank() == 2 ? std::vector<std::size_t>{h_out, w_out}
                             : std::vector<std::size_t>{h_out, w_out, c});
  auto px = [&](std::size_t y, std::size_t x, std::size_t ch) {
    return img.data()[(y * w + x) * c + ch];
  };
  for (std::size_t yo = 0; yo < h_out; ++yo) {
    const auto [y0, fy] = ys[yo];
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    for (std::size_t xo = 0; xo < w_out; ++xo) {
      const auto [x0, fx] = xs[xo];
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = (1.0 - fx) * px(y0, x0, ch) + fx * px(y0, x1, ch);
        const double bottom = (1.0 - fx) * px(y1, x0, ch) + fx * px(y1, x1, ch);
        out.data()[(yo * w_out + xo) * c + ch] = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

// Linear resize of a rank-1 signal (same mapping as bilinear_resize).
inline Tensor linear_resize_1d(const Tensor& v, std::size_t n_out) {
  if (v.rank() != 1) {
    throw ShapeError("linear_resize_1d", "expected a rank-1 tensor");
  }
  return bilinear_resize(v.reshaped({1, v.shape()[0]}), 1, n_out)
      .reshaped({n_out});
}

// Resample by a real factor >= 1: `down` divides extents, `up` multiplies,
// both rounding to the nearest integer.  A zero output extent is an error.
inline Tensor resample(const Tensor& img, double factor, ResampleDir dir) {
  if (!(factor >= 1.0) || !std::isfinite(factor)) {
    throw ValueError("resample", "factor must be finite and >= 1, got " +
                                     std::to_string(factor));
  }
  auto scaled = [&](std::size_t ext) {
    const double target = dir == ResampleDir::down
                              ? static_cast<double>(ext) / factor
                              : static_cast<double>(ext) * factor;
    const long long out = std::llround(target);
    if (out < 1) {
      throw ShapeError("resample", "output extent would be zero (extent " +
                                       std::to_string(ext) + ", factor " +
                                       std::to_string(factor) + ")");
    }
    return static_cast<std::size_t>(out);
  };
  if (img.rank() == 1) return linear_resize_1d(img, scaled(img.shape()[0]));
  const auto [h, w, c] = degrade_detail::image_dims(img, "resample");
  (void)c;
  return bilinear_resize(img, scaled(h), scaled(w));
}

// Integer nearest-neighbour upscaling (stage-one lifting for super-resolution).
inline Tensor nearest_upsample(const Tensor& img, std::size_t factor) {
  if (factor == 0) throw ValueError("nearest_upsample", "factor must be >= 1");
  if (factor == 1) return img;
  const auto [h, w, c] = degrade_detail::image_dims(img, "nearest_upsample");
  Tensor out(img.rank() == 2
                 ? std::vector<std::size_t>{h * factor, w * factor}
                 : std::vector<std::size_t>{h * factor, w * factor, c});
  for (std::size_t y = 0; y < h * factor; ++y) {
    for (std::size_t x = 0; x < w * factor; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        out.data()[(y * w * factor + x) * c + ch] =
            img.data()[((y / factor) * w + x / factor) * c + ch];
      }
    }
  }
  return out;
}

// Additive white Gaussian noise with spread delta (identity when delta == 0).
inline Tensor add_noise(const Tensor& img, double delta, const RngKey& key) {
  if (delta < 0.0 || !std::isfinite(delta)) {
    throw ValueError("add_noise", "delta must be finite and >= 0");
  }
  if (delta == 0.0) return img;
  Tensor out = img;
  RandomStream rng(key);
  for (double& v : out.data()) v += delta * rng.next_normal();
  return out;
}

struct MaskedImage {
  Tensor image;  // input with erased pixels set to 0 across all channels
  Tensor mask;   // [H, W]; 1 = kept, 0 = erased
};

// Erases llround(fraction * H * W) distinct pixel positions chosen uniformly.
inline MaskedImage mask_pixels(const Tensor& img, double fraction,
                               const RngKey& key) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ValueError("mask_pixels", "fraction must lie in [0, 1], got " +
                                        std::to_string(fraction));
  }
  const auto [h, w, c] = degrade_detail::image_dims(img, "mask_pixels");
  const std::size_t total = h * w;
  const std::size_t count =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));

  // Partial Fisher-Yates: the first `count` entries are the erased positions.
  std::vector<std::size_t> pos(total);
  std::iota(pos.begin(), pos.end(), 0);
  RandomStream rng(key);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(total - i));
    std::swap(pos[i], pos[j]);
  }

  MaskedImage out{img, Tensor::full({h, w}, 1.0)};
  for (std::size_t i = 0; i < count; ++i) {
    out.mask.data()[pos[i]] = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      out.image.data()[pos[i] * c + ch] = 0.0;
    }
  }
  return out;
}

// Channel-mean grayscale: [H, W, 3] -> [H, W, 1].
inline Tensor desaturate(const Tensor& img) {
  if (img.rank() != 3 || img.shape()[2] != 3) {
    throw ShapeError("desaturate", "expected an [H,W,3] image, got " +
                                       Tensor::shape_string(img.shape()));
  }
  const std::size_t h = img.shape()[0], w = img.shape()[1];
  Tensor out({h, w, 1});
  for (std::size_t i = 0; i < h * w; ++i) {
    out.data()[i] =
        (img.data()[3 * i] + img.data()[3 * i + 1] + img.data()[3 * i + 2]) / 3.0;
  }
  return out;
}

// Lift [H, W, 1] back to [H, W, c] by channel replication.
inline Tensor replicate_channels(const Tensor& img, std::size_t channels) {
  if (img.rank() != 3 || img.shape()[2] != 1) {
    throw ShapeError("replicate_channels", "expected an [H,W,1] image");
  }
  if (channels == 0) {
    throw ValueError("replicate_channels", "channels must be >= 1");
  }
  const std::size_t h = img.shape()[0], w = img.shape()[1];
  Tensor out({h, w, channels});
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      out.data()[i * channels + ch] = img.data()[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Randomized degradation pipeline: blur -> bilinear down -> noise -> bilinear
// back up to the original extents, with per-image parameters drawn from the
// configured ranges.
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  void validate(const char* context) const {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ValueError(context, "interval must satisfy lo <= hi and be finite");
    }
  }
  double sample(RandomStream& rng) const {
    return lo == hi ? lo : lo + (hi - lo) * rng.next_uniform();
  }
};

struct PipelineSpec {
  Interval blur_sigma{0.1, 15.0};
  Interval down_factor{0.8, 32.0};  // draws below 1 are clamped to 1
  Interval noise_delta{0.0, 20.0 / 255.0};
  int blur_ksize = 41;

  void validate() const {
    blur_sigma.validate("PipelineSpec.blur_sigma");
    down_factor.validate("PipelineSpec.down_factor");
    noise_delta.validate("PipelineSpec.noise_delta");
    if (blur_sigma.lo < 0.0 || noise_delta.lo < 0.0) {
      throw ValueError("PipelineSpec", "blur sigma and noise delta must be >= 0");
    }
    if (blur_ksize < 1 || blur_ksize % 2 == 0) {
      throw ValueError("PipelineSpec", "blur_ksize must be odd and positive");
    }
  }
};

// The parameters one pipeline application actually drew.  factor_raw keeps
// the pre-clamp downsample draw so callers can log how often the R >= 1
// clamp fired.
struct PipelineDraw {
  double blur_sigma = 0.0;
  double factor_raw = 1.0;
  double factor = 1.0;
  double noise_delta = 0.0;
};

// Parameter draws come from key.child("params"), noise from key.child("noise"),
// so the same key always degrades the same image identically.
inline Tensor apply_pipeline(const Tensor& img, const PipelineSpec& spec,
                             const RngKey& key, PipelineDraw* draw = nullptr) {
  spec.validate();
  const auto [h, w, c] = degrade_detail::image_dims(img, "apply_pipeline");
  (void)c;

  RandomStream params(key.child("params"));
  const double sigma = spec.blur_sigma.sample(params);
  const double factor_raw = spec.down_factor.sample(params);
  const double factor = std::max(1.0, factor_raw);
  const double delta = spec.noise_delta.sample(params);
  if (draw != nullptr) *draw = {sigma, factor_raw, factor, delta};

  // The kernel never exceeds the smaller image side (largest odd value fits).
  const std::size_t side = std::min(h, w);
  const long long side_odd =
      static_cast<long long>(side % 2 == 1 ? side : side - 1);
  const int ksize =
      static_cast<int>(std::min<long long>(spec.blur_ksize, std::max(1ll, side_odd)));

  Tensor stage = gaussian_blur(img, sigma, ksize);
  stage = resample(stage, factor, ResampleDir::down);
  stage = add_noise(stage, delta, key.child("noise"));
  return bilinear_resize(stage, h, w);
}

}  // namespace pmrf::degrade
