#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pmrf/error.hpp"
#include "pmrf/linalg.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::dot {

// Deep optimal transport baseline: fit Gaussians to the stage-one outputs
// and to the clean signals, then move each prediction through the
// closed-form optimal transport map between the two Gaussians.

struct GaussianStats {
  Tensor mean;        // [d]
  Tensor cov;         // [d, d], symmetric
  std::size_t count;  // samples behind the fit (0 for analytic stats)
};

// Sample mean and unbiased covariance of the rows of a [n, d] matrix, with a
// relative ridge 1e-6 * trace/d added to the diagonal for conditioning.
inline GaussianStats fit_gaussian(const Tensor& samples) {
  if (samples.rank() != 2) {
    throw ShapeError("fit_gaussian", "expected [n, d] samples, got " +
                                         Tensor::shape_string(samples.shape()));
  }
  const std::size_t n = samples.shape()[0];
  const std::size_t d = samples.shape()[1];
  if (n < 2) {
    throw ValueError("fit_gaussian", "need at least 2 samples, got " +
                                         std::to_string(n));
  }
  GaussianStats out{Tensor({d}), Tensor({d, d}), n};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += samples.at(i, j);
  }
  for (std::size_t j = 0; j < d; ++j) out.mean[j] /= static_cast<double>(n);

  const double norm = 1.0 / static_cast<double>(n - 1);
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      centered[j] = samples.at(i, j) - out.mean[j];
    }
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = centered[a] * norm;
      for (std::size_t b = a; b < d; ++b) {
        out.cov.at(a, b) += ca * centered[b];
      }
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < a; ++b) out.cov.at(a, b) = out.cov.at(b, a);
  }

  const double ridge = 1e-6 * pmrf::trace(out.cov) / static_cast<double>(d);
  for (std::size_t a = 0; a < d; ++a) out.cov.at(a, a) += ridge;
  return out;
}

struct AffineMap {
  Tensor matrix;  // [d, d]
  Tensor offset;  // [d]
};

// Closed-form optimal transport between Gaussians:
//   A = S^{-1/2} (S^{1/2} T S^{1/2})^{1/2} S^{-1/2},  b = mu_t - A mu_s,
// where S and T are the source and target covariances.  The source must be
// positive definite.
inline AffineMap gaussian_ot_map(const GaussianStats& src,
                                 const GaussianStats& tgt) {
  if (!src.mean.same_shape(tgt.mean) || !src.cov.same_shape(tgt.cov)) {
    throw ShapeError("gaussian_ot_map", "source/target dimension mismatch");
  }
  const Tensor s_half = pmrf::matrix_sqrt_psd(src.cov);
  const Tensor s_inv_half = pmrf::matrix_inv_sqrt_pd(src.cov);
  Tensor inner = pmrf::matmul(pmrf::matmul(s_half, tgt.cov), s_half);
  // Symmetrize: tiny asymmetry from the two products would otherwise trip
  // the sqrt's symmetry gate.
  const std::size_t d = inner.shape()[0];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = avg;
      inner.at(j, i) = avg;
    }
  }
  AffineMap map;
  map.matrix = pmrf::matmul(
      pmrf::matmul(s_inv_half, pmrf::matrix_sqrt_psd(inner)), s_inv_half);
  map.offset = tgt.mean - pmrf::matvec(map.matrix, src.mean);
  return map;
}

inline Tensor apply_affine(const AffineMap& map, const Tensor& v) {
  Tensor out = pmrf::matvec(map.matrix, v);
  out += map.offset;
  return out;
}

// ---------------------------------------------------------------------------
// High-dimensional inputs are transported in a pooled view: average-pool the
// image to at most 64x64 grayscale, move those coordinates, and carry the
// residual detail unchanged.  project(lift_delta(p)) == p exactly, so the
// pushed-forward pooled moments are exactly the mapped ones.
// ---------------------------------------------------------------------------

class DataProjection {
 public:
  // Identity projection over flat vectors of size d.
  static DataProjection identity(std::size_t d) {
    DataProjection p;
    p.full_ = d;
    p.pooled_dim_ = d;
    return p;
  }

  // Average-pooling projection for [h, w, c] images.
  static DataProjection pooled(std::size_t h, std::size_t w, std::size_t c,
                               std::size_t max_side = 64) {
    if (h == 0 || w == 0 || c == 0) {
      throw ShapeError("DataProjection", "image extents must be positive");
    }
    DataProjection p;
    p.h_ = h;
    p.w_ = w;
    p.c_ = c;
    p.ph_ = std::min(h, max_side);
    p.pw_ = std::min(w, max_side);
    p.full_ = h * w * c;
    p.pooled_dim_ = p.ph_ * p.pw_;
    p.is_pooled_ = true;
    return p;
  }

  std::size_t full_dim() const { return full_; }
  std::size_t pooled_dim() const { return pooled_dim_; }
  bool is_pooled() const { return is_pooled_; }

  Tensor project(const Tensor& v) const {
    check_input(v, "DataProjection::project");
    if (!is_pooled_) return v.reshaped({full_});
    Tensor out({pooled_dim_});
    for (std::size_t by = 0; by < ph_; ++by) {
      const auto [y0, y1] = block(by, h_, ph_);
      for (std::size_t bx = 0; bx < pw_; ++bx) {
        const auto [x0, x1] = block(bx, w_, pw_);
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) {
            for (std::size_t ch = 0; ch < c_; ++ch) {
              acc += v.data()[(y * w_ + x) * c_ + ch];
            }
          }
        }
        const double count =
            static_cast<double>((y1 - y0) * (x1 - x0) * c_);
        out[by * pw_ + bx] = acc / count;
      }
    }
    return out;
  }

  // Spread a pooled-space delta uniformly over each block's pixels/channels.
  Tensor lift_delta(const Tensor& delta) const {
    if (delta.size() != pooled_dim_) {
      throw ShapeError("DataProjection::lift_delta", "pooled size mismatch");
    }
    if (!is_pooled_) return delta.reshaped({full_});
    Tensor out({full_});
    for (std::size_t by = 0; by < ph_; ++by) {
      const auto [y0, y1] = block(by, h_, ph_);
      for (std::size_t bx = 0; bx < pw_; ++bx) {
        const auto [x0, x1] = block(bx, w_, pw_);
        const double d = delta[by * pw_ + bx];
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) {
            for (std::size_t ch = 0; ch < c_; ++ch) {
              out.data()[(y * w_ + x) * c_ + ch] = d;
            }
          }
        }
      }
    }
    return out;
  }

 private:
  static std::pair<std::size_t, std::size_t> block(std::size_t b, std::size_t n,
                                                   std::size_t parts) {
    return {b * n / parts, (b + 1) * n / parts};
  }
  void check_input(const Tensor& v, const char* context) const {
    if (v.size() != full_) {
      throw ShapeError(context, "expected flat size " + std::to_string(full_) +
                                    ", got " + std::to_string(v.size()));
    }
  }

  std::size_t h_ = 0, w_ = 0, c_ = 0, ph_ = 0, pw_ = 0;
  std::size_t full_ = 0, pooled_dim_ = 0;
  bool is_pooled_ = false;
};

// Picks the identity projection when the flat dimension is small enough and
// the pooled one otherwise.
inline DataProjection make_projection(std::size_t h, std::size_t w,
                                      std::size_t c,
                                      std::size_t max_dim = 4096) {
  const std::size_t d = h * w * c;
  if (d <= max_dim) return DataProjection::identity(d);
  return DataProjection::pooled(h, w, c);
}

struct DotModel {
  AffineMap map;  // acts in the projection's pooled space
  DataProjection projection;
};

// Fit the transport from stage-one outputs to clean signals, both given as
// flat rows; at most `fit_limit` rows of each are used.
inline DotModel fit_dot(const std::vector<Tensor>& fstar_outputs,
                        const std::vector<Tensor>& signals,
                        const DataProjection& projection,
                        std::size_t fit_limit = 1000) {
  if (fstar_outputs.empty() || signals.empty()) {
    throw ValueError("fit_dot", "need non-empty fit sets");
  }
  if (fit_limit < 2) throw ValueError("fit_dot", "fit_limit must be >= 2");
  auto project_rows = [&](const std::vector<Tensor>& rows) {
    const std::size_t n = std::min(rows.size(), fit_limit);
    Tensor m({n, projection.pooled_dim()});
    for (std::size_t i = 0; i < n; ++i) {
      Tensor p = projection.project(rows[i]);
      std::copy(p.data().begin(), p.data().end(),
                m.data().begin() + i * projection.pooled_dim());
    }
    return m;
  };
  DotModel model;
  model.projection = projection;
  model.map = gaussian_ot_map(fit_gaussian(project_rows(fstar_outputs)),
                              fit_gaussian(project_rows(signals)));
  return model;
}

using Predictor = std::function<Tensor(const Tensor&)>;

// Restore one measurement: predict, transport the pooled coordinates, carry
// the residual detail unchanged.
inline Tensor dot_restore(const Predictor& fstar, const DotModel& model,
                          const Tensor& y) {
  Tensor v = fstar(y);
  Tensor flat = v.reshaped({v.size()});
  Tensor p = model.projection.project(flat);
  Tensor moved = apply_affine(model.map, p);
  moved -= p;
  flat += model.projection.lift_delta(moved);
  return flat;
}

}  // namespace pmrf::dot
