#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "pmrf/dot.hpp"
#include "pmrf/error.hpp"
#include "pmrf/linalg.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::metrics {

// Distortion and distribution metrics.  Distortion compares reconstructions
// to references pointwise; the Frechet distance compares Gaussian summaries
// of whole populations.

struct DistortionReport {
  double mse = 0.0;
  double rmse = 0.0;
  double psnr = 0.0;  // peak 1.0; +infinity for exact reconstructions
  std::optional<double> ind_rmse;  // distance to the posterior-mean anchor
  std::size_t count = 0;
};

namespace metrics_detail {
inline double mean_squared_difference(const std::vector<Tensor>& a,
                                      const std::vector<Tensor>& b,
                                      const char* context) {
  if (a.empty() || a.size() != b.size()) {
    throw ShapeError(context, "need matched, non-empty tensor lists");
  }
  double acc = 0.0;
  std::size_t entries = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) {
      throw ShapeError(context, "size mismatch at row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const double d = a[i][j] - b[i][j];
      acc += d * d;
    }
    entries += a[i].size();
  }
  return acc / static_cast<double>(entries);
}
}  // namespace metrics_detail

// MSE / RMSE / PSNR (peak 1.0) between reconstructions and references.
inline DistortionReport mse_rmse_psnr(const std::vector<Tensor>& recon,
                                      const std::vector<Tensor>& reference) {
  DistortionReport r;
  r.mse = metrics_detail::mean_squared_difference(recon, reference,
                                                  "mse_rmse_psnr");
  r.rmse = std::sqrt(r.mse);
  r.psnr = r.mse == 0.0 ? std::numeric_limits<double>::infinity()
                        : -10.0 * std::log10(r.mse);
  r.count = recon.size();
  return r;
}

// Root mean squared distance between reconstructions and the posterior-mean
// predictions for the same measurements: a reference-free distortion proxy.
inline double indrmse(const std::vector<Tensor>& recon,
                      const std::vector<Tensor>& fstar_outputs) {
  return std::sqrt(
      metrics_detail::mean_squared_difference(recon, fstar_outputs, "indrmse"));
}

// Frechet distance between two Gaussians:
//   d^2 = |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^{1/2} Sb Sa^{1/2})^{1/2}).
// Returns d (not d^2); tiny negative traces from rounding are clamped.
inline double frechet_gaussian(const dot::GaussianStats& a,
                               const dot::GaussianStats& b) {
  if (!a.mean.same_shape(b.mean) || !a.cov.same_shape(b.cov)) {
    throw ShapeError("frechet_gaussian", "dimension mismatch");
  }
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_sq += d * d;
  }
  const Tensor a_half = pmrf::matrix_sqrt_psd(a.cov);
  Tensor inner = pmrf::matmul(pmrf::matmul(a_half, b.cov), a_half);
  const std::size_t d = inner.shape()[0];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = avg;
      inner.at(j, i) = avg;
    }
  }
  const double cov_term = pmrf::trace(a.cov) + pmrf::trace(b.cov) -
                          2.0 * pmrf::trace(pmrf::matrix_sqrt_psd(inner));
  const double dist_sq = mean_sq + cov_term;
  return std::sqrt(std::max(0.0, dist_sq));
}

// Convenience: fit both sample sets and compare the fitted Gaussians.
inline double frechet_from_samples(const Tensor& a, const Tensor& b) {
  return frechet_gaussian(dot::fit_gaussian(a), dot::fit_gaussian(b));
}

}  // namespace pmrf::metrics
