#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "pmrf/error.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::oracle {

// Closed forms for the scalar Gaussian channel Y = X + N with X ~ N(0,1)
// and N ~ N(0, sigma_n^2).  This channel is the ground truth the learned
// pipeline is validated against: every estimator, vector field and ODE
// endpoint below is known exactly, so solver and training code can be
// checked to tight tolerances.

namespace oracle_detail {
inline void check_sigma(double sigma_n, const char* context) {
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) {
    throw ValueError(context, "sigma_n must be finite and >= 0, got " +
                                  std::to_string(sigma_n));
  }
}
}  // namespace oracle_detail

// Minimum-MSE estimator E[X | Y=y] = y / (1 + sigma_n^2).
inline double posterior_mean_1d(double y, double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "posterior_mean_1d");
  return y / (1.0 + sigma_n * sigma_n);
}

// The distortion-optimal estimator among those whose output distribution
// matches the signal law: y / sqrt(1 + sigma_n^2).
inline double x0_estimate_1d(double y, double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "x0_estimate_1d");
  return y / std::sqrt(1.0 + sigma_n * sigma_n);
}

// Rectified-flow velocity for paths from the posterior-mean distribution
// (degenerate start, no extra noise) to the signal distribution:
//   v(z, t) = t sigma^2 / (1 + t^2 sigma^2) * z.
inline double pmrf_vector_field_1d(double z, double t, double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "pmrf_vector_field_1d");
  const double s2 = sigma_n * sigma_n;
  return t * s2 / (1.0 + t * t * s2) * z;
}

// Exact solution of dz/dt = pmrf_vector_field_1d(z, t) with z(0) = c:
//   z(t) = c sqrt(1 + t^2 sigma^2).
inline double pmrf_ode_solution_1d(double c, double t, double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "pmrf_ode_solution_1d");
  const double s2 = sigma_n * sigma_n;
  return c * std::sqrt(1.0 + t * t * s2);
}

// Rectified-flow velocity for paths that start at the measurement Y itself:
//   v(z, t) = (t - 1) sigma^2 / (sigma^2 (t^2 - 2t + 1) + 1) * z.
inline double flowy_vector_field_1d(double z, double t, double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "flowy_vector_field_1d");
  const double s2 = sigma_n * sigma_n;
  return (t - 1.0) * s2 / (s2 * (t * t - 2.0 * t + 1.0) + 1.0) * z;
}

// Exact solution of the measurement-start ODE with z(0) = c (the Y value):
//   z(t) = c sqrt(sigma^2 (t-1)^2 + 1) / sqrt(1 + sigma^2).
inline double flowy_ode_solution_1d(double c, double t, double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "flowy_ode_solution_1d");
  const double s2 = sigma_n * sigma_n;
  return c * std::sqrt(s2 * (t - 1.0) * (t - 1.0) + 1.0) / std::sqrt(1.0 + s2);
}

// The three reference mean-squared errors for this channel.
struct AnalyticMses {
  double mmse;               // posterior mean:      sigma^2 / (1 + sigma^2)
  double posterior_sampler;  // sample from the posterior: 2 * mmse
  double x0;                 // distribution-matched: 2 (1 - 1/sqrt(1+sigma^2))
};

inline AnalyticMses analytic_mses(double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "analytic_mses");
  const double s2 = sigma_n * sigma_n;
  AnalyticMses out;
  out.mmse = s2 / (1.0 + s2);
  out.posterior_sampler = 2.0 * out.mmse;
  out.x0 = 2.0 * (1.0 - 1.0 / std::sqrt(1.0 + s2));
  return out;
}

// Estimators handed to the Monte Carlo driver may be stochastic, so they
// receive a private random stream alongside the measurement.
using ScalarEstimator = std::function<double(double y, RandomStream& rng)>;

// Simulates n_samples draws of (X, Y), applies the estimator to Y, and
// returns the empirical mean of (estimate - X)^2.
inline double monte_carlo_mse(const ScalarEstimator& estimator, double sigma_n,
                              std::size_t n_samples, const RngKey& key) {
  oracle_detail::check_sigma(sigma_n, "monte_carlo_mse");
  if (n_samples == 0) {
    throw ValueError("monte_carlo_mse", "n_samples must be > 0");
  }
  RandomStream channel(key.child("channel"));
  RandomStream est_rng(key.child("estimator"));
  double acc = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double x = channel.next_normal();
    const double y = x + sigma_n * channel.next_normal();
    const double e = estimator(y, est_rng) - x;
    acc += e * e;
  }
  return acc / static_cast<double>(n_samples);
}

// Convenience: the posterior sampler X' ~ p(x|y), which for this channel is
// N(posterior_mean(y), sigma^2 / (1 + sigma^2)).
inline ScalarEstimator posterior_sampler_1d(double sigma_n) {
  oracle_detail::check_sigma(sigma_n, "posterior_sampler_1d");
  const double s2 = sigma_n * sigma_n;
  const double post_std = std::sqrt(s2 / (1.0 + s2));
  return [s2, post_std](double y, RandomStream& rng) {
    return y / (1.0 + s2) + post_std * rng.next_normal();
  };
}

}  // namespace pmrf::oracle
