// Acceptance gate: twelve independent criteria, one printed line each.
// Exit code 0 only when every line reads PASS.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pmrf/config.hpp"
#include "pmrf/dataset.hpp"
#include "pmrf/dot.hpp"
#include "pmrf/error.hpp"
#include "pmrf/experiment.hpp"
#include "pmrf/flows.hpp"
#include "pmrf/metrics.hpp"
#include "pmrf/neural.hpp"
#include "pmrf/oracle.hpp"
#include "pmrf/tensor.hpp"

namespace {

using pmrf::RandomStream;
using pmrf::RngKey;
using pmrf::Tensor;
namespace oracle = pmrf::oracle;
namespace flows = pmrf::flows;
namespace neural = pmrf::neural;
namespace dotns = pmrf::dot;
namespace metrics = pmrf::metrics;
namespace harness = pmrf::harness;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// Shared one-dimensional task state (sigma_N = 1, sigma_s = 0): a paired
// dataset, the analytic posterior mean as the stage-one predictor, and a
// velocity field trained for the posterior-mean-initialized flow.  Reused by
// criteria 3, 5, 6, and 11.
// ---------------------------------------------------------------------------

struct OneDimKit {
  static constexpr double kSigma = 1.0;
  std::size_t n_train = 25000;
  std::size_t n_test = 40000;
  flows::PairedDataset train;
  std::vector<Tensor> xstar_train;  // analytic posterior means of train y
  std::vector<double> test_x, test_y;
  flows::TrainConfig cfg;
  neural::MlpParams field_pm;  // method: posterior-mean start

  explicit OneDimKit(const RngKey& key) {
    RandomStream rng(key.child("channel"));
    auto draw_pair = [&](double& x, double& y) {
      x = rng.next_normal();
      y = x + kSigma * rng.next_normal();
    };
    train.x.reserve(n_train);
    train.y.reserve(n_train);
    xstar_train.reserve(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
      double x = 0.0, y = 0.0;
      draw_pair(x, y);
      Tensor tx({1}), ty({1}), ts({1});
      tx[0] = x;
      ty[0] = y;
      ts[0] = oracle::posterior_mean_1d(y, kSigma);
      train.x.push_back(std::move(tx));
      train.y.push_back(std::move(ty));
      xstar_train.push_back(std::move(ts));
    }
    test_x.resize(n_test);
    test_y.resize(n_test);
    for (std::size_t i = 0; i < n_test; ++i) draw_pair(test_x[i], test_y[i]);

    cfg.epochs = 13;  // 13 x 25000 = 325k gradient samples
    cfg.batch_size = 128;
    cfg.hidden = {64, 64};
    cfg.optim.lr = 2e-3;
    cfg.ema_decay = 0.999;
    field_pm = flows::train_flow(train, xstar_train, flows::FlowMethod::pmrf,
                                 /*sigma_s=*/0.0, cfg, key.child("field_pm"));
  }

  // Integrates every test row from its start value with the given field.
  Tensor integrate_from(const neural::MlpParams& field,
                        const std::vector<double>& starts, int k,
                        const Tensor& cond = {}) const {
    Tensor z0({starts.size(), 1});
    for (std::size_t i = 0; i < starts.size(); ++i) z0[i] = starts[i];
    return flows::euler_integrate_batch(field, std::move(z0), cond, k);
  }

  double endpoint_mse(const Tensor& endpoints) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
      const double e = endpoints[i] - test_x[i];
      acc += e * e;
    }
    return acc / static_cast<double>(test_x.size());
  }
};

// ---------------------------------------------------------------------------
// Criteria.
// ---------------------------------------------------------------------------

// Analytic flow endpoint equals the scaled estimate everywhere; the generic
// Euler solver converges to it at first order.
Outcome c01_endpoint_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_exact = 0.0;
  double worst_euler = 0.0;
  for (double sigma : {0.3, 1.0, 2.0}) {
    for (int i = -40; i <= 40; ++i) {
      const double y = 0.1 * i;
      const double start = oracle::posterior_mean_1d(y, sigma);
      const double target = oracle::x0_estimate_1d(y, sigma);
      const double exact = oracle::pmrf_ode_solution_1d(start, 1.0, sigma);
      worst_exact = std::max(worst_exact, std::abs(exact - target));

      flows::VectorField field = [sigma](const Tensor& z, double t) {
        Tensor v({1});
        v[0] = oracle::pmrf_vector_field_1d(z[0], t, sigma);
        return v;
      };
      Tensor z0({1});
      z0[0] = start;
      const Tensor zk = flows::euler_integrate(field, z0, 1000);
      const double rel =
          std::abs(zk[0] - target) / std::max(std::abs(target), 1e-12);
      worst_euler = std::max(worst_euler, rel);
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_exact <= 1e-12 && worst_euler <= 1e-3 && secs < 1.0;
  return {pass, "analytic max " + fmt(worst_exact) + ", euler max rel " +
                    fmt(worst_euler) + ", " + fmt(secs) + "s (<1s)"};
}

// Monte-Carlo MSEs of the three canonical estimators sit at their closed
// forms with the strict mmse < mse(x0) < 2*mmse ordering.
Outcome c02_mse_geometry() {
  const auto t0 = std::chrono::steady_clock::now();
  const RngKey key{20240202, 0};
  const std::size_t n = 1000000;
  const double mmse = oracle::monte_carlo_mse(
      [](double y, RandomStream&) { return oracle::posterior_mean_1d(y, 1.0); },
      1.0, n, key.child("pm"));
  const double sampler =
      oracle::monte_carlo_mse(oracle::posterior_sampler_1d(1.0), 1.0, n,
                              key.child("sampler"));
  const double x0 = oracle::monte_carlo_mse(
      [](double y, RandomStream&) { return oracle::x0_estimate_1d(y, 1.0); },
      1.0, n, key.child("x0"));
  const double secs = seconds_since(t0);
  const bool pass = std::abs(mmse - 0.5) <= 0.005 &&
                    std::abs(sampler - 1.0) <= 0.01 &&
                    std::abs(x0 - 0.5858) <= 0.01 && mmse < x0 && x0 < sampler &&
                    secs < 10.0;
  return {pass, "mmse " + fmt(mmse) + ", x0 " + fmt(x0) + ", sampler " +
                    fmt(sampler) + ", " + fmt(secs) + "s (<10s)"};
}

// The learned 1-D velocity field tracks the closed-form field on a grid and
// transports the posterior-mean distribution to unit-variance endpoints.
Outcome c03_learned_field(const OneDimKit& kit,
                          std::chrono::steady_clock::time_point kit_start) {
  double err_sum = 0.0;
  std::size_t count = 0;
  std::vector<double> zs, ts;
  for (double z = -3.0; z <= 3.0 + 1e-9; z += 0.1) zs.push_back(z);
  for (double t = 0.0; t <= 1.0 + 1e-9; t += 0.05) ts.push_back(t);
  for (double t : ts) {
    Tensor in({zs.size(), 1});
    for (std::size_t i = 0; i < zs.size(); ++i) in[i] = zs[i];
    std::vector<double> tcol(zs.size(), t);
    const Tensor v = neural::forward_batch(kit.field_pm, in, tcol, {});
    for (std::size_t i = 0; i < zs.size(); ++i) {
      err_sum += std::abs(v[i] - oracle::pmrf_vector_field_1d(zs[i], t, 1.0));
      ++count;
    }
  }
  const double mean_err = err_sum / static_cast<double>(count);

  std::vector<double> starts(kit.test_y.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    starts[i] = oracle::posterior_mean_1d(kit.test_y[i], OneDimKit::kSigma);
  }
  const Tensor end = kit.integrate_from(kit.field_pm, starts, 100);
  double mean = 0.0;
  for (std::size_t i = 0; i < end.size(); ++i) mean += end[i];
  mean /= static_cast<double>(end.size());
  double var = 0.0;
  for (std::size_t i = 0; i < end.size(); ++i) {
    var += (end[i] - mean) * (end[i] - mean);
  }
  var /= static_cast<double>(end.size() - 1);

  const double secs = seconds_since(kit_start);
  const bool pass = mean_err < 0.05 && std::abs(mean) < 0.02 &&
                    std::abs(var - 1.0) < 0.05 && secs < 300.0;
  return {pass, "mean |v_err| " + fmt(mean_err) + ", endpoint mean " +
                    fmt(mean) + ", var " + fmt(var) + ", " + fmt(secs) +
                    "s (<5min)"};
}

// Toy-image scale: posterior-mean-initialized flow at K=100 stays within 5%
// of twice the predictor's MSE and does not lose to it on the Frechet index.
Outcome c04_image_scale(const harness::ExperimentReport& report, double secs) {
  const double mse_flow = report.cell("pmrf", 100).distortion.mse;
  const double frechet_flow = report.cell("pmrf", 100).frechet;
  const bool pass = mse_flow <= 1.05 * 2.0 * report.fstar_mse &&
                    frechet_flow <= report.fstar_frechet && secs < 900.0;
  return {pass, "mse " + fmt(mse_flow) + " vs 2x predictor " +
                    fmt(2.0 * report.fstar_mse) + ", frechet " +
                    fmt(frechet_flow) + " vs predictor " +
                    fmt(report.fstar_frechet) + ", " + fmt(secs) + "s (<15min)"};
}

// Conditioning the flow on the posterior mean lands at the posterior
// sampler's MSE: twice the predictor's.
Outcome c05_cond_on_xstar(const OneDimKit& kit, const RngKey& key) {
  neural::MlpParams field = flows::train_flow(
      kit.train, kit.xstar_train, flows::FlowMethod::cond_on_xstar,
      /*sigma_s=*/0.0, kit.cfg, key.child("field_cx"));

  const std::size_t m = kit.test_y.size();
  Tensor z0({m, 1});
  Tensor cond({m, 1});
  double proxy = 0.0;  // measured MSE of the stage-one predictor
  RandomStream rng(key.child("z0"));
  for (std::size_t i = 0; i < m; ++i) {
    z0[i] = rng.next_normal();
    const double pm = oracle::posterior_mean_1d(kit.test_y[i], OneDimKit::kSigma);
    cond[i] = pm;
    const double e = pm - kit.test_x[i];
    proxy += e * e;
  }
  proxy /= static_cast<double>(m);

  const Tensor end = flows::euler_integrate_batch(field, std::move(z0), cond, 50);
  const double mse = kit.endpoint_mse(end);
  const double target = 2.0 * proxy;
  const bool pass = std::abs(mse - target) <= 0.05 * target;
  return {pass, "endpoint mse " + fmt(mse) + " vs 2x predictor mse " +
                    fmt(target) + " (tol 5%)"};
}

// Starting the flow at the measurement instead of the posterior mean changes
// nothing: analytically exact, and learned fields agree in MSE.
Outcome c06_flow_from_y(const OneDimKit& kit, const RngKey& key) {
  double worst = 0.0;
  for (double sigma : {0.3, 1.0, 2.0}) {
    for (int i = -40; i <= 40; ++i) {
      const double y = 0.1 * i;
      const double via_y = oracle::flowy_ode_solution_1d(y, 1.0, sigma);
      const double via_pm = oracle::pmrf_ode_solution_1d(
          oracle::posterior_mean_1d(y, sigma), 1.0, sigma);
      worst = std::max(worst, std::abs(via_y - via_pm));
    }
  }

  neural::MlpParams field_fy = flows::train_flow(
      kit.train, {}, flows::FlowMethod::flow_from_y, /*sigma_s=*/0.0, kit.cfg,
      key.child("field_fy"));
  std::vector<double> pm_starts(kit.test_y.size());
  for (std::size_t i = 0; i < kit.test_y.size(); ++i) {
    pm_starts[i] = oracle::posterior_mean_1d(kit.test_y[i], OneDimKit::kSigma);
  }
  const double mse_pm =
      kit.endpoint_mse(kit.integrate_from(kit.field_pm, pm_starts, 100));
  const double mse_fy =
      kit.endpoint_mse(kit.integrate_from(field_fy, kit.test_y, 100));
  const double rel = std::abs(mse_pm - mse_fy) / std::max(mse_pm, mse_fy);

  const bool pass = worst <= 1e-12 && rel <= 0.05;
  return {pass, "analytic max " + fmt(worst) + ", learned mse " + fmt(mse_pm) +
                    " vs " + fmt(mse_fy) + " (rel " + fmt(rel) + ", tol 5%)"};
}

// K-sweep direction on the toy image task: distortion may only grow with K,
// the perceptual index may only shrink, one adjacent inversion forgiven.
Outcome c07_k_sweep(const harness::ExperimentReport& report,
                    const std::vector<int>& ks) {
  std::size_t rmse_inversions = 0;
  std::size_t frechet_inversions = 0;
  std::string rmse_path, frechet_path;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto& cell = report.cell("pmrf", ks[i]);
    rmse_path += (i ? " " : "") + fmt(cell.distortion.rmse);
    frechet_path += (i ? " " : "") + fmt(cell.frechet);
    if (i > 0) {
      const auto& prev = report.cell("pmrf", ks[i - 1]);
      if (cell.distortion.rmse < prev.distortion.rmse - 1e-12) ++rmse_inversions;
      if (cell.frechet > prev.frechet + 1e-12) ++frechet_inversions;
    }
  }
  const bool pass = rmse_inversions <= 1 && frechet_inversions <= 1;
  return {pass, "rmse [" + rmse_path + "] inversions " +
                    std::to_string(rmse_inversions) + ", frechet [" +
                    frechet_path + "] inversions " +
                    std::to_string(frechet_inversions) + " (<=1 each)"};
}

// Backpropagated gradients match central finite differences across random
// architectures, batch sizes, and conditioning setups.
Outcome c08_gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const RngKey key{977, static_cast<std::uint64_t>(trial)};
    RandomStream rng(key.child("setup"));
    const std::size_t din = 1 + rng.next_below(4);
    const std::size_t dout = 1 + rng.next_below(3);
    const std::size_t depth = 1 + rng.next_below(2);
    std::vector<std::size_t> sizes{din};
    for (std::size_t l = 0; l < depth; ++l) sizes.push_back(3 + rng.next_below(4));
    sizes.push_back(dout);
    const bool with_time = trial % 2 == 0;
    const std::size_t cond_width = trial % 3;

    neural::MlpParams p =
        neural::mlp_init(sizes, with_time, cond_width, key.child("init"));
    const std::size_t batch = 1 + rng.next_below(4);
    neural::TrainingBatch tb;
    tb.inputs = pmrf::sample_standard_normal(key.child("x"), {batch, din});
    tb.targets = pmrf::sample_standard_normal(key.child("t"), {batch, dout});
    if (with_time) {
      RandomStream trng(key.child("ts"));
      tb.ts.resize(batch);
      for (double& t : tb.ts) t = trng.next_uniform();
    }
    if (cond_width > 0) {
      tb.cond = pmrf::sample_standard_normal(key.child("c"), {batch, cond_width});
    }

    const neural::LossGrad lg = neural::loss_and_grad(p, tb);
    const double h = 1e-5;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto check = [&](Tensor& param, const Tensor& grad) {
        for (std::size_t j = 0; j < param.size(); ++j) {
          const double saved = param[j];
          param[j] = saved + h;
          const double up = neural::loss_and_grad(p, tb).loss;
          param[j] = saved - h;
          const double down = neural::loss_and_grad(p, tb).loss;
          param[j] = saved;
          const double fd = (up - down) / (2.0 * h);
          const double rel = std::abs(fd - grad[j]) /
                             std::max(1e-6, std::abs(fd) + std::abs(grad[j]));
          worst = std::max(worst, rel);
        }
      };
      check(p.layers[l].w, lg.grads.layers[l].w);
      check(p.layers[l].b, lg.grads.layers[l].b);
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-4 && secs < 30.0;
  return {pass, "max rel err " + fmt(worst) + " over 100 nets, " + fmt(secs) +
                    "s (<30s)"};
}

// Frechet distance closed forms: identity, pure mean shifts, pure variance
// shifts, in one and two dimensions.
Outcome c09_frechet_closed_forms() {
  auto stats1 = [](double mean, double var) {
    dotns::GaussianStats s;
    s.mean = Tensor({1});
    s.mean[0] = mean;
    s.cov = Tensor({1, 1});
    s.cov.at(0, 0) = var;
    return s;
  };
  auto stats2 = [](double mx, double my, double vx, double vy) {
    dotns::GaussianStats s;
    s.mean = Tensor({2});
    s.mean[0] = mx;
    s.mean[1] = my;
    s.cov = Tensor({2, 2});
    s.cov.at(0, 0) = vx;
    s.cov.at(1, 1) = vy;
    return s;
  };
  const dotns::GaussianStats base = stats2(0.3, -0.7, 1.7, 0.4);
  const double ident = metrics::frechet_gaussian(base, base);
  const double shift1 =
      metrics::frechet_gaussian(stats1(0.0, 1.0), stats1(3.0, 1.0));
  const double shift2 = metrics::frechet_gaussian(stats2(0, 0, 1, 1),
                                                  stats2(1, 0, 1, 1));
  const double var1 =
      metrics::frechet_gaussian(stats1(0.0, 1.0), stats1(0.0, 4.0));
  const double var2 = metrics::frechet_gaussian(stats2(0, 0, 1, 1),
                                                stats2(0, 0, 4, 1));
  const bool pass = ident <= 1e-10 && std::abs(shift1 - 3.0) <= 1e-8 &&
                    std::abs(shift2 - 1.0) <= 1e-8 &&
                    std::abs(var1 - 1.0) <= 1e-8 &&
                    std::abs(var2 - 1.0) <= 1e-8;
  return {pass, "identity " + fmt(ident) + ", shifts " + fmt(shift1) + "/" +
                    fmt(shift2) + ", variance " + fmt(var1) + "/" + fmt(var2)};
}

// The fitted Gaussian transport map moves samples onto the target moments;
// in the 1-D analytic setting it reproduces the scaled estimate exactly.
Outcome c10_gaussian_ot() {
  const RngKey key{5150, 0};
  const std::size_t n = 100000;

  Tensor src_mean({2}), tgt_mean({2});
  src_mean[0] = 1.0;
  src_mean[1] = -2.0;
  tgt_mean[0] = -1.0;
  tgt_mean[1] = 3.0;
  Tensor src_cov({2, 2}), tgt_cov({2, 2});
  src_cov.at(0, 0) = 2.0;
  src_cov.at(0, 1) = src_cov.at(1, 0) = 0.6;
  src_cov.at(1, 1) = 1.0;
  tgt_cov.at(0, 0) = 1.0;
  tgt_cov.at(0, 1) = tgt_cov.at(1, 0) = -0.3;
  tgt_cov.at(1, 1) = 0.5;

  auto sample_gaussian = [&](const Tensor& mean, const Tensor& cov,
                             const RngKey& k) {
    const Tensor half = pmrf::matrix_sqrt_psd(cov);
    Tensor out({n, 2});
    RandomStream rng(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double e0 = rng.next_normal();
      const double e1 = rng.next_normal();
      out.at(i, 0) = mean[0] + half.at(0, 0) * e0 + half.at(0, 1) * e1;
      out.at(i, 1) = mean[1] + half.at(1, 0) * e0 + half.at(1, 1) * e1;
    }
    return out;
  };
  const Tensor src = sample_gaussian(src_mean, src_cov, key.child("src"));
  const Tensor tgt = sample_gaussian(tgt_mean, tgt_cov, key.child("tgt"));
  const dotns::AffineMap map =
      dotns::gaussian_ot_map(dotns::fit_gaussian(src), dotns::fit_gaussian(tgt));

  Tensor pushed({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor row({2});
    row[0] = src.at(i, 0);
    row[1] = src.at(i, 1);
    const Tensor moved = dotns::apply_affine(map, row);
    pushed.at(i, 0) = moved[0];
    pushed.at(i, 1) = moved[1];
  }
  const dotns::GaussianStats got = dotns::fit_gaussian(pushed);
  double mean_err = 0.0, cov_err = 0.0, cov_norm = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    mean_err = std::max(mean_err, std::abs(got.mean[i] - tgt_mean[i]) /
                                      std::max(1.0, std::abs(tgt_mean[i])));
    for (std::size_t j = 0; j < 2; ++j) {
      const double d = got.cov.at(i, j) - tgt_cov.at(i, j);
      cov_err += d * d;
      cov_norm += tgt_cov.at(i, j) * tgt_cov.at(i, j);
    }
  }
  const double cov_rel = std::sqrt(cov_err / cov_norm);

  // 1-D analytic transport of the posterior-mean output distribution.
  dotns::GaussianStats s1, t1;
  s1.mean = Tensor({1});
  s1.cov = Tensor({1, 1});
  s1.cov.at(0, 0) = 0.5;  // Var(E[X|Y]) at sigma = 1
  t1.mean = Tensor({1});
  t1.cov = Tensor({1, 1});
  t1.cov.at(0, 0) = 1.0;
  dotns::DotModel model;
  model.map = dotns::gaussian_ot_map(s1, t1);
  model.projection = dotns::DataProjection::identity(1);
  const dotns::Predictor pm = [](const Tensor& y) {
    Tensor out({1});
    out[0] = oracle::posterior_mean_1d(y[0], 1.0);
    return out;
  };
  double worst = 0.0;
  for (int i = -40; i <= 40; ++i) {
    Tensor y({1});
    y[0] = 0.1 * i;
    const Tensor restored = dotns::dot_restore(pm, model, y);
    worst = std::max(worst,
                     std::abs(restored[0] - oracle::x0_estimate_1d(y[0], 1.0)));
  }

  const bool pass = mean_err <= 0.02 && cov_rel <= 0.02 && worst <= 1e-6;
  return {pass, "pushed mean err " + fmt(mean_err) + ", cov rel " +
                    fmt(cov_rel) + " (tol 2%), 1d transport max " + fmt(worst)};
}

// One rectification round: the straightened coupling transports no farther
// than the independent coupling it replaces.
Outcome c11_reflow(const OneDimKit& kit, const RngKey& key) {
  const std::size_t n = kit.train.x.size();
  double cost_before = 0.0;
  Tensor z0({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    z0[i] = kit.xstar_train[i][0];  // sigma_s = 0: start at the posterior mean
    const double d = kit.train.x[i][0] - z0[i];
    cost_before += d * d;
  }
  cost_before /= static_cast<double>(n);

  const Tensor z1 = flows::euler_integrate_batch(kit.field_pm, z0, {}, 50);
  double cost_after = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = z1[i] - kit.xstar_train[i][0];
    cost_after += d * d;
  }
  cost_after /= static_cast<double>(n);

  // The retraining path must run end to end on the regenerated pairs.
  flows::FlowSpec spec;
  spec.method = flows::FlowMethod::pmrf;
  spec.sigma_s = 0.0;
  spec.steps_k = 50;
  flows::TrainConfig short_cfg = kit.cfg;
  short_cfg.epochs = 2;
  const neural::MlpParams rectified = flows::reflow(
      kit.train, kit.xstar_train, spec, kit.field_pm, short_cfg, key.child("reflow"));
  bool finite = true;
  for (const neural::Layer& layer : rectified.layers) {
    finite = finite && layer.w.all_finite() && layer.b.all_finite();
  }

  const bool pass = cost_after <= 1.05 * cost_before && finite;
  return {pass, "transport cost " + fmt(cost_before) + " -> " + fmt(cost_after) +
                    " (<= +5%)"};
}

// Two strict runs of the full experiment pipeline from one config produce
// byte-identical report files.
Outcome c12_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = "acceptance_out/determinism";
  fs::remove_all(dir);

  harness::ExperimentConfig cfg;
  cfg.task = harness::TaskKind::gauss1d;
  cfg.dataset = harness::DatasetSource::gauss1d;
  cfg.n_samples = 600;
  cfg.seed = 31;
  cfg.out_dir = dir.string();
  cfg.methods = {"pmrf", "dot"};
  cfg.sigma_s = 0.0;
  cfg.steps = {3, 10};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 64;
  cfg.train.hidden = {16};
  cfg.train.ema_decay = 0.9;

  harness::RunOptions opts;
  opts.strict = true;

  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  harness::run_experiment(cfg, opts);
  const std::string json1 = read(dir / "report.json");
  const std::string csv1 = read(dir / "report.csv");
  const std::string plane1 = read(dir / "plane.dat");
  harness::run_experiment(cfg, opts);
  const bool same = json1 == read(dir / "report.json") &&
                    csv1 == read(dir / "report.csv") &&
                    plane1 == read(dir / "plane.dat");
  const bool nonempty = !json1.empty() && !csv1.empty() && !plane1.empty();
  return {same && nonempty,
          same ? "two strict runs byte-identical (json, csv, plane)"
               : "strict reruns differ"};
}

}  // namespace

int main() {
  int failures = 0;
  int id = 0;
  auto report = [&](const std::string& name, const Outcome& o) {
    ++id;
    std::printf("[%s] C%02d %s: %s\n", o.pass ? "PASS" : "FAIL", id,
                name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto guarded = [&](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(name, o);
  };

  guarded("flow endpoint identity", c01_endpoint_identity);
  guarded("mse geometry", c02_mse_geometry);

  // Shared 1-D task state for criteria 3, 5, 6, 11.
  std::optional<OneDimKit> kit;
  const RngKey one_dim_key{314159, 0};
  const auto kit_start = std::chrono::steady_clock::now();
  try {
    kit.emplace(one_dim_key);
  } catch (const std::exception& e) {
    const std::string why = std::string("1-d task setup failed: ") + e.what();
    report("learned field accuracy", {false, why});
  }
  if (kit) {
    guarded("learned field accuracy",
            [&] { return c03_learned_field(*kit, kit_start); });
  }

  // Shared toy-image experiment for criteria 4 and 7.
  std::optional<harness::ExperimentReport> image_report;
  const std::vector<int> ks = {3, 5, 10, 25, 50, 100};
  double image_secs = 0.0;
  try {
    harness::ExperimentConfig cfg;
    cfg.task = harness::TaskKind::denoise;
    cfg.dataset = harness::DatasetSource::synthetic_sprites;
    cfg.n_samples = 10000;
    cfg.seed = 8080;
    cfg.out_dir = "acceptance_out/sprites";
    cfg.methods = {"pmrf"};
    cfg.sigma_s = 0.025;
    cfg.steps = ks;
    cfg.train.epochs = 25;
    cfg.train.batch_size = 128;
    cfg.train.hidden = {128, 128};
    cfg.train.optim.lr = 1e-3;
    cfg.train.ema_decay = 0.999;
    std::filesystem::remove_all(cfg.out_dir);
    harness::RunOptions opts;
    opts.strict = true;
    const auto t0 = std::chrono::steady_clock::now();
    image_report = harness::run_experiment(cfg, opts);
    image_secs = seconds_since(t0);
  } catch (const std::exception& e) {
    const std::string why = std::string("image experiment failed: ") + e.what();
    report("image-scale flow quality", {false, why});
    report("k-sweep direction", {false, why});
  }
  if (image_report) {
    guarded("image-scale flow quality",
            [&] { return c04_image_scale(*image_report, image_secs); });
  }

  if (kit) {
    guarded("conditional flow mse", [&] { return c05_cond_on_xstar(*kit, one_dim_key); });
    guarded("measurement-start equivalence",
            [&] { return c06_flow_from_y(*kit, one_dim_key); });
  } else {
    report("conditional flow mse", {false, "1-d task setup failed"});
    report("measurement-start equivalence", {false, "1-d task setup failed"});
  }

  if (image_report) {
    guarded("k-sweep direction", [&] { return c07_k_sweep(*image_report, ks); });
  }

  guarded("gradient oracle", c08_gradient_oracle);
  guarded("frechet closed forms", c09_frechet_closed_forms);
  guarded("gaussian transport map", c10_gaussian_ot);

  if (kit) {
    guarded("reflow transport cost", [&] { return c11_reflow(*kit, one_dim_key); });
  } else {
    report("reflow transport cost", {false, "1-d task setup failed"});
  }

  guarded("strict determinism", c12_determinism);

  std::printf("%d of 12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
