#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pmrf/error.hpp"
#include "pmrf/neural.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::flows {

// Rectified-flow machinery: how (z0, z1) pairs are coupled for each method,
// how interpolation times are drawn, one gradient step on the velocity
// network, the Euler sampler, and full training/restoration drivers.

// The four flow-based restoration recipes compared by this laboratory.
//   pmrf          - start at posterior-mean prediction + sigma_s noise
//   cond_on_y     - start at pure noise, condition the field on y
//   cond_on_xstar - start at pure noise, condition on the predictor output
//   flow_from_y   - start at the measurement itself + sigma_s noise
enum class FlowMethod { pmrf, cond_on_y, cond_on_xstar, flow_from_y };

inline std::string to_string(FlowMethod m) {
  switch (m) {
    case FlowMethod::pmrf: return "pmrf";
    case FlowMethod::cond_on_y: return "cond_on_y";
    case FlowMethod::cond_on_xstar: return "cond_on_xstar";
    case FlowMethod::flow_from_y: return "flow_from_y";
  }
  throw ValueError("to_string(FlowMethod)", "unknown method value");
}

inline FlowMethod parse_flow_method(const std::string& s) {
  if (s == "pmrf") return FlowMethod::pmrf;
  if (s == "cond_on_y") return FlowMethod::cond_on_y;
  if (s == "cond_on_xstar") return FlowMethod::cond_on_xstar;
  if (s == "flow_from_y") return FlowMethod::flow_from_y;
  throw ValueError("parse_flow_method", "unknown method '" + s + "'");
}

struct FlowSpec {
  FlowMethod method = FlowMethod::pmrf;
  double sigma_s = 0.1;  // spread of the noise added to the flow's start
  int steps_k = 25;      // Euler steps at inference

  void validate() const {
    if (!(sigma_s >= 0.0)) {
      throw ValueError("FlowSpec", "sigma_s must be >= 0");
    }
    if (steps_k < 1) {
      throw ValueError("FlowSpec", "steps_k must be >= 1");
    }
  }
};

// One training pair: the path runs from z0 to z1; cond is empty unless the
// method conditions its velocity field on side information.
struct Coupling {
  Tensor z0;
  Tensor z1;
  Tensor cond;
};

// Stratified times: each of the `batch` equal bins of [0,1) receives exactly
// one uniform draw, and the bins are visited in shuffled order.
inline std::vector<double> sample_t_stratified(std::size_t batch,
                                               const RngKey& key) {
  if (batch == 0) {
    throw ValueError("sample_t_stratified", "batch must be > 0");
  }
  std::vector<std::size_t> bins = random_permutation(batch, key.child("bins"));
  RandomStream rng(key.child("offsets"));
  std::vector<double> ts(batch);
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    ts[i] = (static_cast<double>(bins[i]) + rng.next_uniform()) * inv;
  }
  return ts;
}

// Builds the (z0, z1, cond) pair for one sample.  `y_like` is the
// measurement (flattened; already lifted to x's shape for flow_from_y) and
// `xstar` the posterior-mean prediction; each method reads the ones it needs.
inline Coupling make_coupling(FlowMethod method, const Tensor& x,
                              const Tensor& y_like, const Tensor& xstar,
                              double sigma_s, const RngKey& key) {
  if (!(sigma_s >= 0.0)) {
    throw ValueError("make_coupling", "sigma_s must be >= 0");
  }
  Coupling c;
  c.z1 = x;
  switch (method) {
    case FlowMethod::pmrf: {
      if (!xstar.same_shape(x)) {
        throw ShapeError("make_coupling", "xstar must match x's shape");
      }
      c.z0 = xstar;
      if (sigma_s > 0.0) {
        c.z0 += sigma_s * sample_standard_normal(key, x.shape());
      }
      break;
    }
    case FlowMethod::cond_on_y: {
      c.z0 = sample_standard_normal(key, x.shape());
      c.cond = y_like;
      break;
    }
    case FlowMethod::cond_on_xstar: {
      if (!xstar.same_shape(x)) {
        throw ShapeError("make_coupling", "xstar must match x's shape");
      }
      c.z0 = sample_standard_normal(key, x.shape());
      c.cond = xstar;
      break;
    }
    case FlowMethod::flow_from_y: {
      if (!y_like.same_shape(x)) {
        throw ShapeError("make_coupling",
                         "flow_from_y requires y lifted to x's shape");
      }
      c.z0 = y_like;
      if (sigma_s > 0.0) {
        c.z0 += sigma_s * sample_standard_normal(key, x.shape());
      }
      break;
    }
  }
  return c;
}

// One velocity-matching step: regress v(z_t, t, cond) onto (z1 - z0) at
// z_t = t z1 + (1-t) z0.  Returns the loss and parameter gradients.
inline neural::LossGrad rf_training_step(const neural::MlpParams& vfield,
                                         const std::vector<Coupling>& batch,
                                         const std::vector<double>& ts) {
  if (batch.empty() || ts.size() != batch.size()) {
    throw ShapeError("rf_training_step", "need one t per coupling");
  }
  const std::size_t bsz = batch.size();
  const std::size_t d = batch.front().z0.size();
  const bool has_cond = vfield.cond_width > 0;

  neural::TrainingBatch tb;
  tb.inputs = Tensor({bsz, d});
  tb.targets = Tensor({bsz, d});
  tb.ts = ts;
  if (has_cond) tb.cond = Tensor({bsz, vfield.cond_width});

  for (std::size_t i = 0; i < bsz; ++i) {
    const Coupling& c = batch[i];
    if (c.z0.size() != d || c.z1.size() != d) {
      throw ShapeError("rf_training_step", "coupling sizes disagree");
    }
    if (has_cond && c.cond.size() != vfield.cond_width) {
      throw ShapeError("rf_training_step", "conditioning width mismatch");
    }
    const double t = ts[i];
    for (std::size_t j = 0; j < d; ++j) {
      tb.inputs.data()[i * d + j] = t * c.z1[j] + (1.0 - t) * c.z0[j];
      tb.targets.data()[i * d + j] = c.z1[j] - c.z0[j];
    }
    if (has_cond) {
      for (std::size_t j = 0; j < vfield.cond_width; ++j) {
        tb.cond.data()[i * vfield.cond_width + j] = c.cond[j];
      }
    }
  }
  return neural::loss_and_grad(vfield, tb);
}

// ---------------------------------------------------------------------------
// Euler integration of dz/dt = v(z, t) from t=0 to t=1 in K equal steps,
// evaluating the field at times exactly i/K.
// ---------------------------------------------------------------------------

using VectorField = std::function<Tensor(const Tensor&, double)>;
using Predictor = std::function<Tensor(const Tensor&)>;

inline Tensor euler_integrate(const VectorField& field, Tensor z0, int steps) {
  if (steps < 1) throw ValueError("euler_integrate", "steps must be >= 1");
  const double h = 1.0 / static_cast<double>(steps);
  Tensor z = std::move(z0);
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps);
    Tensor v = field(z, t);
    if (!v.same_shape(z)) {
      throw ShapeError("euler_integrate", "field changed the state shape");
    }
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += h * v[j];
    if (!z.all_finite()) {
      throw NumericError("euler_integrate",
                         "state became non-finite at step " + std::to_string(i));
    }
  }
  return z;
}

// Batched Euler under a velocity network: integrates every row of z0 [n, d]
// in lockstep, with optional per-row conditioning [n, cond_width].
inline Tensor euler_integrate_batch(const neural::MlpParams& vfield, Tensor z0,
                                    const Tensor& cond, int steps) {
  if (steps < 1) {
    throw ValueError("euler_integrate_batch", "steps must be >= 1");
  }
  if (z0.rank() != 2) {
    throw ShapeError("euler_integrate_batch", "z0 must be [n, d]");
  }
  const std::size_t n = z0.shape()[0];
  const double h = 1.0 / static_cast<double>(steps);
  Tensor z = std::move(z0);
  std::vector<double> ts(n);
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps);
    std::fill(ts.begin(), ts.end(), t);
    Tensor v = neural::forward_batch(vfield, z, ts, cond);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += h * v[j];
    if (!z.all_finite()) {
      throw NumericError("euler_integrate_batch",
                         "state became non-finite at step " + std::to_string(i));
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Restoration.
// ---------------------------------------------------------------------------

// Posterior-mean start: x0 = fstar(y) + sigma_s eps, then K Euler steps under
// the unconditional velocity field.
inline Tensor pmrf_restore(const Predictor& fstar,
                           const neural::MlpParams& vfield, const Tensor& y,
                           const FlowSpec& spec, const RngKey& key) {
  spec.validate();
  if (spec.method != FlowMethod::pmrf) {
    throw ValueError("pmrf_restore", "spec.method must be pmrf");
  }
  Tensor x0 = fstar(y);
  if (spec.sigma_s > 0.0) {
    x0 += spec.sigma_s * sample_standard_normal(key, x0.shape());
  }
  Tensor z = euler_integrate_batch(vfield, x0.reshaped({1, x0.size()}), {},
                                   spec.steps_k);
  return z.reshaped({z.size()});
}

// Baseline starts.  `input` is the conditioning signal for cond_on_* (y or
// fstar(y) respectively) and the lifted measurement for flow_from_y.
inline Tensor baseline_restore(const neural::MlpParams& vfield,
                               const Tensor& input, const FlowSpec& spec,
                               const RngKey& key) {
  spec.validate();
  Tensor z0, cond;
  switch (spec.method) {
    case FlowMethod::pmrf:
      throw ValueError("baseline_restore",
                       "pmrf needs a predictor; call pmrf_restore");
    case FlowMethod::cond_on_y:
    case FlowMethod::cond_on_xstar: {
      z0 = sample_standard_normal(key, {1, vfield.data_width()});
      if (input.size() != vfield.cond_width) {
        throw ShapeError("baseline_restore", "conditioning width mismatch");
      }
      cond = input.reshaped({1, input.size()});
      break;
    }
    case FlowMethod::flow_from_y: {
      Tensor start = input;
      if (spec.sigma_s > 0.0) {
        start += spec.sigma_s * sample_standard_normal(key, input.shape());
      }
      z0 = start.reshaped({1, start.size()});
      break;
    }
  }
  Tensor z = euler_integrate_batch(vfield, std::move(z0), cond, spec.steps_k);
  return z.reshaped({z.size()});
}

// ---------------------------------------------------------------------------
// Training drivers.  All are deterministic functions of their key.
// ---------------------------------------------------------------------------

// Flattened (signal, measurement) pairs; rows correspond by index.
struct PairedDataset {
  std::vector<Tensor> x;
  std::vector<Tensor> y;

  void validate(const char* context) const {
    if (x.empty() || x.size() != y.size()) {
      throw ShapeError(context, "dataset must hold matched x/y rows");
    }
  }
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  std::vector<std::size_t> hidden = {256, 256};
  neural::AdamWConfig optim;   // lr 5e-4, betas (0.9, 0.95), wd 1e-2
  double ema_decay = 0.9999;

  void validate() const {
    if (epochs == 0) throw ValueError("TrainConfig", "epochs must be > 0");
    if (batch_size == 0) throw ValueError("TrainConfig", "batch_size must be > 0");
    if (hidden.empty()) throw ValueError("TrainConfig", "need >= 1 hidden layer");
  }
};

namespace flows_detail {

// Shared mini-batch schedule: shuffled epochs of near-equal batches.
template <typename StepFn>
void run_epochs(std::size_t n, const TrainConfig& cfg, const RngKey& key,
                StepFn&& step) {
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const RngKey ekey = key.child("epoch").child(epoch);
    std::vector<std::size_t> order = random_permutation(n, ekey.child("shuffle"));
    std::size_t step_index = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      step(ekey.child("step").child(step_index),
           std::vector<std::size_t>(order.begin() + begin, order.begin() + end));
      ++step_index;
    }
  }
}

}  // namespace flows_detail

// Stage one: regress x on y in mean square.  Returns the EMA of the weights.
inline neural::MlpParams train_mmse(const PairedDataset& data,
                                    const TrainConfig& cfg, const RngKey& key) {
  data.validate("train_mmse");
  cfg.validate();
  const std::size_t dx = data.x.front().size();
  const std::size_t dy = data.y.front().size();

  std::vector<std::size_t> sizes;
  sizes.push_back(dy);
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(dx);

  neural::MlpParams params =
      neural::mlp_init(sizes, /*with_time=*/false, 0, key.child("init"));
  neural::AdamWState opt = neural::adamw_init(params);
  neural::EmaState ema = neural::ema_init(params, cfg.ema_decay);

  flows_detail::run_epochs(
      data.x.size(), cfg, key,
      [&](const RngKey&, const std::vector<std::size_t>& idx) {
        const std::size_t bsz = idx.size();
        neural::TrainingBatch tb;
        tb.inputs = Tensor({bsz, dy});
        tb.targets = Tensor({bsz, dx});
        for (std::size_t i = 0; i < bsz; ++i) {
          const Tensor& yi = data.y[idx[i]];
          const Tensor& xi = data.x[idx[i]];
          if (yi.size() != dy || xi.size() != dx) {
            throw ShapeError("train_mmse", "ragged dataset rows");
          }
          std::copy(yi.data().begin(), yi.data().end(),
                    tb.inputs.data().begin() + i * dy);
          std::copy(xi.data().begin(), xi.data().end(),
                    tb.targets.data().begin() + i * dx);
        }
        neural::LossGrad lg = neural::loss_and_grad(params, tb);
        neural::adamw_step(cfg.optim, opt, params, lg.grads);
        neural::ema_update(ema, params);
      });
  return ema.shadow;
}

// Stage two: velocity matching for the chosen method.  `xstar` holds the
// frozen stage-one predictions (required by pmrf and cond_on_xstar; pass an
// empty vector otherwise).  Returns the EMA of the weights.
inline neural::MlpParams train_flow(const PairedDataset& data,
                                    const std::vector<Tensor>& xstar,
                                    FlowMethod method, double sigma_s,
                                    const TrainConfig& cfg, const RngKey& key) {
  data.validate("train_flow");
  cfg.validate();
  const bool needs_xstar =
      method == FlowMethod::pmrf || method == FlowMethod::cond_on_xstar;
  if (needs_xstar && xstar.size() != data.x.size()) {
    throw ShapeError("train_flow", "need one xstar row per sample");
  }
  const std::size_t dx = data.x.front().size();
  std::size_t cond_width = 0;
  if (method == FlowMethod::cond_on_y) cond_width = data.y.front().size();
  if (method == FlowMethod::cond_on_xstar) cond_width = dx;

  std::vector<std::size_t> sizes;
  sizes.push_back(dx);
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(dx);

  neural::MlpParams params =
      neural::mlp_init(sizes, /*with_time=*/true, cond_width, key.child("init"));
  neural::AdamWState opt = neural::adamw_init(params);
  neural::EmaState ema = neural::ema_init(params, cfg.ema_decay);

  static const Tensor kNoXstar;
  flows_detail::run_epochs(
      data.x.size(), cfg, key,
      [&](const RngKey& skey, const std::vector<std::size_t>& idx) {
        std::vector<Coupling> batch;
        batch.reserve(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const std::size_t row = idx[i];
          batch.push_back(make_coupling(
              method, data.x[row], data.y[row],
              needs_xstar ? xstar[row] : kNoXstar, sigma_s,
              skey.child("noise").child(i)));
        }
        std::vector<double> ts = sample_t_stratified(idx.size(), skey.child("t"));
        neural::LossGrad lg = rf_training_step(params, batch, ts);
        neural::adamw_step(cfg.optim, opt, params, lg.grads);
        neural::ema_update(ema, params);
      });
  return ema.shadow;
}

// One rectification round: rebuild couplings, replace each target with the
// previous field's own Euler endpoint from that z0, and train a fresh field
// on the straightened pairs.  Only the unconditional methods participate.
inline neural::MlpParams reflow(const PairedDataset& data,
                                const std::vector<Tensor>& xstar,
                                const FlowSpec& spec,
                                const neural::MlpParams& prev,
                                const TrainConfig& cfg, const RngKey& key) {
  data.validate("reflow");
  cfg.validate();
  spec.validate();
  if (spec.method == FlowMethod::cond_on_y ||
      spec.method == FlowMethod::cond_on_xstar) {
    throw ValueError("reflow", "conditional methods are not rectified here");
  }
  const bool needs_xstar = spec.method == FlowMethod::pmrf;
  if (needs_xstar && xstar.size() != data.x.size()) {
    throw ShapeError("reflow", "need one xstar row per sample");
  }
  const std::size_t n = data.x.size();
  const std::size_t dx = data.x.front().size();

  // Regenerate: z1 <- endpoint of the previous field started from z0.
  std::vector<Coupling> pairs(n);
  static const Tensor kNoXstar;
  Tensor z0s({n, dx});
  for (std::size_t i = 0; i < n; ++i) {
    pairs[i] = make_coupling(spec.method, data.x[i], data.y[i],
                             needs_xstar ? xstar[i] : kNoXstar, spec.sigma_s,
                             key.child("regen").child(i));
    std::copy(pairs[i].z0.data().begin(), pairs[i].z0.data().end(),
              z0s.data().begin() + i * dx);
  }
  Tensor z1s = euler_integrate_batch(prev, z0s, {}, spec.steps_k);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(z1s.data().begin() + i * dx, z1s.data().begin() + (i + 1) * dx,
              pairs[i].z1.data().begin());
  }

  std::vector<std::size_t> sizes;
  sizes.push_back(dx);
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(dx);
  neural::MlpParams params =
      neural::mlp_init(sizes, /*with_time=*/true, 0, key.child("init"));
  neural::AdamWState opt = neural::adamw_init(params);
  neural::EmaState ema = neural::ema_init(params, cfg.ema_decay);

  flows_detail::run_epochs(
      n, cfg, key,
      [&](const RngKey& skey, const std::vector<std::size_t>& idx) {
        std::vector<Coupling> batch;
        batch.reserve(idx.size());
        for (std::size_t row : idx) batch.push_back(pairs[row]);
        std::vector<double> ts = sample_t_stratified(idx.size(), skey.child("t"));
        neural::LossGrad lg = rf_training_step(params, batch, ts);
        neural::adamw_step(cfg.optim, opt, params, lg.grads);
        neural::ema_update(ema, params);
      });
  return ema.shadow;
}

// Wraps a time-free network as a y -> xhat predictor.
inline Predictor predictor_from_mlp(const neural::MlpParams& params) {
  return [params](const Tensor& y) { return neural::forward(params, y); };
}

}  // namespace pmrf::flows
