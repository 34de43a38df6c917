#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmrf/error.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::neural {

// A plain fully connected network: GELU hidden layers, linear output.
// Inputs are assembled as [data | sinusoidal time features | conditioning],
// which is enough structure for every network this laboratory trains
// (posterior-mean predictors and velocity fields, conditional or not).

struct Layer {
  Tensor w;  // [out, in], row-major
  Tensor b;  // [out]
};

struct MlpParams {
  std::vector<Layer> layers;
  std::vector<double> time_frequencies;  // empty = network takes no time input
  std::size_t cond_width = 0;

  std::size_t time_feature_width() const { return 2 * time_frequencies.size(); }
  std::size_t feature_width() const { return layers.front().w.shape()[1]; }
  std::size_t data_width() const {
    return feature_width() - time_feature_width() - cond_width;
  }
  std::size_t out_width() const { return layers.back().w.shape()[0]; }
};

// Sixteen geometrically spaced frequencies spanning 0.5..32 cycles over the
// unit time interval; low end resolves the smooth trend, high end sharp
// schedule changes.
inline std::vector<double> default_time_frequencies() {
  const std::size_t count = 16;
  std::vector<double> f(count);
  const double lo = 0.5, hi = 32.0;
  for (std::size_t i = 0; i < count; ++i) {
    f[i] = lo * std::pow(hi / lo, static_cast<double>(i) /
                                      static_cast<double>(count - 1));
  }
  return f;
}

// sizes = [data_in, hidden..., out].  The first layer consumes data_in plus
// the time-feature and conditioning widths.  Weights are N(0, 1/fan_in),
// biases zero.
inline MlpParams mlp_init(const std::vector<std::size_t>& sizes, bool with_time,
                          std::size_t cond_width, const RngKey& key) {
  if (sizes.size() < 2) {
    throw ValueError("mlp_init", "need at least input and output sizes");
  }
  for (std::size_t s : sizes) {
    if (s == 0) throw ValueError("mlp_init", "layer sizes must be positive");
  }
  MlpParams p;
  if (with_time) p.time_frequencies = default_time_frequencies();
  p.cond_width = cond_width;
  std::vector<std::size_t> widths = sizes;
  widths[0] += (with_time ? 2 * p.time_frequencies.size() : 0) + cond_width;
  p.layers.reserve(widths.size() - 1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    Layer layer;
    layer.w = sample_standard_normal(key.child(l), {out, in});
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    layer.w *= scale;
    layer.b = Tensor({out});
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace neural_detail {

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

// Assemble [x | time | cond] feature rows for a batch.
inline Tensor assemble_features(const MlpParams& p, const Tensor& x,
                                const std::vector<double>& ts,
                                const Tensor& cond) {
  if (x.rank() != 2) {
    throw ShapeError("mlp forward", "batch input must be rank 2, got " +
                                        Tensor::shape_string(x.shape()));
  }
  const std::size_t batch = x.shape()[0];
  const std::size_t dx = x.shape()[1];
  if (dx != p.data_width()) {
    throw ShapeError("mlp forward",
                     "data width " + std::to_string(dx) + " != expected " +
                         std::to_string(p.data_width()));
  }
  const bool wants_time = !p.time_frequencies.empty();
  if (wants_time != !ts.empty() || (wants_time && ts.size() != batch)) {
    throw ShapeError("mlp forward", "time values do not match the network's "
                                    "time-input configuration");
  }
  if (p.cond_width == 0) {
    if (!cond.empty()) {
      throw ShapeError("mlp forward", "network takes no conditioning input");
    }
  } else if (cond.rank() != 2 || cond.shape()[0] != batch ||
             cond.shape()[1] != p.cond_width) {
    throw ShapeError("mlp forward",
                     "conditioning must be [batch, " +
                         std::to_string(p.cond_width) + "], got " +
                         Tensor::shape_string(cond.shape()));
  }
  Tensor feat({batch, p.feature_width()});
  const std::size_t tf = p.time_feature_width();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    double* row = feat.data().data() + bi * p.feature_width();
    const double* xrow = x.data().data() + bi * dx;
    std::memcpy(row, xrow, dx * sizeof(double));
    if (wants_time) {
      const double t = ts[bi];
      for (std::size_t k = 0; k < p.time_frequencies.size(); ++k) {
        const double a = 2.0 * M_PI * p.time_frequencies[k] * t;
        row[dx + 2 * k] = std::sin(a);
        row[dx + 2 * k + 1] = std::cos(a);
      }
    }
    if (p.cond_width > 0) {
      const double* crow = cond.data().data() + bi * p.cond_width;
      std::memcpy(row + dx + tf, crow, p.cond_width * sizeof(double));
    }
  }
  return feat;
}

// y[b,o] = sum_i a[b,i] w[o,i] + bias[o]
inline Tensor linear_forward(const Tensor& a, const Layer& layer) {
  const std::size_t batch = a.shape()[0];
  const std::size_t in = layer.w.shape()[1];
  const std::size_t out = layer.w.shape()[0];
  Tensor y({batch, out});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* arow = a.data().data() + bi * in;
    double* yrow = y.data().data() + bi * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wrow = layer.w.data().data() + o * in;
      double acc = layer.b[o];
      for (std::size_t i = 0; i < in; ++i) acc += arow[i] * wrow[i];
      yrow[o] = acc;
    }
  }
  return y;
}

struct ForwardCache {
  Tensor features;          // assembled input rows
  std::vector<Tensor> pre;  // pre-activations per layer
  std::vector<Tensor> act;  // post-activations per hidden layer
};

inline Tensor forward_cached(const MlpParams& p, const Tensor& x,
                             const std::vector<double>& ts, const Tensor& cond,
                             ForwardCache* cache) {
  Tensor a = assemble_features(p, x, ts, cond);
  if (cache) cache->features = a;
  const std::size_t last = p.layers.size() - 1;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Tensor z = linear_forward(a, p.layers[l]);
    if (cache) cache->pre.push_back(z);
    if (l < last) {
      for (double& v : z.data()) v = gelu(v);
      if (cache) cache->act.push_back(z);
    }
    a = std::move(z);
  }
  return a;
}

}  // namespace neural_detail

// Batched forward pass.  ts must be empty exactly when the network has no
// time input; cond must be empty exactly when cond_width == 0.
inline Tensor forward_batch(const MlpParams& p, const Tensor& x,
                            const std::vector<double>& ts = {},
                            const Tensor& cond = {}) {
  return neural_detail::forward_cached(p, x, ts, cond, nullptr);
}

// Single-sample forward pass over a rank-1 input.
inline Tensor forward(const MlpParams& p, const Tensor& x,
                      std::optional<double> t = std::nullopt,
                      const Tensor* cond = nullptr) {
  if (x.rank() != 1) {
    throw ShapeError("forward", "single-sample input must be rank 1");
  }
  std::vector<double> ts;
  if (t.has_value()) ts.push_back(*t);
  Tensor cb;
  if (cond != nullptr) cb = cond->reshaped({1, cond->size()});
  Tensor y = forward_batch(p, x.reshaped({1, x.size()}), ts, cb);
  return y.reshaped({y.size()});
}

struct TrainingBatch {
  Tensor inputs;           // [B, data_width]
  std::vector<double> ts;  // size B, or empty for time-free networks
  Tensor cond;             // [B, cond_width], or empty
  Tensor targets;          // [B, out_width]
};

struct LossGrad {
  double loss = 0.0;
  MlpParams grads;  // same shapes as the parameters
};

// Mean squared error over batch and output dimensions, with exact gradients
// for every weight and bias.
inline LossGrad loss_and_grad(const MlpParams& p, const TrainingBatch& batch) {
  using namespace neural_detail;
  if (batch.targets.rank() != 2 ||
      batch.targets.shape()[0] != batch.inputs.shape()[0] ||
      batch.targets.shape()[1] != p.out_width()) {
    throw ShapeError("loss_and_grad", "targets must be [batch, out_width]");
  }
  ForwardCache cache;
  Tensor y = forward_cached(p, batch.inputs, batch.ts, batch.cond, &cache);

  const std::size_t bsz = y.shape()[0];
  const std::size_t dout = y.shape()[1];
  const double norm = 1.0 / static_cast<double>(bsz * dout);

  LossGrad out;
  out.grads.time_frequencies = p.time_frequencies;
  out.grads.cond_width = p.cond_width;
  out.grads.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    out.grads.layers[l].w = Tensor(p.layers[l].w.shape());
    out.grads.layers[l].b = Tensor(p.layers[l].b.shape());
  }

  // dLoss/dy and the loss itself.
  Tensor g({bsz, dout});
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double diff = y[i] - batch.targets[i];
    out.loss += diff * diff;
    g[i] = 2.0 * diff * norm;
  }
  out.loss *= norm;

  // Walk the layers backwards; g holds dLoss/d(pre-activation l) on entry
  // to each iteration's weight-gradient accumulation.
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const Layer& layer = p.layers[li];
    const std::size_t in = layer.w.shape()[1];
    const std::size_t outw = layer.w.shape()[0];
    const Tensor& a = (li == 0) ? cache.features : cache.act[li - 1];

    Layer& grad = out.grads.layers[li];
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const double* grow = g.data().data() + bi * outw;
      const double* arow = a.data().data() + bi * in;
      for (std::size_t o = 0; o < outw; ++o) {
        const double go = grow[o];
        if (go == 0.0) continue;
        grad.b[o] += go;
        double* wrow = grad.w.data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) wrow[i] += go * arow[i];
      }
    }

    if (li == 0) break;

    // Propagate to the previous layer: g_prev = (g W) * gelu'(pre_prev).
    Tensor gp({bsz, in});
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const double* grow = g.data().data() + bi * outw;
      double* prow = gp.data().data() + bi * in;
      for (std::size_t o = 0; o < outw; ++o) {
        const double go = grow[o];
        if (go == 0.0) continue;
        const double* wrow = layer.w.data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) prow[i] += go * wrow[i];
      }
      const double* zrow = cache.pre[li - 1].data().data() + bi * in;
      for (std::size_t i = 0; i < in; ++i) {
        prow[i] *= neural_detail::gelu_grad(zrow[i]);
      }
    }
    g = std::move(gp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay, applied uniformly to weights and biases.
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct AdamWState {
  std::vector<Layer> m;  // first moments, parameter-shaped
  std::vector<Layer> v;  // second moments
  std::int64_t step = 0;
};

inline AdamWState adamw_init(const MlpParams& p) {
  AdamWState s;
  s.m.resize(p.layers.size());
  s.v.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    s.m[l].w = Tensor(p.layers[l].w.shape());
    s.m[l].b = Tensor(p.layers[l].b.shape());
    s.v[l].w = Tensor(p.layers[l].w.shape());
    s.v[l].b = Tensor(p.layers[l].b.shape());
  }
  return s;
}

namespace neural_detail {
inline void adamw_apply(const AdamWConfig& cfg, double bc1, double bc2,
                        Tensor& param, const Tensor& grad, Tensor& m,
                        Tensor& v) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                          cfg.weight_decay * param[i]);
  }
}
}  // namespace neural_detail

inline void adamw_step(const AdamWConfig& cfg, AdamWState& state,
                       MlpParams& params, const MlpParams& grads) {
  if (grads.layers.size() != params.layers.size() ||
      state.m.size() != params.layers.size()) {
    throw ShapeError("adamw_step", "parameter/gradient/state layer mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!params.layers[l].w.same_shape(grads.layers[l].w)) {
      throw ShapeError("adamw_step", "gradient shape mismatch at layer " +
                                         std::to_string(l));
    }
    neural_detail::adamw_apply(cfg, bc1, bc2, params.layers[l].w,
                               grads.layers[l].w, state.m[l].w, state.v[l].w);
    neural_detail::adamw_apply(cfg, bc1, bc2, params.layers[l].b,
                               grads.layers[l].b, state.m[l].b, state.v[l].b);
  }
}

// ---------------------------------------------------------------------------
// Exponential moving average of parameters, evaluated weights for inference.
// ---------------------------------------------------------------------------

struct EmaState {
  MlpParams shadow;
  double decay = 0.9999;
};

inline EmaState ema_init(const MlpParams& p, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) {
    throw ValueError("ema_init", "decay must be in [0, 1)");
  }
  return EmaState{p, decay};
}

inline void ema_update(EmaState& ema, const MlpParams& params) {
  if (ema.shadow.layers.size() != params.layers.size()) {
    throw ShapeError("ema_update", "shadow/parameter layer count mismatch");
  }
  const double d = ema.decay;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Tensor& sw = ema.shadow.layers[l].w;
    const Tensor& pw = params.layers[l].w;
    for (std::size_t i = 0; i < sw.size(); ++i) {
      sw[i] = d * sw[i] + (1.0 - d) * pw[i];
    }
    Tensor& sb = ema.shadow.layers[l].b;
    const Tensor& pb = params.layers[l].b;
    for (std::size_t i = 0; i < sb.size(); ++i) {
      sb[i] = d * sb[i] + (1.0 - d) * pb[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian binary blob with a fixed magic plus a JSON
// sidecar ("<path>.json") describing the topology.  Loading validates magic,
// sizes and the trailing checksum, and load-then-save round-trips bytes.
// ---------------------------------------------------------------------------

namespace neural_detail {

constexpr char kCheckpointMagic[8] = {'P', 'M', 'R', 'F', 'M', 'L', 'P', '1'};

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, const char* context)
      : buf_(buf), context_(context) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw IoError(context_, "checkpoint is truncated");
    }
  }
  const std::string& buf_;
  const char* context_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a64_bytes(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace neural_detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const MlpParams& p) {
  using namespace neural_detail;
  std::string blob(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(blob, static_cast<std::uint32_t>(p.layers.size()));
  put_u32(blob, static_cast<std::uint32_t>(p.cond_width));
  put_u32(blob, static_cast<std::uint32_t>(p.time_frequencies.size()));
  for (double f : p.time_frequencies) put_f64(blob, f);
  for (const Layer& layer : p.layers) {
    put_u32(blob, static_cast<std::uint32_t>(layer.w.shape()[0]));
    put_u32(blob, static_cast<std::uint32_t>(layer.w.shape()[1]));
    for (double v : layer.w.data()) put_f64(blob, v);
    for (double v : layer.b.data()) put_f64(blob, v);
  }
  const std::uint64_t checksum = fnv1a64_bytes(blob);
  for (int i = 0; i < 8; ++i) {
    blob.push_back(static_cast<char>((checksum >> (8 * i)) & 0xFF));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("save_checkpoint", "cannot open " + path.string());
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) {
    throw IoError("save_checkpoint", "write failed for " + path.string());
  }

  nlohmann::json sidecar;
  sidecar["format"] = "pmrf-mlp-v1";
  sidecar["cond_width"] = p.cond_width;
  sidecar["time_frequencies"] = p.time_frequencies;
  std::vector<std::vector<std::size_t>> shapes;
  for (const Layer& layer : p.layers) {
    shapes.push_back({layer.w.shape()[0], layer.w.shape()[1]});
  }
  sidecar["layers"] = shapes;
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) {
    throw IoError("save_checkpoint", "cannot open " + path.string() + ".json");
  }
  side << sidecar.dump(2) << "\n";
}

inline MlpParams load_checkpoint(const std::filesystem::path& path) {
  using namespace neural_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("load_checkpoint", "cannot open " + path.string());
  }
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (blob.size() < sizeof(kCheckpointMagic) + 8 ||
      std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IoError("load_checkpoint",
                  "bad magic in " + path.string() + " (not a checkpoint?)");
  }
  std::string payload = blob.substr(0, blob.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(blob[blob.size() - 8 + i]))
              << (8 * i);
  }
  if (fnv1a64_bytes(payload) != stored) {
    throw IoError("load_checkpoint", "checksum mismatch in " + path.string());
  }

  std::string body = payload.substr(sizeof(kCheckpointMagic));
  ByteReader r(body, "load_checkpoint");
  MlpParams p;
  const std::uint32_t n_layers = r.u32();
  p.cond_width = r.u32();
  const std::uint32_t n_freq = r.u32();
  if (n_layers == 0 || n_layers > 64 || n_freq > 4096) {
    throw IoError("load_checkpoint", "implausible header in " + path.string());
  }
  p.time_frequencies.resize(n_freq);
  for (std::uint32_t i = 0; i < n_freq; ++i) p.time_frequencies[i] = r.f64();
  p.layers.resize(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t out = r.u32();
    const std::uint32_t in = r.u32();
    if (out == 0 || in == 0) {
      throw IoError("load_checkpoint", "zero layer extent in " + path.string());
    }
    Tensor w({out, in});
    for (double& v : w.data()) v = r.f64();
    Tensor b({out});
    for (double& v : b.data()) v = r.f64();
    p.layers[l] = Layer{std::move(w), std::move(b)};
  }
  if (r.pos() != body.size()) {
    throw IoError("load_checkpoint", "trailing bytes in " + path.string());
  }
  return p;
}

}  // namespace pmrf::neural
