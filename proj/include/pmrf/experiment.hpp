#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmrf/config.hpp"
#include "pmrf/dataset.hpp"
#include "pmrf/degrade.hpp"
#include "pmrf/dot.hpp"
#include "pmrf/error.hpp"
#include "pmrf/flows.hpp"
#include "pmrf/metrics.hpp"
#include "pmrf/neural.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::harness {

// Experiment orchestration: synthesize or load a dataset, degrade it, train
// the posterior-mean predictor and the configured flow methods on the train
// split, restore the held-out split at every step count, and report MSE /
// RMSE / PSNR / IndRMSE plus the Gaussian Frechet distance per cell.
//
// Fairness across methods is structural: one config carries exactly one
// TrainConfig, one dataset, and one split, so every method trains and
// evaluates on identical grounds.

namespace harness_detail {

// Rethrows any pipeline failure with the responsible stage prepended, so an
// aborted run names where it died.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  const std::string tag = "stage " + name;
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(tag, e.what());
  } catch (const ValueError& e) {
    throw ValueError(tag, e.what());
  } catch (const NumericError& e) {
    throw NumericError(tag, e.what());
  } catch (const IoError& e) {
    throw IoError(tag, e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(tag, e.what());
  } catch (const std::exception& e) {
    throw ConfigError(tag, e.what());
  }
}

inline std::string iso_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void log_line(std::ostream* log, const std::string& line) {
  if (log != nullptr) *log << line << '\n';
}

// Stacks rows [lo, hi) of equally sized tensors into one [hi-lo, d] matrix.
inline Tensor rows_to_matrix(const std::vector<Tensor>& rows, std::size_t lo,
                             std::size_t hi) {
  if (lo >= hi || hi > rows.size()) {
    throw ShapeError("rows_to_matrix", "empty or out-of-range row window");
  }
  const std::size_t d = rows[lo].size();
  Tensor m({hi - lo, d});
  for (std::size_t i = lo; i < hi; ++i) {
    if (rows[i].size() != d) {
      throw ShapeError("rows_to_matrix", "ragged rows");
    }
    std::copy(rows[i].data().begin(), rows[i].data().end(),
              m.data().begin() + (i - lo) * d);
  }
  return m;
}

inline std::vector<Tensor> matrix_to_rows(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("matrix_to_rows", "need a [n, d] tensor");
  const std::size_t n = m.shape()[0];
  const std::size_t d = m.shape()[1];
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor r({d});
    std::copy(m.data().begin() + i * d, m.data().begin() + (i + 1) * d,
              r.data().begin());
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace harness_detail

// ---------------------------------------------------------------------------
// Data preparation: dataset -> degraded (x, y, lifted-y) rows + fixed split.
// ---------------------------------------------------------------------------

struct PreparedData {
  std::vector<Tensor> x;      // flattened clean signals
  std::vector<Tensor> y;      // flattened measurements, natural size
  std::vector<Tensor> ylift;  // measurements lifted to the signal's size
  std::vector<std::size_t> item_shape;    // one clean item's original shape
  std::vector<std::size_t> y_item_shape;  // one measurement's original shape
  std::size_t n_train = 0;
  std::size_t clamped_factors = 0;  // pipeline draws raised to factor 1

  std::size_t n() const { return x.size(); }
  std::size_t n_test() const { return x.size() - n_train; }
  std::size_t dx() const { return x.front().size(); }
  std::size_t dy() const { return y.front().size(); }
};

namespace harness_detail {

// Degrades one clean item under the configured task.  Returns the natural
// measurement and its lift back to the signal's shape (identity for
// same-shape tasks).
inline std::pair<Tensor, Tensor> degrade_item(const ExperimentConfig& cfg,
                                              const Tensor& item,
                                              const RngKey& key,
                                              std::size_t* clamped) {
  using namespace pmrf::degrade;
  switch (cfg.task) {
    case TaskKind::denoise: {
      Tensor y = add_noise(item, cfg.denoise_sigma, key);
      return {y, y};
    }
    case TaskKind::super_resolution: {
      if (item.rank() < 2) {
        throw ShapeError("degrade_item", "super_resolution needs [H, W] images");
      }
      const std::size_t h = item.shape()[0];
      const std::size_t w = item.shape()[1];
      const std::size_t f = cfg.sr_factor;
      if (h % f != 0 || w % f != 0) {
        throw ValueError("degrade_item",
                         "super_resolution needs extents divisible by sr_factor");
      }
      Tensor down = bilinear_resize(item, h / f, w / f);
      Tensor y = add_noise(down, cfg.sr_noise, key);
      return {y, nearest_upsample(y, f)};
    }
    case TaskKind::inpaint: {
      MaskedImage masked = mask_pixels(item, cfg.mask_fraction, key.child("mask"));
      Tensor y = add_noise(masked.image, cfg.mask_noise, key.child("noise"));
      return {y, y};
    }
    case TaskKind::colorize: {
      Tensor gray3 = desaturate(item);  // validates the 3-channel shape
      const std::size_t h = item.shape()[0];
      const std::size_t w = item.shape()[1];
      Tensor gray({h, w, 1});
      for (std::size_t yy = 0; yy < h; ++yy) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          gray.at(yy, xx, 0) = gray3.at(yy, xx, 0);
        }
      }
      Tensor y = add_noise(gray, cfg.colorize_noise, key);
      return {y, replicate_channels(y, 3)};
    }
    case TaskKind::pipeline: {
      PipelineDraw draw;
      Tensor y = apply_pipeline(item, cfg.pipeline, key, &draw);
      if (draw.factor_raw < 1.0 && clamped != nullptr) ++*clamped;
      return {y, y};
    }
    case TaskKind::gauss1d: {
      Tensor y = add_noise(item, cfg.gauss1d_sigma, key);
      return {y, y};
    }
  }
  throw ValueError("degrade_item", "unknown task value");
}

}  // namespace harness_detail

inline PreparedData prepare_data(const ExperimentConfig& cfg, const RngKey& key) {
  std::vector<Tensor> items;
  switch (cfg.dataset) {
    case DatasetSource::synthetic_sprites:
      items = synth_dataset(DatasetKind::sprites, cfg.n_samples, key.child("data"));
      break;
    case DatasetSource::two_moons_2d:
      items = synth_dataset(DatasetKind::two_moons, cfg.n_samples, key.child("data"));
      break;
    case DatasetSource::gauss1d:
      items = synth_dataset(DatasetKind::gauss1d, cfg.n_samples, key.child("data"));
      break;
    case DatasetSource::idx_file: {
      items = load_idx(cfg.idx_path);
      if (items.size() < 20) {
        throw ConfigError("prepare_data",
                          "idx file holds fewer than 20 images: " + cfg.idx_path);
      }
      if (items.size() > cfg.n_samples) items.resize(cfg.n_samples);
      break;
    }
  }

  PreparedData data;
  data.item_shape = items.front().shape();
  data.x.reserve(items.size());
  data.y.reserve(items.size());
  data.ylift.reserve(items.size());
  const RngKey dkey = key.child("degrade");
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [y, lift] = harness_detail::degrade_item(cfg, items[i], dkey.child(i),
                                                  &data.clamped_factors);
    if (i == 0) data.y_item_shape = y.shape();
    data.x.push_back(items[i].reshaped({items[i].size()}));
    data.y.push_back(y.reshaped({y.size()}));
    data.ylift.push_back(lift.reshaped({lift.size()}));
  }

  // Deterministic 90/10 split by index: the final tenth is held out.
  const std::size_t n_test = items.size() / 10;
  if (n_test < 2) throw ConfigError("prepare_data", "test split needs >= 2 rows");
  data.n_train = items.size() - n_test;
  return data;
}

// ---------------------------------------------------------------------------
// Training and restoration.
// ---------------------------------------------------------------------------

struct TrainedModels {
  neural::MlpParams fstar;
  std::map<std::string, neural::MlpParams> flow_fields;  // every non-dot method
};

// Batched forward pass over a list of flattened inputs (chunked to bound the
// working-set size).
inline std::vector<Tensor> predict_rows(const neural::MlpParams& net,
                                        const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw ShapeError("predict_rows", "need >= 1 input row");
  const std::size_t chunk = 512;
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (std::size_t base = 0; base < inputs.size(); base += chunk) {
    const std::size_t hi = std::min(base + chunk, inputs.size());
    Tensor in = harness_detail::rows_to_matrix(inputs, base, hi);
    Tensor pred = neural::forward_batch(net, in, {}, {});
    std::vector<Tensor> rows = harness_detail::matrix_to_rows(pred);
    for (Tensor& r : rows) out.push_back(std::move(r));
  }
  return out;
}

inline TrainedModels train_models(const ExperimentConfig& cfg,
                                  const PreparedData& data, const RngKey& key,
                                  std::ostream* log = nullptr) {
  using harness_detail::log_line;
  flows::PairedDataset train;
  train.x.assign(data.x.begin(), data.x.begin() + data.n_train);
  train.y.assign(data.y.begin(), data.y.begin() + data.n_train);

  TrainedModels models;
  models.fstar = harness_detail::stage("train_mmse", [&] {
    return flows::train_mmse(train, cfg.train, key.child("mmse"));
  });
  log_line(log, "trained posterior-mean predictor on " +
                    std::to_string(data.n_train) + " rows");

  std::vector<Tensor> xstar_train;
  const bool needs_xstar =
      std::any_of(cfg.methods.begin(), cfg.methods.end(), [](const std::string& m) {
        return m == "pmrf" || m == "cond_on_xstar";
      });
  if (needs_xstar) {
    xstar_train = predict_rows(models.fstar, train.y);
  }

  for (const std::string& name : cfg.methods) {
    if (name == "dot") continue;  // fitted in closed form at evaluation time
    const flows::FlowMethod method = flows::parse_flow_method(name);
    flows::PairedDataset flow_train = train;
    if (method == flows::FlowMethod::flow_from_y) {
      flow_train.y.assign(data.ylift.begin(), data.ylift.begin() + data.n_train);
    }
    models.flow_fields[name] = harness_detail::stage("train_flow[" + name + "]", [&] {
      return flows::train_flow(flow_train, xstar_train, method, cfg.sigma_s,
                               cfg.train, key.child("flow").child(name));
    });
    log_line(log, "trained flow field for method " + name);
  }
  return models;
}

// Restores every held-out row with one flow method at k Euler steps.  Draw
// keys are per test row, so batching never changes the result.
inline std::vector<Tensor> restore_flow(const ExperimentConfig& cfg,
                                        const PreparedData& data,
                                        const neural::MlpParams& field,
                                        const std::vector<Tensor>& xstar,
                                        flows::FlowMethod method, int k,
                                        const RngKey& key) {
  const std::size_t n0 = data.n_train;
  const std::size_t m = data.n_test();
  const std::size_t d = data.dx();
  Tensor z0({m, d});
  Tensor cond;

  auto fill_row = [&](Tensor& dst, std::size_t i, const Tensor& src,
                      std::size_t width) {
    std::copy(src.data().begin(), src.data().end(),
              dst.data().begin() + i * width);
  };
  auto add_start_noise = [&](std::size_t i) {
    if (cfg.sigma_s <= 0.0) return;
    Tensor eps = sample_standard_normal(key.child(i), {d});
    for (std::size_t j = 0; j < d; ++j) {
      z0.data()[i * d + j] += cfg.sigma_s * eps[j];
    }
  };

  switch (method) {
    case flows::FlowMethod::pmrf: {
      for (std::size_t i = 0; i < m; ++i) {
        fill_row(z0, i, xstar[n0 + i], d);
        add_start_noise(i);
      }
      break;
    }
    case flows::FlowMethod::flow_from_y: {
      for (std::size_t i = 0; i < m; ++i) {
        fill_row(z0, i, data.ylift[n0 + i], d);
        add_start_noise(i);
      }
      break;
    }
    case flows::FlowMethod::cond_on_y: {
      cond = Tensor({m, data.dy()});
      for (std::size_t i = 0; i < m; ++i) {
        Tensor eps = sample_standard_normal(key.child(i), {d});
        fill_row(z0, i, eps, d);
        fill_row(cond, i, data.y[n0 + i], data.dy());
      }
      break;
    }
    case flows::FlowMethod::cond_on_xstar: {
      cond = Tensor({m, d});
      for (std::size_t i = 0; i < m; ++i) {
        Tensor eps = sample_standard_normal(key.child(i), {d});
        fill_row(z0, i, eps, d);
        fill_row(cond, i, xstar[n0 + i], d);
      }
      break;
    }
  }
  Tensor out = flows::euler_integrate_batch(field, std::move(z0), cond, k);
  return harness_detail::matrix_to_rows(out);
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

struct MetricCell {
  std::string method;
  int steps = 0;  // 0 marks the step-free direct transport baseline
  metrics::DistortionReport distortion;
  double frechet = 0.0;
};

struct ExperimentReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  bool strict = false;
  std::string timestamp;
  std::string task;
  std::string dataset;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double fstar_mse = 0.0;
  double fstar_frechet = 0.0;
  std::vector<MetricCell> cells;

  const MetricCell& cell(const std::string& method, int steps) const {
    for (const MetricCell& c : cells) {
      if (c.method == method && c.steps == steps) return c;
    }
    throw ValueError("ExperimentReport",
                     "missing cell " + method + "/k=" + std::to_string(steps));
  }

  // Every configured (method, steps) pair must be populated - no silent gaps.
  void require_complete(const ExperimentConfig& cfg) const {
    std::size_t expected = 0;
    for (const std::string& m : cfg.methods) {
      if (m == "dot") {
        cell(m, 0);
        expected += 1;
      } else {
        for (int k : cfg.steps) cell(m, k);
        expected += cfg.steps.size();
      }
    }
    if (cells.size() != expected) {
      throw ValueError("ExperimentReport", "unexpected extra report cells");
    }
  }
};

namespace harness_detail {

// Serialized metric value: finite numbers stay numbers, infinities become the
// string sentinel "inf" (never a float infinity in serialized output).
inline nlohmann::ordered_json metric_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline std::string metric_text(double v) {
  if (std::isinf(v)) return "inf";
  return fmt_double(v);
}

}  // namespace harness_detail

inline nlohmann::ordered_json report_json(const ExperimentReport& r) {
  nlohmann::ordered_json j;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["strict"] = r.strict;
  j["timestamp"] = r.timestamp;
  j["task"] = r.task;
  j["dataset"] = r.dataset;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["fstar"] = {{"mse", harness_detail::metric_json(r.fstar_mse)},
                {"frechet", harness_detail::metric_json(r.fstar_frechet)}};
  j["cells"] = nlohmann::ordered_json::array();
  for (const MetricCell& c : r.cells) {
    nlohmann::ordered_json cell;
    cell["method"] = c.method;
    cell["steps"] = c.steps;
    cell["mse"] = harness_detail::metric_json(c.distortion.mse);
    cell["rmse"] = harness_detail::metric_json(c.distortion.rmse);
    cell["psnr"] = harness_detail::metric_json(c.distortion.psnr);
    cell["ind_rmse"] = c.distortion.ind_rmse.has_value()
                           ? harness_detail::metric_json(*c.distortion.ind_rmse)
                           : nlohmann::ordered_json();
    cell["frechet"] = harness_detail::metric_json(c.frechet);
    j["cells"].push_back(std::move(cell));
  }
  return j;
}

inline std::string report_csv(const ExperimentReport& r) {
  using harness_detail::metric_text;
  std::string s = "# config_hash=" + r.config_hash + "\n";
  s += "method,steps,mse,rmse,psnr,ind_rmse,frechet\n";
  for (const MetricCell& c : r.cells) {
    s += c.method;
    s += ',' + std::to_string(c.steps);
    s += ',' + metric_text(c.distortion.mse);
    s += ',' + metric_text(c.distortion.rmse);
    s += ',' + metric_text(c.distortion.psnr);
    s += ',';
    s += c.distortion.ind_rmse.has_value() ? metric_text(*c.distortion.ind_rmse)
                                           : std::string();
    s += ',' + metric_text(c.frechet);
    s += '\n';
  }
  return s;
}

// Gnuplot-friendly distortion-perception plane: one block per method, RMSE
// against Frechet per step count.
inline std::string report_plane(const ExperimentReport& r) {
  using harness_detail::metric_text;
  std::string s = "# config_hash=" + r.config_hash + "\n";
  s += "# distortion-perception plane (x: rmse, y: frechet)\n";
  std::vector<std::string> order;
  for (const MetricCell& c : r.cells) {
    if (std::find(order.begin(), order.end(), c.method) == order.end()) {
      order.push_back(c.method);
    }
  }
  for (const std::string& m : order) {
    s += "\n# method: " + m + "\n# steps rmse frechet\n";
    for (const MetricCell& c : r.cells) {
      if (c.method != m) continue;
      s += std::to_string(c.steps) + ' ' + metric_text(c.distortion.rmse) + ' ' +
           metric_text(c.frechet) + '\n';
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation: restore the held-out split per (method, steps) and measure.
// ---------------------------------------------------------------------------

struct RunOptions {
  bool strict = false;
  bool force = false;
  std::ostream* log = nullptr;
};

inline ExperimentReport evaluate_models(const ExperimentConfig& cfg,
                                        const PreparedData& data,
                                        const TrainedModels& models,
                                        const RngKey& key,
                                        const RunOptions& opts = {}) {
  using harness_detail::log_line;
  using harness_detail::rows_to_matrix;
  const std::size_t n0 = data.n_train;
  const std::size_t n = data.n();

  const std::vector<Tensor> xstar = harness_detail::stage(
      "predict", [&] { return predict_rows(models.fstar, data.y); });
  const std::vector<Tensor> x_test(data.x.begin() + n0, data.x.end());
  const std::vector<Tensor> xstar_test(xstar.begin() + n0, xstar.end());
  const Tensor x_test_matrix = rows_to_matrix(data.x, n0, n);
  const Tensor xstar_test_matrix = rows_to_matrix(xstar, n0, n);

  ExperimentReport report;
  report.config_hash = cfg.hash();
  report.seed = cfg.seed;
  report.strict = opts.strict;
  report.timestamp = opts.strict ? "strict" : harness_detail::iso_utc_now();
  report.task = to_string(cfg.task);
  report.dataset = to_string(cfg.dataset);
  report.n_train = data.n_train;
  report.n_test = data.n_test();
  report.fstar_mse = metrics::mse_rmse_psnr(xstar_test, x_test).mse;
  report.fstar_frechet =
      metrics::frechet_from_samples(xstar_test_matrix, x_test_matrix);
  log_line(opts.log, "posterior-mean predictor: test mse " +
                         harness_detail::fmt_double(report.fstar_mse));

  auto measure = [&](const std::string& method, int steps,
                     const std::vector<Tensor>& recon) {
    MetricCell cell;
    cell.method = method;
    cell.steps = steps;
    cell.distortion = metrics::mse_rmse_psnr(recon, x_test);
    cell.distortion.ind_rmse = metrics::indrmse(recon, xstar_test);
    cell.frechet = metrics::frechet_from_samples(
        rows_to_matrix(recon, 0, recon.size()), x_test_matrix);
    report.cells.push_back(std::move(cell));
  };

  for (const std::string& name : cfg.methods) {
    if (name == "dot") {
      harness_detail::stage("dot", [&] {
        const auto& shape = data.item_shape;
        const std::size_t h = shape[0];
        const std::size_t w = shape.size() > 1 ? shape[1] : 1;
        const std::size_t c = shape.size() > 2 ? shape[2] : 1;
        const dot::DataProjection projection = dot::make_projection(h, w, c);
        std::vector<Tensor> xstar_train(xstar.begin(), xstar.begin() + n0);
        std::vector<Tensor> x_train(data.x.begin(), data.x.begin() + n0);
        const dot::DotModel model =
            dot::fit_dot(xstar_train, x_train, projection, cfg.dot_fit_count);
        const dot::Predictor fstar = flows::predictor_from_mlp(models.fstar);
        std::vector<Tensor> recon;
        recon.reserve(data.n_test());
        for (std::size_t i = n0; i < n; ++i) {
          recon.push_back(dot::dot_restore(fstar, model, data.y[i]));
        }
        measure(name, 0, recon);
      });
      log_line(opts.log, "evaluated dot (direct transport of the predictor)");
      continue;
    }
    const flows::FlowMethod method = flows::parse_flow_method(name);
    const auto it = models.flow_fields.find(name);
    if (it == models.flow_fields.end()) {
      throw ValueError("evaluate_models", "no trained field for method " + name);
    }
    // Start-noise draws are keyed per method but not per step count, so the
    // step sweep is paired: every k integrates the same start points and the
    // sweep isolates the integrator.
    for (int k : cfg.steps) {
      harness_detail::stage("restore[" + name + ",k=" + std::to_string(k) + "]", [&] {
        std::vector<Tensor> recon =
            restore_flow(cfg, data, it->second, xstar, method, k,
                         key.child("restore").child(name));
        measure(name, k, recon);
      });
    }
    log_line(opts.log, "evaluated method " + name + " at " +
                           std::to_string(cfg.steps.size()) + " step counts");
  }

  report.require_complete(cfg);
  return report;
}

// ---------------------------------------------------------------------------
// Output files.
// ---------------------------------------------------------------------------

namespace harness_detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_report", "cannot open " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write_report", "write failed for " + path.string());
}

}  // namespace harness_detail

// Guards an output directory with the config hash: a rerun under a different
// config refuses to overwrite unless forced.
inline void claim_out_dir(const std::filesystem::path& out_dir,
                          const std::string& hash, bool force) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path guard = out_dir / "config_hash.json";
  if (std::filesystem::exists(guard)) {
    std::string existing = "<unreadable>";
    try {
      std::ifstream in(guard);
      const nlohmann::json j = nlohmann::json::parse(in);
      existing = j.at("config_hash").get<std::string>();
    } catch (const std::exception&) {
      // fall through: unreadable guards count as mismatches
    }
    if (existing != hash && !force) {
      throw ConfigError("claim_out_dir",
                        out_dir.string() + " holds results for config " +
                            existing + ", not " + hash +
                            "; pass force to overwrite");
    }
  }
  nlohmann::ordered_json j;
  j["config_hash"] = hash;
  harness_detail::write_text_file(guard, j.dump(2) + "\n");
}

inline void write_report_files(const ExperimentConfig& cfg,
                               const ExperimentReport& report, bool force) {
  const std::filesystem::path out_dir = cfg.out_dir;
  claim_out_dir(out_dir, report.config_hash, force);
  harness_detail::write_text_file(out_dir / "report.json",
                                  report_json(report).dump(2) + "\n");
  harness_detail::write_text_file(out_dir / "report.csv", report_csv(report));
  harness_detail::write_text_file(out_dir / "plane.dat", report_plane(report));
}

// ---------------------------------------------------------------------------
// Full run: prepare -> train -> evaluate -> write.
// ---------------------------------------------------------------------------

inline ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                       const RunOptions& opts = {}) {
  using harness_detail::log_line;
  cfg.validate();
  const RngKey root{cfg.seed, 0};

  // Claim the output directory before any training so a mismatched claim
  // refuses cheaply instead of after minutes of work.
  harness_detail::stage("claim_out_dir",
                        [&] { claim_out_dir(cfg.out_dir, cfg.hash(), opts.force); });

  const PreparedData data = harness_detail::stage(
      "prepare_data", [&] { return prepare_data(cfg, root); });
  log_line(opts.log, "prepared " + std::to_string(data.n()) + " samples (" +
                         std::to_string(data.n_train) + " train, " +
                         std::to_string(data.n_test()) + " test)");
  if (cfg.task == TaskKind::pipeline) {
    log_line(opts.log, "pipeline downsample draws clamped to 1: " +
                           std::to_string(data.clamped_factors) + " of " +
                           std::to_string(data.n()));
  }

  const TrainedModels models = train_models(cfg, data, root, opts.log);
  ExperimentReport report = evaluate_models(cfg, data, models, root, opts);
  harness_detail::stage("write_report",
                        [&] { write_report_files(cfg, report, opts.force); });
  log_line(opts.log, "wrote report files to " + cfg.out_dir);
  return report;
}

}  // namespace pmrf::harness
