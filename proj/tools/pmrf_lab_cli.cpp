// pmrf-lab: command-line driver for the restoration laboratory.
//
// Subcommands mirror the stages of an experiment so they can run separately
// (train-mmse -> train-flow -> restore / evaluate) or in one shot (run,
// sweep-k).  All stages of one config share a single seed-derived key tree,
// so staged runs and single-shot runs produce identical numbers.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

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

namespace fs = std::filesystem;
using pmrf::RandomStream;
using pmrf::RngKey;
using pmrf::Tensor;
namespace harness = pmrf::harness;
namespace flows = pmrf::flows;
namespace neural = pmrf::neural;
namespace oracle = pmrf::oracle;
namespace dotns = pmrf::dot;
namespace metrics = pmrf::metrics;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_override;
  bool strict = false;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out_override, "override the output directory");
  cmd->add_flag("--strict-determinism", args.strict,
                "replace timestamps so reruns are byte-identical");
  cmd->add_flag("--force", args.force,
                "overwrite an output directory claimed by another config");
}

harness::ExperimentConfig load_config(const CommonArgs& args) {
  harness::ExperimentConfig cfg =
      harness::ExperimentConfig::from_file(args.config_path);
  if (args.seed.has_value()) cfg.seed = *args.seed;
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  cfg.validate();
  return cfg;
}

harness::RunOptions run_options(const CommonArgs& args, std::ostream* log) {
  harness::RunOptions opts;
  opts.strict = args.strict;
  opts.force = args.force;
  opts.log = log;
  return opts;
}

fs::path fstar_path(const harness::ExperimentConfig& cfg) {
  return fs::path(cfg.out_dir) / "fstar.ckpt";
}

fs::path flow_path(const harness::ExperimentConfig& cfg,
                   const std::string& method) {
  return fs::path(cfg.out_dir) / ("flow_" + method + ".ckpt");
}

flows::PairedDataset train_split(const harness::PreparedData& data) {
  flows::PairedDataset train;
  train.x.assign(data.x.begin(), data.x.begin() + data.n_train);
  train.y.assign(data.y.begin(), data.y.begin() + data.n_train);
  return train;
}

neural::MlpParams load_fstar_or_explain(const harness::ExperimentConfig& cfg) {
  const fs::path path = fstar_path(cfg);
  if (!fs::exists(path)) {
    throw pmrf::IoError("load_fstar",
                        "missing " + path.string() + "; run train-mmse first");
  }
  return neural::load_checkpoint(path);
}

// Writes restored rows next to the reports: images as an index file, low
// dimensional rows as plain CSV.
std::string write_restored(const harness::ExperimentConfig& cfg,
                           const harness::PreparedData& data,
                           const std::string& stem,
                           const std::vector<Tensor>& rows) {
  const fs::path dir(cfg.out_dir);
  if (data.item_shape.size() >= 2) {
    std::vector<Tensor> items;
    items.reserve(rows.size());
    for (const Tensor& r : rows) items.push_back(r.reshaped(data.item_shape));
    const fs::path path = dir / (stem + ".idx");
    harness::save_idx(path, items);
    return path.string();
  }
  const fs::path path = dir / (stem + ".csv");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw pmrf::IoError("write_restored", "cannot open " + path.string());
  for (const Tensor& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out << ',';
      out << harness::harness_detail::fmt_double(r[j]);
    }
    out << '\n';
  }
  if (!out) throw pmrf::IoError("write_restored", "write failed: " + path.string());
  return path.string();
}

// ---------------------------------------------------------------------------
// oracle-check: closed-form self-test, no config required.
// ---------------------------------------------------------------------------

int cmd_oracle_check() {
  int failures = 0;
  auto line = [&](const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    if (!ok) ++failures;
  };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return std::string(buf);
  };

  {
    double worst_pm = 0.0, worst_y = 0.0;
    for (double sigma : {0.3, 1.0, 2.0}) {
      for (int i = -40; i <= 40; ++i) {
        const double y = 0.1 * i;
        const double target = oracle::x0_estimate_1d(y, sigma);
        worst_pm = std::max(
            worst_pm, std::abs(oracle::pmrf_ode_solution_1d(
                                   oracle::posterior_mean_1d(y, sigma), 1.0,
                                   sigma) -
                               target));
        worst_y = std::max(
            worst_y,
            std::abs(oracle::flowy_ode_solution_1d(y, 1.0, sigma) - target));
      }
    }
    line("flow endpoints match the scaled estimate",
         worst_pm <= 1e-12 && worst_y <= 1e-12,
         "max dev " + fmt(std::max(worst_pm, worst_y)));
  }

  {
    const oracle::AnalyticMses forms = oracle::analytic_mses(1.0);
    const RngKey key{417, 0};
    const std::size_t n = 200000;
    const double mmse = oracle::monte_carlo_mse(
        [](double y, RandomStream&) {
          return oracle::posterior_mean_1d(y, 1.0);
        },
        1.0, n, key.child("pm"));
    const double x0 = oracle::monte_carlo_mse(
        [](double y, RandomStream&) { return oracle::x0_estimate_1d(y, 1.0); },
        1.0, n, key.child("x0"));
    const double sampler = oracle::monte_carlo_mse(
        oracle::posterior_sampler_1d(1.0), 1.0, n, key.child("s"));
    const bool ok = std::abs(mmse - forms.mmse) < 0.02 &&
                    std::abs(x0 - forms.x0) < 0.02 &&
                    std::abs(sampler - forms.posterior_sampler) < 0.03 &&
                    mmse < x0 && x0 < sampler;
    line("estimator mse sits at the closed forms", ok,
         "mmse " + fmt(mmse) + ", x0 " + fmt(x0) + ", sampler " + fmt(sampler));
  }

  {
    const RngKey key{991, 0};
    neural::MlpParams p =
        neural::mlp_init({2, 5, 2}, /*with_time=*/true, 1, key.child("init"));
    neural::TrainingBatch tb;
    tb.inputs = pmrf::sample_standard_normal(key.child("x"), {3, 2});
    tb.targets = pmrf::sample_standard_normal(key.child("t"), {3, 2});
    tb.cond = pmrf::sample_standard_normal(key.child("c"), {3, 1});
    tb.ts = {0.1, 0.5, 0.9};
    const neural::LossGrad lg = neural::loss_and_grad(p, tb);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (std::size_t j = 0; j < p.layers[l].w.size(); ++j) {
        const double saved = p.layers[l].w[j];
        p.layers[l].w[j] = saved + h;
        const double up = neural::loss_and_grad(p, tb).loss;
        p.layers[l].w[j] = saved - h;
        const double down = neural::loss_and_grad(p, tb).loss;
        p.layers[l].w[j] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double g = lg.grads.layers[l].w[j];
        worst = std::max(worst, std::abs(fd - g) /
                                    std::max(1e-6, std::abs(fd) + std::abs(g)));
      }
    }
    line("backprop matches finite differences", worst < 1e-4,
         "max rel err " + fmt(worst));
  }

  {
    dotns::GaussianStats s;
    s.mean = Tensor({2});
    s.mean[0] = 0.4;
    s.mean[1] = -1.2;
    s.cov = Tensor({2, 2});
    s.cov.at(0, 0) = 1.3;
    s.cov.at(0, 1) = s.cov.at(1, 0) = 0.2;
    s.cov.at(1, 1) = 0.7;
    const double ident = metrics::frechet_gaussian(s, s);
    dotns::GaussianStats shifted = s;
    shifted.mean[0] += 2.0;
    const double shift = metrics::frechet_gaussian(s, shifted);
    const bool ok = ident <= 1e-10 && std::abs(shift - 2.0) <= 1e-8;
    line("frechet distance closed forms hold", ok,
         "identity " + fmt(ident) + ", mean shift " + fmt(shift));
  }

  {
    dotns::GaussianStats src, tgt;
    src.mean = Tensor({1});
    src.cov = Tensor({1, 1});
    src.cov.at(0, 0) = 0.5;
    tgt.mean = Tensor({1});
    tgt.cov = Tensor({1, 1});
    tgt.cov.at(0, 0) = 1.0;
    dotns::DotModel model;
    model.map = dotns::gaussian_ot_map(src, tgt);
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
      worst = std::max(worst, std::abs(dotns::dot_restore(pm, model, y)[0] -
                                       oracle::x0_estimate_1d(y[0], 1.0)));
    }
    line("direct transport reproduces the scaled estimate", worst <= 1e-6,
         "max dev " + fmt(worst));
  }

  std::printf(failures == 0 ? "all oracle checks passed\n"
                            : "%d oracle check(s) failed\n",
              failures);
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Staged subcommands.  Key paths match run_experiment exactly.
// ---------------------------------------------------------------------------

int cmd_train_mmse(const CommonArgs& args) {
  const harness::ExperimentConfig cfg = load_config(args);
  const RngKey root{cfg.seed, 0};
  const harness::PreparedData data = harness::prepare_data(cfg, root);
  harness::claim_out_dir(cfg.out_dir, cfg.hash(), args.force);

  const neural::MlpParams fstar =
      flows::train_mmse(train_split(data), cfg.train, root.child("mmse"));
  neural::save_checkpoint(fstar_path(cfg), fstar);
  std::printf("trained posterior-mean predictor on %zu rows -> %s\n",
              data.n_train, fstar_path(cfg).string().c_str());
  return 0;
}

int cmd_train_flow(const CommonArgs& args) {
  const harness::ExperimentConfig cfg = load_config(args);
  const RngKey root{cfg.seed, 0};
  const harness::PreparedData data = harness::prepare_data(cfg, root);
  harness::claim_out_dir(cfg.out_dir, cfg.hash(), args.force);
  const flows::PairedDataset train = train_split(data);

  std::vector<Tensor> xstar_train;
  const bool needs_xstar = std::any_of(
      cfg.methods.begin(), cfg.methods.end(),
      [](const std::string& m) { return m == "pmrf" || m == "cond_on_xstar"; });
  if (needs_xstar) {
    xstar_train = harness::predict_rows(load_fstar_or_explain(cfg), train.y);
  }

  std::size_t trained = 0;
  for (const std::string& name : cfg.methods) {
    if (name == "dot") {
      std::printf("skipping dot (fitted in closed form at evaluation)\n");
      continue;
    }
    const flows::FlowMethod method = flows::parse_flow_method(name);
    flows::PairedDataset flow_train = train;
    if (method == flows::FlowMethod::flow_from_y) {
      flow_train.y.assign(data.ylift.begin(),
                          data.ylift.begin() + data.n_train);
    }
    const neural::MlpParams field =
        flows::train_flow(flow_train, xstar_train, method, cfg.sigma_s,
                          cfg.train, root.child("flow").child(name));
    neural::save_checkpoint(flow_path(cfg, name), field);
    std::printf("trained flow field %s -> %s\n", name.c_str(),
                flow_path(cfg, name).string().c_str());
    ++trained;
  }
  if (trained == 0) std::printf("no flow methods configured\n");
  return 0;
}

harness::TrainedModels load_models(const harness::ExperimentConfig& cfg) {
  harness::TrainedModels models;
  models.fstar = load_fstar_or_explain(cfg);
  for (const std::string& name : cfg.methods) {
    if (name == "dot") continue;
    const fs::path path = flow_path(cfg, name);
    if (!fs::exists(path)) {
      throw pmrf::IoError("load_models", "missing " + path.string() +
                                             "; run train-flow first");
    }
    models.flow_fields[name] = neural::load_checkpoint(path);
  }
  return models;
}

int cmd_restore(const CommonArgs& args) {
  const harness::ExperimentConfig cfg = load_config(args);
  const RngKey root{cfg.seed, 0};
  const harness::PreparedData data = harness::prepare_data(cfg, root);
  harness::claim_out_dir(cfg.out_dir, cfg.hash(), args.force);
  const harness::TrainedModels models = load_models(cfg);

  const std::vector<Tensor> xstar =
      harness::predict_rows(models.fstar, data.y);
  const RngKey restore_key = root.child("restore");
  nlohmann::ordered_json meta;
  meta["config_hash"] = cfg.hash();
  meta["n_test"] = data.n_test();
  nlohmann::ordered_json outputs = nlohmann::ordered_json::array();

  for (const std::string& name : cfg.methods) {
    if (name == "dot") {
      const auto& shape = data.item_shape;
      const dotns::DataProjection projection = dotns::make_projection(
          shape[0], shape.size() > 1 ? shape[1] : 1,
          shape.size() > 2 ? shape[2] : 1);
      std::vector<Tensor> xstar_train(xstar.begin(),
                                      xstar.begin() + data.n_train);
      std::vector<Tensor> x_train(data.x.begin(),
                                  data.x.begin() + data.n_train);
      const dotns::DotModel model =
          dotns::fit_dot(xstar_train, x_train, projection, cfg.dot_fit_count);
      const dotns::Predictor fstar = flows::predictor_from_mlp(models.fstar);
      std::vector<Tensor> recon;
      recon.reserve(data.n_test());
      for (std::size_t i = data.n_train; i < data.n(); ++i) {
        recon.push_back(dotns::dot_restore(fstar, model, data.y[i]));
      }
      const std::string path = write_restored(cfg, data, "restored_dot", recon);
      outputs.push_back({{"method", name}, {"steps", 0}, {"path", path}});
      std::printf("restored %zu rows with dot -> %s\n", recon.size(),
                  path.c_str());
      continue;
    }
    const flows::FlowMethod method = flows::parse_flow_method(name);
    for (int k : cfg.steps) {
      const std::vector<Tensor> recon = harness::restore_flow(
          cfg, data, models.flow_fields.at(name), xstar, method, k,
          restore_key.child(name));
      const std::string stem = "restored_" + name + "_k" + std::to_string(k);
      const std::string path = write_restored(cfg, data, stem, recon);
      outputs.push_back({{"method", name}, {"steps", k}, {"path", path}});
      std::printf("restored %zu rows with %s at k=%d -> %s\n", recon.size(),
                  name.c_str(), k, path.c_str());
    }
  }
  meta["outputs"] = outputs;
  std::ofstream out(fs::path(cfg.out_dir) / "restored_meta.json",
                    std::ios::trunc);
  out << meta.dump(2) << "\n";
  return 0;
}

void print_summary(const harness::ExperimentReport& report) {
  std::printf("config %s  task %s  dataset %s  train %zu  test %zu\n",
              report.config_hash.c_str(), report.task.c_str(),
              report.dataset.c_str(), report.n_train, report.n_test);
  std::printf("posterior-mean predictor: mse %.6g, frechet %.6g\n",
              report.fstar_mse, report.fstar_frechet);
  std::printf("%-14s %6s %12s %12s %12s\n", "method", "steps", "rmse",
              "ind_rmse", "frechet");
  for (const harness::MetricCell& cell : report.cells) {
    std::printf("%-14s %6d %12.6g %12.6g %12.6g\n", cell.method.c_str(),
                cell.steps, cell.distortion.rmse,
                cell.distortion.ind_rmse.value_or(0.0), cell.frechet);
  }
}

int cmd_evaluate(const CommonArgs& args) {
  const harness::ExperimentConfig cfg = load_config(args);
  const RngKey root{cfg.seed, 0};
  const harness::PreparedData data = harness::prepare_data(cfg, root);
  const harness::TrainedModels models = load_models(cfg);
  const harness::RunOptions opts = run_options(args, nullptr);
  const harness::ExperimentReport report =
      harness::evaluate_models(cfg, data, models, root, opts);
  harness::write_report_files(cfg, report, args.force);
  print_summary(report);
  std::printf("reports written to %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_run(const CommonArgs& args, bool print_plane) {
  const harness::ExperimentConfig cfg = load_config(args);
  std::ostream* log = print_plane ? nullptr : &std::cout;
  const harness::ExperimentReport report =
      harness::run_experiment(cfg, run_options(args, log));
  if (print_plane) {
    std::fputs(harness::report_plane(report).c_str(), stdout);
  } else {
    print_summary(report);
  }
  std::printf("reports written to %s\n", cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pmrf-lab: posterior-mean rectified flow laboratory"};
  app.require_subcommand(1);

  CLI::App* oracle_cmd =
      app.add_subcommand("oracle-check", "run the closed-form self-test");

  CommonArgs train_mmse_args, train_flow_args, restore_args, evaluate_args,
      run_args, sweep_args;
  CLI::App* train_mmse_cmd = app.add_subcommand(
      "train-mmse", "train the stage-one posterior-mean predictor");
  add_common(train_mmse_cmd, train_mmse_args);
  CLI::App* train_flow_cmd = app.add_subcommand(
      "train-flow", "train the stage-two flow fields (needs train-mmse)");
  add_common(train_flow_cmd, train_flow_args);
  CLI::App* restore_cmd = app.add_subcommand(
      "restore", "restore the held-out split from saved checkpoints");
  add_common(restore_cmd, restore_args);
  CLI::App* evaluate_cmd = app.add_subcommand(
      "evaluate", "score saved checkpoints and write the reports");
  add_common(evaluate_cmd, evaluate_args);
  CLI::App* run_cmd = app.add_subcommand(
      "run", "full experiment: prepare, train, evaluate, report");
  add_common(run_cmd, run_args);
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep-k", "full experiment, printing the step-count sweep");
  add_common(sweep_cmd, sweep_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (oracle_cmd->parsed()) return cmd_oracle_check();
    if (train_mmse_cmd->parsed()) return cmd_train_mmse(train_mmse_args);
    if (train_flow_cmd->parsed()) return cmd_train_flow(train_flow_args);
    if (restore_cmd->parsed()) return cmd_restore(restore_args);
    if (evaluate_cmd->parsed()) return cmd_evaluate(evaluate_args);
    if (run_cmd->parsed()) return cmd_run(run_args, false);
    if (sweep_cmd->parsed()) return cmd_run(sweep_args, true);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
