#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pmrf/degrade.hpp"
#include "pmrf/error.hpp"
#include "pmrf/flows.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::harness {

// Experiment configuration: a flat UTF-8 key=value format with [section]
// headers, '#'/';' comments, and comma-separated lists.  Parsing is strict -
// unknown sections or keys are errors - and every config canonicalizes to a
// fixed text form whose FNV-1a hash identifies the experiment.

namespace harness_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace harness_detail

// Raw parse result: section -> key -> value, all trimmed verbatim strings.
struct ConfigMap {
  std::map<std::string, std::map<std::string, std::string>> sections;

  const std::string* find(const std::string& section,
                          const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::string section;
  bool in_section = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line[0] == '\xEF' &&
        line[1] == '\xBB' && line[2] == '\xBF') {
      line.erase(0, 3);  // UTF-8 byte-order mark
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = harness_detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = "line " + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError("config", where + ": malformed section header '" + t + "'");
      }
      section = harness_detail::trim(std::string_view(t).substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("config", where + ": empty section name");
      }
      in_section = true;
      map.sections[section];  // a section may legitimately be empty
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config", where + ": expected 'key = value', got '" + t + "'");
    }
    if (!in_section) {
      throw ConfigError("config", where + ": key outside any [section]");
    }
    const std::string key = harness_detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = harness_detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config", where + ": empty key");
    }
    auto [it, fresh] = map.sections[section].emplace(key, value);
    (void)it;
    if (!fresh) {
      throw ConfigError("config", where + ": duplicate key '" + section + "." + key + "'");
    }
  }
  return map;
}

inline ConfigMap parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

// ---------------------------------------------------------------------------
// Typed experiment configuration.
// ---------------------------------------------------------------------------

enum class TaskKind {
  denoise,
  super_resolution,
  inpaint,
  colorize,
  pipeline,
  gauss1d
};

inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::denoise: return "denoise";
    case TaskKind::super_resolution: return "super_resolution";
    case TaskKind::inpaint: return "inpaint";
    case TaskKind::colorize: return "colorize";
    case TaskKind::pipeline: return "pipeline";
    case TaskKind::gauss1d: return "gauss1d";
  }
  throw ValueError("to_string(TaskKind)", "unknown task value");
}

inline TaskKind parse_task(const std::string& s) {
  if (s == "denoise") return TaskKind::denoise;
  if (s == "super_resolution") return TaskKind::super_resolution;
  if (s == "inpaint") return TaskKind::inpaint;
  if (s == "colorize") return TaskKind::colorize;
  if (s == "pipeline") return TaskKind::pipeline;
  if (s == "gauss1d") return TaskKind::gauss1d;
  throw ConfigError("config", "unknown task '" + s + "'");
}

enum class DatasetSource { synthetic_sprites, two_moons_2d, gauss1d, idx_file };

inline std::string to_string(DatasetSource d) {
  switch (d) {
    case DatasetSource::synthetic_sprites: return "synthetic_sprites";
    case DatasetSource::two_moons_2d: return "two_moons_2d";
    case DatasetSource::gauss1d: return "gauss1d";
    case DatasetSource::idx_file: return "idx_file";
  }
  throw ValueError("to_string(DatasetSource)", "unknown dataset value");
}

inline DatasetSource parse_dataset_source(const std::string& s) {
  if (s == "synthetic_sprites") return DatasetSource::synthetic_sprites;
  if (s == "two_moons_2d") return DatasetSource::two_moons_2d;
  if (s == "gauss1d") return DatasetSource::gauss1d;
  if (s == "idx_file") return DatasetSource::idx_file;
  throw ConfigError("config", "unknown dataset '" + s + "'");
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names = {
      "pmrf", "cond_on_y", "cond_on_xstar", "flow_from_y", "dot"};
  return names;
}

struct ExperimentConfig {
  // [experiment]
  TaskKind task = TaskKind::denoise;
  DatasetSource dataset = DatasetSource::synthetic_sprites;
  std::string idx_path;  // only read when dataset == idx_file
  std::size_t n_samples = 2000;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // [degradation] - task-specific knobs; all are serialized so one config
  // text always canonicalizes the same way regardless of task.
  double denoise_sigma = 0.35;
  std::size_t sr_factor = 2;
  double sr_noise = 0.05;
  double mask_fraction = 0.9;
  double mask_noise = 0.1;
  double colorize_noise = 0.25;
  double gauss1d_sigma = 1.0;
  degrade::PipelineSpec pipeline;

  // [flow]
  std::vector<std::string> methods = {"pmrf"};
  double sigma_s = 0.025;
  std::vector<int> steps = {3, 5, 10, 25, 50, 100};

  // [train] - one shared config for every method in the experiment, which is
  // what makes cross-method comparisons fair by construction.
  flows::TrainConfig train;

  // [dot]
  std::size_t dot_fit_count = 1000;

  void validate() const {
    if (task == TaskKind::gauss1d && dataset != DatasetSource::gauss1d) {
      throw ConfigError("config", "task gauss1d requires dataset gauss1d");
    }
    if (dataset == DatasetSource::gauss1d && task != TaskKind::gauss1d) {
      throw ConfigError("config", "dataset gauss1d requires task gauss1d");
    }
    if (dataset == DatasetSource::two_moons_2d && task != TaskKind::denoise) {
      throw ConfigError("config", "dataset two_moons_2d supports only denoise");
    }
    if (dataset == DatasetSource::idx_file && idx_path.empty()) {
      throw ConfigError("config", "dataset idx_file requires idx_path");
    }
    if (n_samples < 20) {
      throw ConfigError("config", "n_samples must be >= 20 (10% becomes the test split)");
    }
    if (!(denoise_sigma >= 0.0) || !(sr_noise >= 0.0) || !(mask_noise >= 0.0) ||
        !(colorize_noise >= 0.0) || !(gauss1d_sigma >= 0.0)) {
      throw ConfigError("config", "noise levels must be >= 0");
    }
    if (sr_factor < 1) throw ConfigError("config", "sr_factor must be >= 1");
    if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) {
      throw ConfigError("config", "mask_fraction must lie in [0, 1]");
    }
    pipeline.validate();
    if (methods.empty()) throw ConfigError("config", "need >= 1 method");
    for (const std::string& m : methods) {
      const auto& known = known_methods();
      if (std::find(known.begin(), known.end(), m) == known.end()) {
        throw ConfigError("config", "unknown method '" + m + "'");
      }
      if (std::count(methods.begin(), methods.end(), m) != 1) {
        throw ConfigError("config", "duplicate method '" + m + "'");
      }
    }
    if (!(sigma_s >= 0.0)) throw ConfigError("config", "sigma_s must be >= 0");
    if (steps.empty()) throw ConfigError("config", "need >= 1 steps value");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i] < 1) throw ConfigError("config", "steps values must be >= 1");
      if (i > 0 && steps[i] <= steps[i - 1]) {
        throw ConfigError("config", "steps must be strictly increasing");
      }
    }
    train.validate();
    const auto& o = train.optim;
    if (!(o.lr > 0.0)) throw ConfigError("config", "lr must be > 0");
    if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
      throw ConfigError("config", "betas must lie in [0, 1)");
    }
    if (!(o.eps > 0.0)) throw ConfigError("config", "eps must be > 0");
    if (!(o.weight_decay >= 0.0)) throw ConfigError("config", "weight_decay must be >= 0");
    if (!(train.ema_decay > 0.0 && train.ema_decay < 1.0)) {
      throw ConfigError("config", "ema_decay must lie in (0, 1)");
    }
    if (dot_fit_count < 2) throw ConfigError("config", "fit_count must be >= 2");
  }

  // Fixed-order, fully materialized text form; two configs that parse to the
  // same settings share this text and therefore the same hash.
  std::string canonical_text() const {
    using harness_detail::fmt_double;
    std::string s;
    auto line = [&](const std::string& k, const std::string& v) {
      s += k;
      s += " = ";
      s += v;
      s += '\n';
    };
    auto join_sizes = [](const std::vector<std::size_t>& v) {
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
      }
      return out;
    };
    s += "[experiment]\n";
    line("task", to_string(task));
    line("dataset", to_string(dataset));
    line("idx_path", idx_path);
    line("n_samples", std::to_string(n_samples));
    line("seed", std::to_string(seed));
    line("out_dir", out_dir);
    s += "[degradation]\n";
    line("denoise_sigma", fmt_double(denoise_sigma));
    line("sr_factor", std::to_string(sr_factor));
    line("sr_noise", fmt_double(sr_noise));
    line("mask_fraction", fmt_double(mask_fraction));
    line("mask_noise", fmt_double(mask_noise));
    line("colorize_noise", fmt_double(colorize_noise));
    line("gauss1d_sigma", fmt_double(gauss1d_sigma));
    line("blur_sigma_lo", fmt_double(pipeline.blur_sigma.lo));
    line("blur_sigma_hi", fmt_double(pipeline.blur_sigma.hi));
    line("down_factor_lo", fmt_double(pipeline.down_factor.lo));
    line("down_factor_hi", fmt_double(pipeline.down_factor.hi));
    line("noise_delta_lo", fmt_double(pipeline.noise_delta.lo));
    line("noise_delta_hi", fmt_double(pipeline.noise_delta.hi));
    line("blur_ksize", std::to_string(pipeline.blur_ksize));
    s += "[flow]\n";
    {
      std::string m;
      for (std::size_t i = 0; i < methods.size(); ++i) {
        if (i) m += ',';
        m += methods[i];
      }
      line("methods", m);
    }
    line("sigma_s", fmt_double(sigma_s));
    {
      std::string k;
      for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) k += ',';
        k += std::to_string(steps[i]);
      }
      line("steps", k);
    }
    s += "[train]\n";
    line("epochs", std::to_string(train.epochs));
    line("batch_size", std::to_string(train.batch_size));
    line("hidden", join_sizes(train.hidden));
    line("lr", fmt_double(train.optim.lr));
    line("beta1", fmt_double(train.optim.beta1));
    line("beta2", fmt_double(train.optim.beta2));
    line("eps", fmt_double(train.optim.eps));
    line("weight_decay", fmt_double(train.optim.weight_decay));
    line("ema_decay", fmt_double(train.ema_decay));
    s += "[dot]\n";
    line("fit_count", std::to_string(dot_fit_count));
    return s;
  }

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(
                      detail::fnv1a64(canonical_text())));
    return buf;
  }

  static ExperimentConfig from_map(const ConfigMap& map);
  static ExperimentConfig from_text(const std::string& text) {
    return from_map(parse_config_text(text));
  }
  static ExperimentConfig from_file(const std::filesystem::path& path) {
    return from_map(parse_config_file(path));
  }
};

namespace harness_detail {

// Tracks which (section, key) pairs were consumed so leftovers can be
// rejected as typos.
struct ConfigReader {
  const ConfigMap& map;
  std::map<std::string, std::map<std::string, bool>> used;

  explicit ConfigReader(const ConfigMap& m) : map(m) {}

  const std::string* take(const std::string& section, const std::string& key) {
    const std::string* v = map.find(section, key);
    if (v != nullptr) used[section][key] = true;
    return v;
  }

  void get_string(const std::string& sec, const std::string& key,
                  std::string& out) {
    if (const std::string* v = take(sec, key)) out = *v;
  }
  void get_double(const std::string& sec, const std::string& key, double& out) {
    if (const std::string* v = take(sec, key)) {
      try {
        std::size_t pos = 0;
        const double parsed = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("junk");
        out = parsed;
      } catch (const std::exception&) {
        throw ConfigError("config", "key '" + sec + "." + key +
                                        "': expected a number, got '" + *v + "'");
      }
    }
  }
  void get_u64(const std::string& sec, const std::string& key,
               std::uint64_t& out) {
    if (const std::string* v = take(sec, key)) {
      try {
        std::size_t pos = 0;
        const unsigned long long parsed = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("junk");
        out = parsed;
      } catch (const std::exception&) {
        throw ConfigError("config", "key '" + sec + "." + key +
                                        "': expected a nonnegative integer, got '" +
                                        *v + "'");
      }
    }
  }
  void get_size(const std::string& sec, const std::string& key,
                std::size_t& out) {
    std::uint64_t v = out;
    get_u64(sec, key, v);
    out = static_cast<std::size_t>(v);
  }
  void get_int(const std::string& sec, const std::string& key, int& out) {
    std::uint64_t v = static_cast<std::uint64_t>(out);
    get_u64(sec, key, v);
    out = static_cast<int>(v);
  }

  void finish() const {
    for (const auto& [sec, keys] : map.sections) {
      auto us = used.find(sec);
      for (const auto& [key, value] : keys) {
        (void)value;
        if (us == used.end() || us->second.find(key) == us->second.end()) {
          throw ConfigError("config", "unknown key '" + sec + "." + key + "'");
        }
      }
    }
  }
};

}  // namespace harness_detail

inline ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  harness_detail::ConfigReader r(map);
  ExperimentConfig cfg;

  if (const std::string* v = r.take("experiment", "task")) cfg.task = parse_task(*v);
  if (const std::string* v = r.take("experiment", "dataset")) {
    cfg.dataset = parse_dataset_source(*v);
  }
  r.get_string("experiment", "idx_path", cfg.idx_path);
  r.get_size("experiment", "n_samples", cfg.n_samples);
  const std::string* seed = r.take("experiment", "seed");
  if (seed == nullptr) {
    throw ConfigError("config", "experiment.seed is mandatory");
  }
  try {
    std::size_t pos = 0;
    cfg.seed = std::stoull(*seed, &pos);
    if (pos != seed->size()) throw std::invalid_argument("junk");
  } catch (const std::exception&) {
    throw ConfigError("config", "experiment.seed: expected a nonnegative "
                                "integer, got '" + *seed + "'");
  }
  r.get_string("experiment", "out_dir", cfg.out_dir);

  r.get_double("degradation", "denoise_sigma", cfg.denoise_sigma);
  r.get_size("degradation", "sr_factor", cfg.sr_factor);
  r.get_double("degradation", "sr_noise", cfg.sr_noise);
  r.get_double("degradation", "mask_fraction", cfg.mask_fraction);
  r.get_double("degradation", "mask_noise", cfg.mask_noise);
  r.get_double("degradation", "colorize_noise", cfg.colorize_noise);
  r.get_double("degradation", "gauss1d_sigma", cfg.gauss1d_sigma);
  r.get_double("degradation", "blur_sigma_lo", cfg.pipeline.blur_sigma.lo);
  r.get_double("degradation", "blur_sigma_hi", cfg.pipeline.blur_sigma.hi);
  r.get_double("degradation", "down_factor_lo", cfg.pipeline.down_factor.lo);
  r.get_double("degradation", "down_factor_hi", cfg.pipeline.down_factor.hi);
  r.get_double("degradation", "noise_delta_lo", cfg.pipeline.noise_delta.lo);
  r.get_double("degradation", "noise_delta_hi", cfg.pipeline.noise_delta.hi);
  r.get_int("degradation", "blur_ksize", cfg.pipeline.blur_ksize);

  if (const std::string* v = r.take("flow", "methods")) {
    cfg.methods = harness_detail::split_list(*v);
  }
  r.get_double("flow", "sigma_s", cfg.sigma_s);
  if (const std::string* v = r.take("flow", "steps")) {
    cfg.steps.clear();
    for (const std::string& item : harness_detail::split_list(*v)) {
      try {
        std::size_t pos = 0;
        const int k = std::stoi(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("junk");
        cfg.steps.push_back(k);
      } catch (const std::exception&) {
        throw ConfigError("config", "flow.steps: expected integers, got '" + item + "'");
      }
    }
  }

  r.get_size("train", "epochs", cfg.train.epochs);
  r.get_size("train", "batch_size", cfg.train.batch_size);
  if (const std::string* v = r.take("train", "hidden")) {
    cfg.train.hidden.clear();
    for (const std::string& item : harness_detail::split_list(*v)) {
      try {
        std::size_t pos = 0;
        const unsigned long long width = std::stoull(item, &pos);
        if (pos != item.size() || width == 0) throw std::invalid_argument("junk");
        cfg.train.hidden.push_back(static_cast<std::size_t>(width));
      } catch (const std::exception&) {
        throw ConfigError("config", "train.hidden: expected positive integers, got '" +
                                        item + "'");
      }
    }
  }
  r.get_double("train", "lr", cfg.train.optim.lr);
  r.get_double("train", "beta1", cfg.train.optim.beta1);
  r.get_double("train", "beta2", cfg.train.optim.beta2);
  r.get_double("train", "eps", cfg.train.optim.eps);
  r.get_double("train", "weight_decay", cfg.train.optim.weight_decay);
  r.get_double("train", "ema_decay", cfg.train.ema_decay);

  r.get_size("dot", "fit_count", cfg.dot_fit_count);

  r.finish();
  cfg.validate();
  return cfg;
}

}  // namespace pmrf::harness
