#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "celltrack/detection.hpp"
#include "celltrack/errors.hpp"
#include "celltrack/synth.hpp"
#include "celltrack/tracker.hpp"

namespace celltrack {

// Whole-pipeline configuration, serialized as line-oriented "key = value"
// text. Every key has a default; unknown keys are rejected; module
// preconditions are re-validated on load.
struct PipelineConfig {
  int threads = 0;  // 0 = hardware concurrency

  DetectionParams detection;

  TrackerParams tracker;

  double seg_theta_interior = 0.5;
  double seg_theta_boundary = 0.5;

  double metrics_r_match = 0.0;   // <= 0: n_size / 2
  int metrics_mitosis_dt = 2;
  double metrics_mitosis_r = 0.0; // <= 0: n_size
  int metrics_n_mitosis = 2;

  SynthConfig synth;

  void validate() const {
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (detection.theta_cell < 0.0 || detection.theta_cell > 1.0)
      throw ConfigError("detection.theta_cell must be in [0, 1]");
    if (detection.min_area < 1) throw ConfigError("detection.min_area must be >= 1");
    try {
      tracker.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!prob(seg_theta_interior) || !prob(seg_theta_boundary))
      throw ConfigError("segmentation thresholds must be in [0, 1]");
    if (metrics_mitosis_dt < 0) throw ConfigError("metrics.mitosis_dt must be >= 0");
    if (metrics_n_mitosis < 0) throw ConfigError("metrics.n_mitosis must be >= 0");
    synth.validate();
  }
};

namespace config_detail {

struct Field {
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

inline long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long out = 0;
  try {
    out = std::stol(v, &pos);
  } catch (...) {
    throw ConfigError(key + ": expected integer, got \"" + v + "\"");
  }
  if (pos != v.size()) throw ConfigError(key + ": expected integer, got \"" + v + "\"");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (...) {
    throw ConfigError(key + ": expected number, got \"" + v + "\"");
  }
  if (pos != v.size()) throw ConfigError(key + ": expected number, got \"" + v + "\"");
  return out;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> m;
    auto real = [&m](const std::string& key, auto member) {
      m[key] = {[member](const PipelineConfig& c) { return format_real(std::invoke(member, c)); },
                [member, key](PipelineConfig& c, const std::string& v) {
                  std::invoke(member, c) = parse_real(key, v);
                }};
    };
    auto integer = [&m](const std::string& key, auto member) {
      m[key] = {[member](const PipelineConfig& c) { return std::to_string(std::invoke(member, c)); },
                [member, key](PipelineConfig& c, const std::string& v) {
                  std::invoke(member, c) = static_cast<std::remove_reference_t<decltype(std::invoke(
                      member, c))>>(parse_int(key, v));
                }};
    };

    integer("threads", &PipelineConfig::threads);

    real("detection.theta_cell", [](auto& c) -> auto& { return c.detection.theta_cell; });
    integer("detection.min_area", [](auto& c) -> auto& { return c.detection.min_area; });
    m["detection.connectivity"] = {
        [](const PipelineConfig& c) {
          return std::to_string(static_cast<int>(c.detection.connectivity));
        },
        [](PipelineConfig& c, const std::string& v) {
          const long n = parse_int("detection.connectivity", v);
          if (n != 4 && n != 8) throw ConfigError("detection.connectivity must be 4 or 8");
          c.detection.connectivity = n == 4 ? Connectivity::Four : Connectivity::Eight;
        }};

    real("tracker.alpha", [](auto& c) -> auto& { return c.tracker.alpha; });
    real("tracker.n_size", [](auto& c) -> auto& { return c.tracker.n_size; });
    integer("tracker.w_status", [](auto& c) -> auto& { return c.tracker.w_status; });
    integer("tracker.theta_mit", [](auto& c) -> auto& { return c.tracker.theta_mit; });
    integer("tracker.l_min", [](auto& c) -> auto& { return c.tracker.l_min; });
    real("tracker.r_daughter", [](auto& c) -> auto& { return c.tracker.r_daughter; });

    real("seg.theta_interior", [](auto& c) -> auto& { return c.seg_theta_interior; });
    real("seg.theta_boundary", [](auto& c) -> auto& { return c.seg_theta_boundary; });

    real("metrics.r_match", [](auto& c) -> auto& { return c.metrics_r_match; });
    integer("metrics.mitosis_dt", [](auto& c) -> auto& { return c.metrics_mitosis_dt; });
    real("metrics.mitosis_r", [](auto& c) -> auto& { return c.metrics_mitosis_r; });
    integer("metrics.n_mitosis", [](auto& c) -> auto& { return c.metrics_n_mitosis; });

    integer("synth.width", [](auto& c) -> auto& { return c.synth.width; });
    integer("synth.height", [](auto& c) -> auto& { return c.synth.height; });
    integer("synth.frames", [](auto& c) -> auto& { return c.synth.frames; });
    integer("synth.initial_cells", [](auto& c) -> auto& { return c.synth.initial_cells; });
    real("synth.cell_radius_mean", [](auto& c) -> auto& { return c.synth.cell_radius_mean; });
    real("synth.cell_radius_jitter", [](auto& c) -> auto& { return c.synth.cell_radius_jitter; });
    real("synth.drift_sigma", [](auto& c) -> auto& { return c.synth.drift_sigma; });
    real("synth.division_rate", [](auto& c) -> auto& { return c.synth.division_rate; });
    integer("synth.mitotic_lead", [](auto& c) -> auto& { return c.synth.mitotic_lead; });
    integer("synth.impurity_count", [](auto& c) -> auto& { return c.synth.impurity_count; });
    real("synth.dropout_prob", [](auto& c) -> auto& { return c.synth.corruption.dropout_prob; });
    real("synth.centroid_jitter_sigma",
         [](auto& c) -> auto& { return c.synth.corruption.centroid_jitter_sigma; });
    real("synth.false_positive_rate",
         [](auto& c) -> auto& { return c.synth.corruption.false_positive_rate; });
    m["synth.seed"] = {
        [](const PipelineConfig& c) { return std::to_string(c.synth.seed); },
        [](PipelineConfig& c, const std::string& v) {
          try {
            c.synth.seed = std::stoull(v);
          } catch (...) {
            throw ConfigError("synth.seed: expected unsigned integer, got \"" + v + "\"");
          }
        }};
    return m;
  }();
  return table;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace config_detail

inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = config_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = config_detail::trim(t.substr(0, eq));
    const std::string value = config_detail::trim(t.substr(eq + 1));
    const auto& table = config_detail::fields();
    const auto it = table.find(key);
    if (it == table.end())
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key \"" + key + "\"");
    if (seen.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key \"" + key +
                        "\" (first on line " + std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

inline std::string serialize_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : config_detail::fields())
    out << key << " = " << field.get(cfg) << '\n';
  return out.str();
}

}  // namespace celltrack
