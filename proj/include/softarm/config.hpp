#pragma once

// Experiment configuration: an INI file with [controller], [plant],
// [trajectory], [monitor] and [experiment] sections. Every key has a default;
// unknown keys are rejected so typos do not silently fall back.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "softarm/common.hpp"
#include "softarm/controller.hpp"
#include "softarm/csv.hpp"
#include "softarm/plant.hpp"

namespace softarm {

struct ControllerConfig {
  std::vector<double> lambda{12, 12, 12, 12, 25, 25};
  double gamma = 15.0;
  double kd = 2.5;
  double k_ff = 35.0;
  double p_max = 300.0;
  double p_nom = 150.0;
  double control_rate = 500.0;
  double tau_filter = 0.75;
  double zeta_filter = 1.0;
  int centers = 10;
  std::uint64_t network_seed = 11;
  double width = 0.0;  // 0 derives the width from the center spread
  double q_range = M_PI / 2;
  double qd_range = 2.0;
  double qrd_range = 2.0;
  double qrdd_range = 5.0;
  bool antiwindup = true;
  double velocity_noise = 0.005;  // rad/s, standard deviation
};

struct PlantSection {
  PlantConfig model;
  double step = 2e-4;         // s, integrator substep
  double payload_mass = 4.5;  // kg, used by the weight-drop experiment
  int payload_link = kJoints - 1;
  double drop_time = 55.0;    // s
};

struct TrajectoryConfig {
  double hold = 10.0;
  double amplitude = 0.5;  // rad, commands drawn from [-amplitude, amplitude]
  int count = 12;
  std::uint64_t seed = 7;
  double ramp_dp_max = 200.0;  // kPa
  double ramp_period = 20.0;   // s
  int ramp_cycles = 2;
  double ramp_rate = 500.0;    // Hz
};

struct MonitorConfig {
  double percentile = 0.99;
  double min_span = 10.0;
  double transient_window = 3.0;
  double settle_limit = 5.0;
  double strict_band = 0.05;
  double sample_rate = 50.0;
  double audit_threshold = 0.95;
  double vdot_window = 0.1;
};

struct ExperimentSettings {
  int trials = 5;
  std::uint64_t seed = 1;
  std::uint64_t seed_stride = 1;  // 0 repeats the same seed in every trial
  std::string mode = "lockstep";  // or "realtime"
  int log_decimation = 1;
  double time_scale = 1.0;  // wall seconds per simulated second in realtime mode
  double sysid_duration = 10.0;
  double sysid_displacement = 0.1;
  int sysid_min_peaks = 5;
  int sysid_max_peaks = 0;
  std::string sysid_amplitude = "peak_to_trough";  // or "peak"
  double sysid_rate = 1000.0;
};

struct ExperimentConfig {
  ControllerConfig controller;
  PlantSection plant;
  TrajectoryConfig trajectory;
  MonitorConfig monitor;
  ExperimentSettings experiment;

  ControllerGains gains() const {
    ControllerGains g;
    const int n = static_cast<int>(controller.lambda.size());
    g.lambda = Eigen::Map<const VectorXd>(controller.lambda.data(), n);
    g.gamma = VectorXd::Constant(controller.centers + 1, controller.gamma);
    g.kd = VectorXd::Constant(n, controller.kd);
    g.k_ff = VectorXd::Constant(n, controller.k_ff);
    g.p_max = controller.p_max;
    g.p_nom = controller.p_nom;
    g.control_rate = controller.control_rate;
    g.tau_filter = controller.tau_filter;
    g.zeta_filter = controller.zeta_filter;
    return g;
  }

  void validate() const {
    require(static_cast<int>(controller.lambda.size()) == kDofs,
            "config: controller.lambda must list " + std::to_string(kDofs) + " values");
    require(controller.centers >= 1, "config: controller.centers must be >= 1");
    require(controller.centers >= 2 || controller.width > 0.0,
            "config: controller.width is required when centers < 2");
    require(controller.velocity_noise >= 0.0, "config: velocity_noise must be >= 0");
    gains().validate(plant.model.tau_p);
    require(plant.step > 0.0 && plant.step <= 1.0 / controller.control_rate,
            "config: plant.step must be in (0, control period]");
    require(plant.payload_mass >= 0.0, "config: payload_mass must be >= 0");
    require(plant.payload_link >= 0 && plant.payload_link < kJoints, "config: payload_link out of range");
    require(trajectory.hold > 0.0 && trajectory.count >= 1 && trajectory.amplitude >= 0.0,
            "config: bad trajectory");
    require(monitor.percentile > 0.0 && monitor.percentile <= 1.0, "config: percentile must be in (0, 1]");
    require(monitor.sample_rate > 0.0 && monitor.vdot_window > 0.0, "config: bad monitor rates");
    require(experiment.trials >= 1, "config: trials must be >= 1");
    require(experiment.mode == "lockstep" || experiment.mode == "realtime",
            "config: mode must be lockstep or realtime");
    require(experiment.log_decimation >= 1, "config: log_decimation must be >= 1");
    require(experiment.time_scale > 0.0, "config: time_scale must be > 0");
    require(experiment.sysid_amplitude == "peak" || experiment.sysid_amplitude == "peak_to_trough",
            "config: sysid_amplitude must be peak or peak_to_trough");
    require(experiment.sysid_rate > 0.0 && experiment.sysid_duration > 0.0, "config: bad sysid timing");
  }

  double duration() const { return trajectory.hold * trajectory.count; }
};

namespace detail {

template <class T>
std::string format_value(const T& v) {
  std::ostringstream os;
  os.precision(17);
  if constexpr (std::is_same_v<T, bool>) {
    os << (v ? "true" : "false");
  } else {
    os << v;
  }
  return os.str();
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  if constexpr (std::is_same_v<T, bool>) {
    std::string w;
    is >> w;
    if (w == "true" || w == "1" || w == "on" || w == "yes") return true;
    if (w == "false" || w == "0" || w == "off" || w == "no") return false;
    throw InvalidArgument("config: " + key + " is not a boolean: '" + text + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    is >> v;
  } else {
    is >> v;
    std::string rest;
    if (is.fail() || (is >> rest)) throw InvalidArgument("config: " + key + " is not a number: '" + text + "'");
  }
  return v;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_value(v[i]);
  return out;
}

inline std::vector<double> parse_list(const std::string& key, std::string text) {
  for (char& c : text)
    if (c == ',') c = ' ';
  std::istringstream is(text);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  if (!is.eof()) throw InvalidArgument("config: " + key + " is not a list of numbers");
  return out;
}

struct KeyBinding {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T, class Access>
KeyBinding scalar(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  return {section, key,
          [access](const ExperimentConfig& c) {
            return format_value(access(const_cast<ExperimentConfig&>(c)));
          },
          [access, full](ExperimentConfig& c, const std::string& text) {
            access(c) = parse_value<T>(full, text);
          }};
}

template <std::size_t N, class Access>
KeyBinding fixed_list(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  return {section, key,
          [access](const ExperimentConfig& c) {
            const auto& a = access(const_cast<ExperimentConfig&>(c));
            return format_list(std::vector<double>(a.begin(), a.end()));
          },
          [access, full](ExperimentConfig& c, const std::string& text) {
            const auto v = parse_list(full, text);
            require(v.size() == N, "config: " + full + " needs " + std::to_string(N) + " values");
            std::copy(v.begin(), v.end(), access(c).begin());
          }};
}

inline const std::vector<KeyBinding>& key_table() {
  using C = ExperimentConfig;
  static const std::vector<KeyBinding> table = {
      {"controller", "lambda", [](const C& c) { return format_list(c.controller.lambda); },
       [](C& c, const std::string& t) { c.controller.lambda = parse_list("controller.lambda", t); }},
      scalar<double>("controller", "gamma", [](C& c) -> auto& { return c.controller.gamma; }),
      scalar<double>("controller", "kd", [](C& c) -> auto& { return c.controller.kd; }),
      scalar<double>("controller", "k_ff", [](C& c) -> auto& { return c.controller.k_ff; }),
      scalar<double>("controller", "p_max", [](C& c) -> auto& { return c.controller.p_max; }),
      scalar<double>("controller", "p_nom", [](C& c) -> auto& { return c.controller.p_nom; }),
      scalar<double>("controller", "control_rate", [](C& c) -> auto& { return c.controller.control_rate; }),
      scalar<double>("controller", "tau_filter", [](C& c) -> auto& { return c.controller.tau_filter; }),
      scalar<double>("controller", "zeta_filter", [](C& c) -> auto& { return c.controller.zeta_filter; }),
      scalar<int>("controller", "centers", [](C& c) -> auto& { return c.controller.centers; }),
      scalar<std::uint64_t>("controller", "network_seed", [](C& c) -> auto& { return c.controller.network_seed; }),
      scalar<double>("controller", "width", [](C& c) -> auto& { return c.controller.width; }),
      scalar<double>("controller", "q_range", [](C& c) -> auto& { return c.controller.q_range; }),
      scalar<double>("controller", "qd_range", [](C& c) -> auto& { return c.controller.qd_range; }),
      scalar<double>("controller", "qrd_range", [](C& c) -> auto& { return c.controller.qrd_range; }),
      scalar<double>("controller", "qrdd_range", [](C& c) -> auto& { return c.controller.qrdd_range; }),
      scalar<bool>("controller", "antiwindup", [](C& c) -> auto& { return c.controller.antiwindup; }),
      scalar<double>("controller", "velocity_noise", [](C& c) -> auto& { return c.controller.velocity_noise; }),

      fixed_list<kJoints>("plant", "link_masses", [](C& c) -> auto& { return c.plant.model.link_masses; }),
      fixed_list<kJoints>("plant", "link_lengths", [](C& c) -> auto& { return c.plant.model.link_lengths; }),
      scalar<double>("plant", "link_radius", [](C& c) -> auto& { return c.plant.model.link_radius; }),
      scalar<double>("plant", "zeta", [](C& c) -> auto& { return c.plant.model.zeta; }),
      scalar<double>("plant", "freq_hz", [](C& c) -> auto& { return c.plant.model.freq_hz; }),
      scalar<double>("plant", "stiffness_kpa", [](C& c) -> auto& { return c.plant.model.stiffness_kpa; }),
      scalar<double>("plant", "cubic_ratio", [](C& c) -> auto& { return c.plant.model.cubic_ratio; }),
      scalar<double>("plant", "hyst_fraction", [](C& c) -> auto& { return c.plant.model.hyst_fraction; }),
      scalar<double>("plant", "hyst_yield", [](C& c) -> auto& { return c.plant.model.hyst_yield; }),
      scalar<double>("plant", "hyst_n", [](C& c) -> auto& { return c.plant.model.hyst_n; }),
      scalar<double>("plant", "tau_p", [](C& c) -> auto& { return c.plant.model.tau_p; }),
      scalar<double>("plant", "k_tau_mismatch", [](C& c) -> auto& { return c.plant.model.k_tau_mismatch; }),
      scalar<bool>("plant", "drift", [](C& c) -> auto& { return c.plant.model.drift; }),
      scalar<double>("plant", "drift_per_600s", [](C& c) -> auto& { return c.plant.model.drift_per_600s; }),
      scalar<double>("plant", "p_fail", [](C& c) -> auto& { return c.plant.model.p_fail; }),
      scalar<double>("plant", "gravity", [](C& c) -> auto& { return c.plant.model.gravity; }),
      fixed_list<kDofs>("plant", "zeta_override", [](C& c) -> auto& { return c.plant.model.zeta_override; }),
      fixed_list<kDofs>("plant", "freq_override", [](C& c) -> auto& { return c.plant.model.freq_override; }),
      scalar<double>("plant", "step", [](C& c) -> auto& { return c.plant.step; }),
      scalar<double>("plant", "payload_mass", [](C& c) -> auto& { return c.plant.payload_mass; }),
      scalar<int>("plant", "payload_link", [](C& c) -> auto& { return c.plant.payload_link; }),
      scalar<double>("plant", "drop_time", [](C& c) -> auto& { return c.plant.drop_time; }),

      scalar<double>("trajectory", "hold", [](C& c) -> auto& { return c.trajectory.hold; }),
      scalar<double>("trajectory", "amplitude", [](C& c) -> auto& { return c.trajectory.amplitude; }),
      scalar<int>("trajectory", "count", [](C& c) -> auto& { return c.trajectory.count; }),
      scalar<std::uint64_t>("trajectory", "seed", [](C& c) -> auto& { return c.trajectory.seed; }),
      scalar<double>("trajectory", "ramp_dp_max", [](C& c) -> auto& { return c.trajectory.ramp_dp_max; }),
      scalar<double>("trajectory", "ramp_period", [](C& c) -> auto& { return c.trajectory.ramp_period; }),
      scalar<int>("trajectory", "ramp_cycles", [](C& c) -> auto& { return c.trajectory.ramp_cycles; }),
      scalar<double>("trajectory", "ramp_rate", [](C& c) -> auto& { return c.trajectory.ramp_rate; }),

      scalar<double>("monitor", "percentile", [](C& c) -> auto& { return c.monitor.percentile; }),
      scalar<double>("monitor", "min_span", [](C& c) -> auto& { return c.monitor.min_span; }),
      scalar<double>("monitor", "transient_window", [](C& c) -> auto& { return c.monitor.transient_window; }),
      scalar<double>("monitor", "settle_limit", [](C& c) -> auto& { return c.monitor.settle_limit; }),
      scalar<double>("monitor", "strict_band", [](C& c) -> auto& { return c.monitor.strict_band; }),
      scalar<double>("monitor", "sample_rate", [](C& c) -> auto& { return c.monitor.sample_rate; }),
      scalar<double>("monitor", "audit_threshold", [](C& c) -> auto& { return c.monitor.audit_threshold; }),
      scalar<double>("monitor", "vdot_window", [](C& c) -> auto& { return c.monitor.vdot_window; }),

      scalar<int>("experiment", "trials", [](C& c) -> auto& { return c.experiment.trials; }),
      scalar<std::uint64_t>("experiment", "seed", [](C& c) -> auto& { return c.experiment.seed; }),
      scalar<std::uint64_t>("experiment", "seed_stride", [](C& c) -> auto& { return c.experiment.seed_stride; }),
      scalar<std::string>("experiment", "mode", [](C& c) -> auto& { return c.experiment.mode; }),
      scalar<int>("experiment", "log_decimation", [](C& c) -> auto& { return c.experiment.log_decimation; }),
      scalar<double>("experiment", "time_scale", [](C& c) -> auto& { return c.experiment.time_scale; }),
      scalar<double>("experiment", "sysid_duration", [](C& c) -> auto& { return c.experiment.sysid_duration; }),
      scalar<double>("experiment", "sysid_displacement", [](C& c) -> auto& { return c.experiment.sysid_displacement; }),
      scalar<int>("experiment", "sysid_min_peaks", [](C& c) -> auto& { return c.experiment.sysid_min_peaks; }),
      scalar<int>("experiment", "sysid_max_peaks", [](C& c) -> auto& { return c.experiment.sysid_max_peaks; }),
      scalar<std::string>("experiment", "sysid_amplitude", [](C& c) -> auto& { return c.experiment.sysid_amplitude; }),
      scalar<double>("experiment", "sysid_rate", [](C& c) -> auto& { return c.experiment.sysid_rate; }),
  };
  return table;
}

}  // namespace detail

/// Applies the keys present in `tree` on top of `base`.
inline ExperimentConfig config_from_ptree(const boost::property_tree::ptree& tree,
                                          ExperimentConfig base = {}) {
  const auto& table = detail::key_table();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw InvalidArgument("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      auto it = std::find_if(table.begin(), table.end(), [&](const detail::KeyBinding& b) {
        return b.section == section && b.key == key;
      });
      if (it == table.end()) throw InvalidArgument("config: unknown key [" + section + "] " + key);
      it->set(base, detail::trim(value.data()));
    }
  }
  base.validate();
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return config_from_ptree(tree);
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return config_from_ptree(tree);
}

/// Every key with its resolved value, one section after another.
inline std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string current;
  for (const auto& b : detail::key_table()) {
    if (b.section != current) {
      os << (current.empty() ? "" : "\n") << '[' << b.section << "]\n";
      current = b.section;
    }
    os << b.key << " = " << b.get(c) << '\n';
  }
  return os.str();
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << format_config(c);
}

}  // namespace softarm
