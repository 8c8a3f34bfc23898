#pragma once

// Experiment orchestration: closed-loop trials in lock-step or real-time
// mode, the step and weight-drop experiments, bench identification, and
// recomputation of reports from an output directory.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "softarm/concurrency.hpp"
#include "softarm/config.hpp"
#include "softarm/controller.hpp"
#include "softarm/csv.hpp"
#include "softarm/monitor.hpp"
#include "softarm/plant.hpp"
#include "softarm/rbfnn.hpp"
#include "softarm/rbfnn_io.hpp"
#include "softarm/sysid.hpp"
#include "softarm/trajgen.hpp"

namespace softarm {

inline constexpr const char* kVersion = "softarm 0.4.0";

/// One diagnostics row at the control rate.
struct LogRow {
  double t = 0.0;
  Vec6 q, q_des, s, tau_des;
  Vec12 p_des, p;
  std::uint32_t sat_flags = 0;
  double step_us = 0.0;
};

inline std::string log_header() {
  std::string h = "t";
  auto add = [&](const char* name, int n) {
    for (int i = 0; i < n; ++i) h += "," + std::string(name) + std::to_string(i);
  };
  add("q", kDofs);
  add("q_des", kDofs);
  add("s", kDofs);
  add("tau_des", kDofs);
  add("p_des", kChambers);
  add("p", kChambers);
  return h + ",sat_flags,step_us";
}

class LogWriter {
 public:
  explicit LogWriter(const std::string& path) : f_(path) {
    if (!f_) throw std::runtime_error("cannot open " + path);
    f_.precision(10);
    f_ << log_header() << '\n';
  }

  void write(const LogRow& r) {
    f_ << r.t;
    auto put = [&](const auto& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) f_ << ',' << v(i);
    };
    put(r.q);
    put(r.q_des);
    put(r.s);
    put(r.tau_des);
    put(r.p_des);
    put(r.p);
    f_ << ',' << r.sat_flags << ',' << r.step_us << '\n';
  }

 private:
  std::ofstream f_;
};

struct TrialSpec {
  std::uint64_t seed = 1;
  bool payload_drop = false;  // carry the configured payload until drop_time
  std::string csv_path;       // empty: no per-step log file
};

struct TrialResult {
  std::uint64_t seed = 0;
  bool fault = false;
  std::string fault_reason;
  double fault_time = 0.0;
  double t_end = 0.0;
  double drop_time = -1.0;  // < 0 when no payload was released
  std::vector<double> hold_starts;
  std::vector<SlidingSample> s_trace;
  std::vector<ResidualSample> residuals;
  std::vector<AuditRecord> audit;
  std::vector<WeightSnapshot> weights;
  double sup_q_des = 0.0;
  long steps = 0;
  int controller_faults = 0;
  int saturated_steps = 0;
  bool non_finite = false;
  double step_us_mean = 0.0;
  double step_us_max = 0.0;
  double wall_seconds = 0.0;
  RbfNetwork network;
};

inline RbfNetwork build_network(const ExperimentConfig& cfg) {
  const auto& c = cfg.controller;
  auto [lo, hi] = default_input_bounds(kDofs, c.q_range, c.qd_range, c.qrd_range, c.qrdd_range);
  std::optional<double> width;
  if (c.width > 0.0) width = c.width;
  return make_network(lo, hi, c.centers, kDofs, c.network_seed, width);
}

inline StepSchedule build_schedule(const ExperimentConfig& cfg) {
  const auto& tr = cfg.trajectory;
  return random_steps(StepSequence::symmetric(kDofs, tr.amplitude, tr.count, tr.hold, tr.seed));
}

/// Seed of trial i.
inline std::uint64_t trial_seed(const ExperimentConfig& cfg, int i) {
  return cfg.experiment.seed + static_cast<std::uint64_t>(i) * cfg.experiment.seed_stride;
}

namespace detail {

/// Shared per-step bookkeeping of both execution modes.
class TrialRecorder {
 public:
  TrialRecorder(const ExperimentConfig& cfg, TrialResult& out)
      : cfg_(cfg), out_(out), gains_(cfg.gains()) {
    sample_every_ = std::max<long>(1, std::lround(cfg.controller.control_rate / cfg.monitor.sample_rate));
  }

  void record(long k, double t, const ArmState& st, const ControllerDiagnostics& d,
              const AdaptiveController& ctl, const PlantModel& model, double payload,
              const std::function<void(const LogRow&)>& sink) {
    ++out_.steps;
    const VectorXd& s = ctl.sliding().s;
    if (d.fault) ++out_.controller_faults;
    if (d.sat_mask) ++out_.saturated_steps;
    if (!s.allFinite() || (!d.fault && !d.tau_des.allFinite()) || !ctl.network().theta.allFinite())
      out_.non_finite = true;
    step_us_sum_ += d.step_us;
    out_.step_us_max = std::max(out_.step_us_max, d.step_us);
    out_.step_us_mean = step_us_sum_ / static_cast<double>(out_.steps);

    out_.s_trace.push_back({t, s});
    out_.audit.push_back({t, st.q, Vec6(s), payload});
    if (!d.fault) out_.sup_q_des = std::max(out_.sup_q_des, d.setpoint.q_des.norm());

    if (k % sample_every_ == 0) {
      out_.weights.push_back({t, ctl.network().theta});
      if (!d.fault) {
        const auto& sl = ctl.sliding();
        const Vec6 f_true = reference_torque_in_controller_units(model, st, Vec6(sl.q_r_dot),
                                                                 Vec6(sl.q_r_ddot), gains_);
        out_.residuals.push_back({t, VectorXd(f_true), d.net_output});
      }
    }
    if (sink && k % cfg_.experiment.log_decimation == 0) {
      LogRow r;
      r.t = t;
      r.q = st.q;
      r.p = st.p;
      r.s = s;
      r.sat_flags = d.sat_mask;
      r.step_us = d.step_us;
      r.p_des = d.p_des;
      if (d.fault) {
        r.q_des.setConstant(std::nan(""));
        r.tau_des.setConstant(std::nan(""));
      } else {
        r.q_des = d.setpoint.q_des;
        r.tau_des = d.tau_des;
      }
      sink(r);
    }
  }

 private:
  const ExperimentConfig& cfg_;
  TrialResult& out_;
  ControllerGains gains_;
  long sample_every_ = 1;
  double step_us_sum_ = 0.0;
};

inline std::mt19937_64 noise_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Runs one closed-loop trial of the configured step schedule.
inline TrialResult run_trial(const ExperimentConfig& cfg, const TrialSpec& spec,
                             std::optional<RbfNetwork> initial_network = std::nullopt) {
  cfg.validate();
  const auto wall0 = std::chrono::steady_clock::now();
  TrialResult out;
  out.seed = spec.seed;

  const ControllerGains gains = cfg.gains();
  const StepSchedule sched = build_schedule(cfg);
  for (const auto& c : sched) out.hold_starts.push_back(c.t);
  const double duration = cfg.duration();
  const double dt = gains.dt();
  const long steps = std::lround(duration / dt);

  const PlantModel base = make_plant_model(cfg.plant.model, spec.seed);
  const bool drop = spec.payload_drop && cfg.plant.payload_mass > 0.0;
  if (spec.payload_drop && cfg.plant.drop_time >= duration)
    std::cerr << "warning: payload drop at t = " << cfg.plant.drop_time
              << " s is after the schedule ends; running without a payload\n";
  const bool carry = drop && cfg.plant.drop_time < duration;
  const PlantModel loaded = carry ? apply_payload(base, cfg.plant.payload_mass, cfg.plant.payload_link) : base;
  if (carry) out.drop_time = cfg.plant.drop_time;
  auto model_at = [&](double t) -> const PlantModel& {
    return carry && t < cfg.plant.drop_time ? loaded : base;
  };
  auto payload_at = [&](double t) { return carry && t < cfg.plant.drop_time ? cfg.plant.payload_mass : 0.0; };

  AdaptiveController ctl(gains, initial_network ? *initial_network : build_network(cfg));
  ctl.set_antiwindup(cfg.controller.antiwindup);
  ArmState state;
  ctl.reset(VectorXd(state.q));

  auto rng = detail::noise_rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = cfg.controller.velocity_noise;
  auto measured_velocity = [&](const Vec6& qd) {
    VectorXd v = qd;
    if (sigma > 0.0)
      for (int i = 0; i < kDofs; ++i) v(i) += sigma * noise(rng);
    return v;
  };

  detail::TrialRecorder rec(cfg, out);
  out.s_trace.reserve(static_cast<std::size_t>(steps));
  out.audit.reserve(static_cast<std::size_t>(steps));

  if (cfg.experiment.mode == "lockstep") {
    std::optional<LogWriter> writer;
    if (!spec.csv_path.empty()) writer.emplace(spec.csv_path);
    std::function<void(const LogRow&)> sink;
    if (writer) sink = [&](const LogRow& r) { writer->write(r); };
    for (long k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      const PlantModel& m = model_at(t);
      const auto d = ctl.step(VectorXd(state.q), measured_velocity(state.q_dot), command_at(sched, t));
      rec.record(k, t, state, d, ctl, m, payload_at(t), sink);
      try {
        state = integrate(state, Vec12(d.p_des), m, dt, cfg.plant.step);
      } catch (const PlantFault& e) {
        out.fault = true;
        out.fault_reason = e.what();
        out.fault_time = t;
        break;
      }
    }
    out.t_end = state.t;
  } else {
    // Real-time: the plant advances on its own thread at wall-clock pace,
    // the controller samples the latest coherent state, and log rows go
    // through a drop-oldest queue to a writer thread.
    SnapshotChannel<ArmState> state_ch;
    SnapshotChannel<Vec12> cmd_ch;
    BoundedQueue<LogRow> log_q(4096);
    std::atomic<bool> stop{false};
    std::string plant_fault;
    double plant_fault_t = 0.0;
    const auto period = std::chrono::duration<double>(dt * cfg.experiment.time_scale);

    std::thread plant([&] {
      ArmState s = state;
      Vec12 cmd = s.p;
      state_ch.publish(s);
      auto next = std::chrono::steady_clock::now();
      while (!stop.load() && s.t < duration) {
        if (auto c = cmd_ch.latest()) cmd = c->first;
        try {
          s = integrate(s, cmd, model_at(s.t), dt, cfg.plant.step);
        } catch (const PlantFault& e) {
          plant_fault = e.what();
          plant_fault_t = s.t;
          break;
        }
        state_ch.publish(s);
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
        std::this_thread::sleep_until(next);
      }
      state_ch.close();
    });
    std::thread logger([&] {
      std::optional<LogWriter> writer;
      if (!spec.csv_path.empty()) writer.emplace(spec.csv_path);
      while (auto row = log_q.pop())
        if (writer) writer->write(*row);
    });

    std::uint64_t seen = 0;
    long k = 0;
    auto sink = [&](const LogRow& r) { log_q.push(r); };
    while (true) {
      auto snap = state_ch.wait_newer(seen);
      if (!snap) break;
      seen = snap->second;
      const ArmState& s = snap->first;
      if (s.t >= duration - 0.5 * dt) break;
      const auto d = ctl.step(VectorXd(s.q), measured_velocity(s.q_dot), command_at(sched, s.t));
      cmd_ch.publish(Vec12(d.p_des));
      rec.record(k++, s.t, s, d, ctl, model_at(s.t), payload_at(s.t), sink);
      out.t_end = s.t;
    }
    stop = true;
    plant.join();
    log_q.close();
    logger.join();
    if (!plant_fault.empty()) {
      out.fault = true;
      out.fault_reason = plant_fault;
      out.fault_time = plant_fault_t;
    }
    if (log_q.dropped() > 0) std::cerr << "warning: " << log_q.dropped() << " log rows dropped\n";
  }

  out.network = ctl.network();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return out;
}

struct TrialAnalysis {
  double E_hat = 0.0;
  StabilityReport report;
  AuditResult audit;
  double theta_norm_final = 0.0;
  double theta_norm_change_last_10s = 0.0;  // |norm(T) - norm(T - 10 s)| / norm(T)
  double theta_norm_range_last_10s = 0.0;   // (max - min) / norm(T) over the same window
  double reentry_time = std::nan("");        // after the payload drop
  double drop_peak_s = std::nan("");         // max ||s|| between the drop and the next step
  double pre_drop_peak_s = std::nan("");     // max ||s|| over the settled part of the hold before the drop
  bool error_bound_available = true;
};

/// Residual percentile over the samples after the first transient window.
inline double trial_error_bound(const TrialResult& r, const ExperimentConfig& cfg) {
  std::vector<ResidualSample> tail;
  for (const auto& x : r.residuals)
    if (x.t >= cfg.monitor.transient_window) tail.push_back(x);
  return estimate_error_bound(tail, cfg.monitor.percentile, cfg.monitor.min_span);
}

inline MassProvider plant_mass_provider(const ExperimentConfig& cfg, std::uint64_t seed) {
  const PlantModel base = make_plant_model(cfg.plant.model, seed);
  const PlantModel loaded = apply_payload(base, cfg.plant.payload_mass, cfg.plant.payload_link);
  return [base, loaded](const Vec6& q, double payload) -> Mat6 {
    return mass_matrix<double>(payload > 0.0 ? loaded.geometry : base.geometry, q);
  };
}

/// Lyapunov decrease audit of one trial against the ball of radius r_bound.
inline AuditResult audit_trial(const TrialResult& r, const ExperimentConfig& cfg, double r_bound) {
  const auto trace = lyapunov_trace(r.audit, r.weights, plant_mass_provider(cfg, r.seed),
                                    cfg.gains().gamma, r.network.theta);
  return vdot_sign_audit(trace, r_bound, cfg.monitor.vdot_window);
}

/// Time after the drop until max_i |s_i| last leaves the band, searched up
/// to the next step command.
inline double reentry_after_drop(const TrialResult& r, double band) {
  if (r.drop_time < 0.0) return std::nan("");
  double next = std::numeric_limits<double>::infinity();
  for (double t : r.hold_starts)
    if (t > r.drop_time) next = std::min(next, t);
  double last = 0.0;
  for (const auto& smp : r.s_trace)
    if (smp.t >= r.drop_time && smp.t < next && smp.s.cwiseAbs().maxCoeff() >= band)
      last = smp.t - r.drop_time;
  return last;
}

/// Weights are snapshotted at the monitor rate; the change is measured
/// between the last snapshot and the one 10 s earlier.
inline void theta_norm_stats(const TrialResult& r, TrialAnalysis& a) {
  if (r.weights.empty()) return;
  a.theta_norm_final = r.weights.back().theta.norm();
  const double t_ref = r.weights.back().t - 10.0;
  double at_ref = r.weights.front().theta.norm();
  double lo = a.theta_norm_final, hi = a.theta_norm_final;
  for (const auto& w : r.weights) {
    if (w.t <= t_ref) at_ref = w.theta.norm();
    if (w.t >= t_ref) {
      lo = std::min(lo, w.theta.norm());
      hi = std::max(hi, w.theta.norm());
    }
  }
  if (a.theta_norm_final > 0.0) {
    a.theta_norm_change_last_10s = std::abs(a.theta_norm_final - at_ref) / a.theta_norm_final;
    a.theta_norm_range_last_10s = (hi - lo) / a.theta_norm_final;
  }
}

/// `audit_radius` and `band` default to this trial's own r_bound and
/// criterion band; pass a reference run's values to judge a perturbed run
/// against the nominal ball.
inline TrialAnalysis analyze_trial(const TrialResult& r, const ExperimentConfig& cfg,
                                   std::optional<double> audit_radius = std::nullopt,
                                   std::optional<double> band = std::nullopt) {
  TrialAnalysis a;
  try {
    a.E_hat = trial_error_bound(r, cfg);
  } catch (const InvalidArgument&) {
    a.E_hat = 0.0;
    a.error_bound_available = false;
  }
  const ControllerGains g = cfg.gains();
  BoundParams bp{a.E_hat, g.kd, g.k_ff, r.sup_q_des, cfg.monitor.transient_window,
                 cfg.monitor.settle_limit, cfg.monitor.strict_band};
  a.report = check_ultimate_bound(r.s_trace, r.hold_starts, bp);
  if (!r.audit.empty()) a.audit = audit_trial(r, cfg, audit_radius.value_or(a.report.r_bound));
  theta_norm_stats(r, a);

  if (r.drop_time >= 0.0) {
    a.reentry_time = reentry_after_drop(r, band.value_or(a.report.band));
    double hold = 0.0, next = std::numeric_limits<double>::infinity();
    for (double t : r.hold_starts) {
      if (t <= r.drop_time) hold = std::max(hold, t);
      else next = std::min(next, t);
    }
    a.pre_drop_peak_s = 0.0;
    a.drop_peak_s = 0.0;
    for (const auto& smp : r.s_trace) {
      if (smp.t >= hold + cfg.monitor.transient_window && smp.t < r.drop_time)
        a.pre_drop_peak_s = std::max(a.pre_drop_peak_s, smp.s.norm());
      if (smp.t >= r.drop_time && smp.t < next) a.drop_peak_s = std::max(a.drop_peak_s, smp.s.norm());
    }
  }
  return a;
}

inline nlohmann::json to_json(const TrialResult& r, const TrialAnalysis& a) {
  auto opt = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"seed", r.seed},
          {"fault", r.fault},
          {"fault_reason", r.fault_reason},
          {"fault_time", r.fault_time},
          {"t_end", r.t_end},
          {"drop_time", r.drop_time},
          {"steps", r.steps},
          {"controller_faults", r.controller_faults},
          {"saturated_steps", r.saturated_steps},
          {"non_finite", r.non_finite},
          {"step_us_mean", r.step_us_mean},
          {"step_us_max", r.step_us_max},
          {"wall_seconds", r.wall_seconds},
          {"error_bound_available", a.error_bound_available},
          {"theta_norm_final", a.theta_norm_final},
          {"theta_norm_change_last_10s", a.theta_norm_change_last_10s},
          {"theta_norm_range_last_10s", a.theta_norm_range_last_10s},
          {"reentry_time", opt(a.reentry_time)},
          {"drop_peak_s", opt(a.drop_peak_s)},
          {"pre_drop_peak_s", opt(a.pre_drop_peak_s)},
          {"stability", to_json(a.report)},
          {"audit", to_json(a.audit)}};
}

/// Cross-trial mean of s per DOF with a two-sided 99% Student-t interval,
/// at the monitor sample rate. Rows: t, dof, mean, ci_lo, ci_hi, n.
inline void write_mean_ci(const std::vector<const TrialResult*>& trials, const ExperimentConfig& cfg,
                          const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.precision(10);
  f << "t,dof,mean,ci_lo,ci_hi,n\n";
  if (trials.empty()) return;
  const long every = std::max<long>(1, std::lround(cfg.controller.control_rate / cfg.monitor.sample_rate));
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto* r : trials) len = std::min(len, r->s_trace.size());
  const auto n = static_cast<double>(trials.size());
  double tq = 0.0;
  if (trials.size() > 1) {
    boost::math::students_t dist(n - 1.0);
    tq = boost::math::quantile(boost::math::complement(dist, 0.005));
  }
  for (std::size_t k = 0; k < len; k += static_cast<std::size_t>(every)) {
    for (int i = 0; i < kDofs; ++i) {
      double mean = 0.0;
      for (const auto* r : trials) mean += r->s_trace[k].s(i);
      mean /= n;
      double var = 0.0;
      for (const auto* r : trials) var += std::pow(r->s_trace[k].s(i) - mean, 2);
      const double half = trials.size() > 1 ? tq * std::sqrt(var / (n - 1.0) / n) : 0.0;
      f << trials.front()->s_trace[k].t << ',' << i << ',' << mean << ',' << mean - half << ','
        << mean + half << ',' << trials.size() << '\n';
    }
  }
}

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentOutcome {
  std::vector<TrialResult> trials;
  std::vector<TrialAnalysis> analyses;
  std::vector<CheckResult> checks;
  nlohmann::json summary;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
};

inline nlohmann::json to_json(const std::vector<CheckResult>& checks) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : checks) j.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return j;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << j.dump(2) << '\n';
}

namespace detail {

inline ExperimentOutcome run_trials(const ExperimentConfig& cfg, const std::string& out_dir,
                                    bool payload_drop, const std::string& name) {
  namespace fs = std::filesystem;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_config(cfg, (fs::path(out_dir) / "config.ini").string());
    write_schedule_csv(build_schedule(cfg), (fs::path(out_dir) / "schedule.csv").string());
  }
  ExperimentOutcome out;
  nlohmann::json trials_json = nlohmann::json::array();
  for (int i = 0; i < cfg.experiment.trials; ++i) {
    TrialSpec spec;
    spec.seed = trial_seed(cfg, i);
    spec.payload_drop = payload_drop;
    if (!out_dir.empty()) spec.csv_path = (fs::path(out_dir) / ("trial_" + std::to_string(i) + ".csv")).string();
    TrialResult r;
    try {
      r = run_trial(cfg, spec);
    } catch (const std::exception& e) {
      r.seed = spec.seed;
      r.fault = true;
      r.fault_reason = e.what();
    }
    if (r.fault)
      std::cerr << name << ": trial " << i << " (seed " << r.seed << ") aborted at t = " << r.fault_time
                << " s: " << r.fault_reason << '\n';
    TrialAnalysis a = analyze_trial(r, cfg);
    if (!out_dir.empty() && r.steps > 0)
      save_network(r.network, (fs::path(out_dir) / ("network_" + std::to_string(i) + ".json")).string());
    nlohmann::json tj = to_json(r, a);
    tj["index"] = i;
    trials_json.push_back(tj);
    out.trials.push_back(std::move(r));
    out.analyses.push_back(std::move(a));
  }
  std::vector<const TrialResult*> ok;
  for (const auto& r : out.trials)
    if (!r.fault && r.steps > 0) ok.push_back(&r);
  if (!out_dir.empty()) write_mean_ci(ok, cfg, (fs::path(out_dir) / "mean_s_ci.csv").string());

  out.summary = {{"experiment", name},
                 {"version", kVersion},
                 {"seed", cfg.experiment.seed},
                 {"seed_stride", cfg.experiment.seed_stride},
                 {"mode", cfg.experiment.mode},
                 {"trials", trials_json}};
  return out;
}

inline void finish(ExperimentOutcome& out, const std::string& out_dir) {
  namespace fs = std::filesystem;
  out.summary["checks"] = to_json(out.checks);
  out.summary["passed"] = out.passed();
  if (!out_dir.empty()) {
    write_json(out.summary, (fs::path(out_dir) / "summary.json").string());
    nlohmann::json rep = nlohmann::json::array();
    for (const auto& t : out.summary["trials"]) rep.push_back(t["stability"]);
    write_json({{"version", kVersion}, {"reports", rep}, {"checks", to_json(out.checks)}},
               (fs::path(out_dir) / "report.json").string());
  }
}

}  // namespace detail

/// Seeded repetitions of the step schedule with convergence, bound and
/// audit checks.
inline ExperimentOutcome run_step_experiment(const ExperimentConfig& cfg, const std::string& out_dir = {}) {
  auto out = detail::run_trials(cfg, out_dir, false, "step");
  int faults = 0, holds_ok = 0, holds = 0, violations = 0;
  double worst_audit = 1.0;
  for (std::size_t i = 0; i < out.trials.size(); ++i) {
    faults += out.trials[i].fault;
    const auto& rep = out.analyses[i].report;
    holds_ok += rep.holds_settled;
    holds += static_cast<int>(rep.holds.size());
    violations += rep.violations;
    worst_audit = std::min(worst_audit, out.analyses[i].audit.fraction);
  }
  const int expected_holds = cfg.trajectory.count * cfg.experiment.trials;
  out.checks.push_back({"no plant faults", faults == 0, std::to_string(faults) + " trials aborted"});
  out.checks.push_back({"sliding variable settles in every hold", holds_ok == expected_holds && holds == expected_holds,
                        std::to_string(holds_ok) + "/" + std::to_string(expected_holds) + " holds"});
  out.checks.push_back({"no post-transient bound violations", violations == 0,
                        std::to_string(violations) + " samples"});
  out.checks.push_back({"Lyapunov decrease outside the ball", worst_audit >= cfg.monitor.audit_threshold,
                        "worst fraction " + std::to_string(worst_audit)});
  detail::finish(out, out_dir);
  return out;
}

/// The step schedule carrying the configured payload until drop_time.
inline ExperimentOutcome run_weight_drop(const ExperimentConfig& cfg, const std::string& out_dir = {}) {
  auto out = detail::run_trials(cfg, out_dir, true, "weight-drop");
  int faults = 0, ok = 0, dropped = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < out.trials.size(); ++i) {
    faults += out.trials[i].fault;
    const double re = out.analyses[i].reentry_time;
    if (std::isnan(re)) continue;
    ++dropped;
    worst = std::max(worst, re);
    ok += re <= cfg.monitor.settle_limit;
  }
  out.checks.push_back({"no plant faults", faults == 0, std::to_string(faults) + " trials aborted"});
  if (dropped > 0)
    out.checks.push_back({"re-entry after payload release", ok == dropped,
                          "worst " + std::to_string(worst) + " s over " + std::to_string(dropped) + " trials"});
  detail::finish(out, out_dir);
  return out;
}

// ---------------------------------------------------------------------------
// Bench identification

struct FreeResponse {
  int dof = 0;
  double zeta_target = 0.0;
  double freq_target = 0.0;
  std::vector<TimeSample> signal;  // displacement from equilibrium
  LogDecrementResult estimate;
  std::vector<std::pair<int, double>> zeta_by_peaks;  // sensitivity to the number of peaks
};

inline DofMask single_dof(int dof) {
  DofMask m{};
  m.fill(false);
  m[static_cast<std::size_t>(dof)] = true;
  return m;
}

/// Free response of one DOF with the others locked and all chambers held at
/// p_nom, released from rest at `displacement` off static equilibrium.
inline std::vector<TimeSample> free_response_signal(const PlantModel& m, int dof, double displacement,
                                                    double duration, double rate, double p_nom,
                                                    double max_step = 2e-4) {
  require(dof >= 0 && dof < kDofs, "free_response: DOF out of range");
  const DofMask mask = single_dof(dof);
  const Vec12 p = Vec12::Constant(p_nom);
  const Vec6 q_eq = static_equilibrium(m, p, Vec6::Zero(), mask);
  ArmState s;
  s.p = p;
  s.q = q_eq;
  s.q(dof) += displacement;
  s.hyst_z = s.q;
  const double dt = 1.0 / rate;
  const auto n = static_cast<long>(std::lround(duration * rate));
  std::vector<TimeSample> out;
  out.reserve(static_cast<std::size_t>(n + 1));
  out.push_back({0.0, s.q(dof) - q_eq(dof)});
  for (long k = 1; k <= n; ++k) {
    s = integrate(s, p, m, dt, max_step, mask);
    out.push_back({static_cast<double>(k) * dt, s.q(dof) - q_eq(dof)});
  }
  return out;
}

struct RampResponse {
  int dof = 0;
  std::vector<LoopSample> loop;
  HysteresisMetrics metrics;
};

/// Quasi-static differential ramp on one DOF's antagonistic pair, other
/// DOFs locked. The loop is recorded as (dp, q - q_eq).
inline std::vector<LoopSample> ramp_response_loop(const PlantModel& m, int dof,
                                                  const std::vector<RampSample>& ramp, double p_nom,
                                                  double max_step = 2e-4) {
  require(dof >= 0 && dof < kDofs, "ramp_response: DOF out of range");
  require(ramp.size() >= 2, "ramp_response: ramp too short");
  const DofMask mask = single_dof(dof);
  const int joint = dof / 2;
  const int c0 = 4 * joint + 2 * (dof % 2);
  auto pressures = [&](double dp) {
    Vec12 p = Vec12::Constant(p_nom);
    p(c0) = p_nom + 0.5 * dp;
    p(c0 + 1) = p_nom - 0.5 * dp;
    return p;
  };
  ArmState s;
  s.p = pressures(ramp.front().dp);
  s.q = static_equilibrium(m, s.p, Vec6::Zero(), mask);
  s.hyst_z = s.q;
  const double q0 = s.q(dof);
  std::vector<LoopSample> out;
  out.reserve(ramp.size());
  out.push_back({ramp.front().dp, 0.0});
  for (std::size_t k = 1; k < ramp.size(); ++k) {
    s = integrate(s, pressures(ramp[k - 1].dp), m, ramp[k].t - ramp[k - 1].t, max_step, mask);
    out.push_back({ramp[k].dp, s.q(dof) - q0});
  }
  return out;
}

struct SysidOutcome {
  std::vector<FreeResponse> free;
  std::vector<RampResponse> ramps;
  std::vector<CheckResult> checks;
  nlohmann::json summary;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
};

/// Free-response identification on every DOF and hysteresis ramps on the
/// distal joint, compared against the configured targets.
inline SysidOutcome run_sysid(const ExperimentConfig& cfg, const std::string& out_dir = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_config(cfg, (fs::path(out_dir) / "config.ini").string());
  }
  const auto& ex = cfg.experiment;
  const PlantModel m = make_plant_model(cfg.plant.model, ex.seed);
  SysidOutcome out;
  nlohmann::json free_j = nlohmann::json::array();
  int free_ok = 0;
  for (int i = 0; i < kDofs; ++i) {
    FreeResponse fr;
    fr.dof = i;
    const auto& pc = cfg.plant.model;
    fr.zeta_target = pc.zeta_override[i] > 0.0 ? pc.zeta_override[i] : pc.zeta;
    fr.freq_target = pc.freq_override[i] > 0.0 ? pc.freq_override[i] : pc.freq_hz;
    fr.signal = free_response_signal(m, i, ex.sysid_displacement, ex.sysid_duration, ex.sysid_rate,
                                     cfg.controller.p_nom, cfg.plant.step);
    PeakOptions opt;
    opt.min_peaks = ex.sysid_min_peaks;
    opt.max_peaks = ex.sysid_max_peaks;
    opt.amplitude = ex.sysid_amplitude == "peak" ? Amplitude::Peak : Amplitude::PeakToTrough;
    nlohmann::json j = {{"dof", i}, {"zeta_target", fr.zeta_target}, {"freq_target_hz", fr.freq_target}};
    bool ok = false;
    try {
      fr.estimate = log_decrement(fr.signal, opt);
      for (int k : {5, 10, 20, 0}) {
        PeakOptions o = opt;
        o.min_peaks = std::min(opt.min_peaks, k == 0 ? opt.min_peaks : k);
        o.max_peaks = k;
        try {
          fr.zeta_by_peaks.emplace_back(k, log_decrement(fr.signal, o).zeta);
        } catch (const InvalidArgument&) {
        }
      }
      const double ez = std::abs(fr.estimate.zeta - fr.zeta_target) / fr.zeta_target;
      const double ef = std::abs(fr.estimate.omega_d_hz - fr.freq_target) / fr.freq_target;
      ok = ez <= 0.20 && ef <= 0.10;
      j["zeta"] = fr.estimate.zeta;
      j["omega_d_hz"] = fr.estimate.omega_d_hz;
      j["zeta_rel_error"] = ez;
      j["freq_rel_error"] = ef;
      j["peaks"] = fr.estimate.peak_times.size();
      nlohmann::json sens = nlohmann::json::object();
      for (const auto& [k, z] : fr.zeta_by_peaks) sens[k == 0 ? "all" : std::to_string(k)] = z;
      j["zeta_by_peak_count"] = sens;
      PeakOptions other = opt;
      other.amplitude = opt.amplitude == Amplitude::Peak ? Amplitude::PeakToTrough : Amplitude::Peak;
      j[other.amplitude == Amplitude::Peak ? "zeta_positive_peaks" : "zeta_peak_to_trough"] =
          log_decrement(fr.signal, other).zeta;
    } catch (const InvalidArgument& e) {
      j["error"] = e.what();
    }
    j["pass"] = ok;
    free_ok += ok;
    free_j.push_back(j);
    if (!out_dir.empty()) {
      std::vector<std::pair<double, double>> rows;
      for (const auto& s : fr.signal) rows.emplace_back(s.t, s.y);
      write_two_column_csv(rows, (fs::path(out_dir) / ("free_response_dof" + std::to_string(i) + ".csv")).string(),
                           "t", "q");
    }
    out.free.push_back(std::move(fr));
  }

  const auto& tr = cfg.trajectory;
  const auto ramp = pressure_ramp(tr.ramp_dp_max, tr.ramp_period, tr.ramp_cycles, tr.ramp_rate,
                                  cfg.controller.p_nom, 1.0 / cfg.plant.model.freq_hz);
  if (!out_dir.empty()) write_ramp_csv(ramp, (fs::path(out_dir) / "ramp_command.csv").string());
  nlohmann::json ramp_j = nlohmann::json::array();
  int ramp_ok = 0;
  for (int i : {kDofs - 2, kDofs - 1}) {
    RampResponse rr;
    rr.dof = i;
    rr.loop = ramp_response_loop(m, i, ramp, cfg.controller.p_nom, cfg.plant.step);
    nlohmann::json j = {{"dof", i}};
    try {
      rr.metrics = hysteresis_metrics(rr.loop);
      j["loop_area"] = rr.metrics.loop_area;
      j["width_at_zero_dp"] = rr.metrics.width_at_zero_dp;
      j["drift_per_cycle"] = rr.metrics.drift_per_cycle;
      j["cycle_areas"] = rr.metrics.cycle_areas;
      ramp_ok += rr.metrics.loop_area > 0.0;
    } catch (const InvalidArgument& e) {
      j["error"] = e.what();
    }
    ramp_j.push_back(j);
    if (!out_dir.empty()) {
      std::vector<std::pair<double, double>> rows;
      for (const auto& s : rr.loop) rows.emplace_back(s.dp, s.q);
      write_two_column_csv(rows, (fs::path(out_dir) / ("ramp_dof" + std::to_string(i) + ".csv")).string(),
                           "dp", "q");
    }
    out.ramps.push_back(std::move(rr));
  }

  out.checks.push_back({"free-response damping and frequency", free_ok == kDofs,
                        std::to_string(free_ok) + "/" + std::to_string(kDofs) + " DOFs within tolerance"});
  out.checks.push_back({"positive hysteresis loop area", ramp_ok == 2, std::to_string(ramp_ok) + "/2 DOFs"});
  out.summary = {{"experiment", "sysid"},
                 {"version", kVersion},
                 {"seed", ex.seed},
                 {"free_response", free_j},
                 {"ramp", ramp_j},
                 {"checks", to_json(out.checks)},
                 {"passed", out.passed()}};
  if (!out_dir.empty()) write_json(out.summary, (fs::path(out_dir) / "summary.json").string());
  return out;
}

// ---------------------------------------------------------------------------
// Recomputing reports from an output directory

/// Re-evaluates the bound check of every trial log in `dir` from the CSV
/// traces, the saved schedule and config, and the E_hat values recorded in
/// summary.json. The Lyapunov audit needs in-run weight snapshots and is not
/// repeated.
inline nlohmann::json recompute_report(const std::string& dir, std::vector<CheckResult>* checks = nullptr) {
  namespace fs = std::filesystem;
  const ExperimentConfig cfg = load_config((fs::path(dir) / "config.ini").string());
  std::ifstream sf(fs::path(dir) / "summary.json");
  if (!sf) throw std::runtime_error("no summary.json in " + dir);
  const auto summary = nlohmann::json::parse(sf);
  const auto sched = read_schedule_csv((fs::path(dir) / "schedule.csv").string());
  std::vector<double> starts;
  for (const auto& c : sched) starts.push_back(c.t);
  const ControllerGains g = cfg.gains();

  nlohmann::json reports = nlohmann::json::array();
  int holds_ok = 0, holds = 0, violations = 0;
  for (const auto& t : summary.at("trials")) {
    const int idx = t.at("index").get<int>();
    const auto path = fs::path(dir) / ("trial_" + std::to_string(idx) + ".csv");
    if (!fs::exists(path)) continue;
    const CsvTable table = read_csv(path.string());
    std::vector<SlidingSample> trace;
    double sup_qd = 0.0;
    const int tc = table.column("t");
    const int s0 = table.column("s0");
    const int qd0 = table.column("q_des0");
    for (const auto& row : table.rows) {
      VectorXd s(kDofs), qd(kDofs);
      for (int i = 0; i < kDofs; ++i) {
        s(i) = row[static_cast<std::size_t>(s0 + i)];
        qd(i) = row[static_cast<std::size_t>(qd0 + i)];
      }
      if (qd.allFinite()) sup_qd = std::max(sup_qd, qd.norm());
      trace.push_back({row[static_cast<std::size_t>(tc)], s});
    }
    const double e_hat = t.at("stability").at("E_hat").get<double>();
    BoundParams bp{e_hat, g.kd, g.k_ff, sup_qd, cfg.monitor.transient_window, cfg.monitor.settle_limit,
                   cfg.monitor.strict_band};
    const auto rep = check_ultimate_bound(trace, starts, bp);
    holds_ok += rep.holds_settled;
    holds += static_cast<int>(rep.holds.size());
    violations += rep.violations;
    auto j = to_json(rep);
    j["index"] = idx;
    reports.push_back(j);
  }
  std::vector<CheckResult> local;
  local.push_back({"sliding variable settles in every hold", holds > 0 && holds_ok == holds,
                   std::to_string(holds_ok) + "/" + std::to_string(holds) + " holds"});
  local.push_back({"no post-transient bound violations", violations == 0, std::to_string(violations) + " samples"});
  if (checks) *checks = local;
  return {{"version", kVersion}, {"source", dir}, {"reports", reports}, {"checks", to_json(local)}};
}

}  // namespace softarm
