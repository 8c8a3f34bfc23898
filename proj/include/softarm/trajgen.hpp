#pragma once

// Command generators for the experiments: held random joint-angle steps and
// slow triangle ramps of a chamber pressure differential.

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "softarm/common.hpp"

namespace softarm {

struct StepSequence {
  double hold_duration = 10.0;  // s
  VectorXd lo;                  // rad, per DOF
  VectorXd hi;
  int count = 12;
  std::uint64_t seed = 7;

  static StepSequence symmetric(int dofs, double amplitude, int count, double hold,
                                std::uint64_t seed) {
    return {hold, VectorXd::Constant(dofs, -amplitude), VectorXd::Constant(dofs, amplitude),
            count, seed};
  }
};

struct StepCommand {
  double t;
  VectorXd q_cmd;
};

using StepSchedule = std::vector<StepCommand>;

/// Uniform random commands, one every hold_duration, starting at t = 0.
/// `q_limit` bounds the admissible command range.
inline StepSchedule random_steps(const StepSequence& seq, double q_limit = M_PI) {
  require(seq.lo.size() > 0 && seq.lo.size() == seq.hi.size(), "random_steps: empty or mismatched bounds");
  require(seq.hold_duration > 0.0, "random_steps: hold must be > 0");
  require(seq.count >= 1, "random_steps: count must be >= 1");
  require((seq.hi.array() >= seq.lo.array()).all(), "random_steps: need lo <= hi");
  require((seq.lo.array() >= -q_limit).all() && (seq.hi.array() <= q_limit).all(),
          "random_steps: bounds exceed the joint range");
  std::mt19937_64 rng(seq.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StepSchedule out;
  out.reserve(static_cast<std::size_t>(seq.count));
  for (int k = 0; k < seq.count; ++k) {
    VectorXd q(seq.lo.size());
    for (Eigen::Index i = 0; i < q.size(); ++i)
      q(i) = seq.lo(i) + unit(rng) * (seq.hi(i) - seq.lo(i));
    out.push_back({k * seq.hold_duration, std::move(q)});
  }
  return out;
}

/// Command in force at time t (the last entry is held forever).
inline const VectorXd& command_at(const StepSchedule& sched, double t) {
  require(!sched.empty(), "command_at: empty schedule");
  std::size_t idx = 0;
  while (idx + 1 < sched.size() && sched[idx + 1].t <= t) ++idx;
  return sched[idx].q_cmd;
}

struct RampSample {
  double t;
  double dp;  // kPa
};

/// Symmetric triangle wave 0 -> +dp_max -> -dp_max -> 0, `cycles` times,
/// sampled at `rate`. The period must be at least ten times the plant's
/// dominant period so the joint follows quasi-statically.
inline std::vector<RampSample> pressure_ramp(double dp_max, double period, int cycles, double rate,
                                             double p_nom = 150.0,
                                             double dominant_period = 0.125) {
  require(dp_max > 0.0 && period > 0.0 && rate > 0.0, "pressure_ramp: amplitude, period, rate must be > 0");
  require(cycles >= 0, "pressure_ramp: cycles must be >= 0");
  require(dp_max <= 2.0 * p_nom, "pressure_ramp: differential larger than 2 * p_nom is unrealizable");
  require(period >= 10.0 * dominant_period, "pressure_ramp: period too short for a quasi-static ramp");
  std::vector<RampSample> out;
  if (cycles == 0) return out;
  const auto per_cycle = static_cast<long>(std::llround(period * rate));
  require(per_cycle >= 4, "pressure_ramp: rate too low for the period");
  const long total = per_cycle * cycles;
  out.reserve(static_cast<std::size_t>(total + 1));
  for (long k = 0; k <= total; ++k) {
    const double t = static_cast<double>(k) / rate;
    const double phase = static_cast<double>(k % per_cycle) / per_cycle + (k == total ? 1.0 : 0.0);
    double tri;
    if (phase <= 0.25) tri = 4.0 * phase;
    else if (phase <= 0.75) tri = 2.0 - 4.0 * phase;
    else tri = 4.0 * phase - 4.0;
    out.push_back({t, dp_max * tri});
  }
  if (!out.empty()) out.back().dp = 0.0;
  return out;
}

// CSV tapes: "t,q0,q1,..." for step schedules and "t,dp" for ramps, one
// header line each.

inline void write_schedule_csv(const StepSchedule& sched, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.precision(17);
  f << "t";
  const auto n = sched.empty() ? 0 : sched.front().q_cmd.size();
  for (Eigen::Index i = 0; i < n; ++i) f << ",q" << i;
  f << '\n';
  for (const auto& c : sched) {
    f << c.t;
    for (Eigen::Index i = 0; i < n; ++i) f << ',' << c.q_cmd(i);
    f << '\n';
  }
}

inline StepSchedule read_schedule_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(f, line);
  StepSchedule out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    require(vals.size() >= 2, "schedule csv: need a time and at least one command");
    VectorXd q(static_cast<Eigen::Index>(vals.size() - 1));
    for (std::size_t i = 1; i < vals.size(); ++i) q(static_cast<Eigen::Index>(i - 1)) = vals[i];
    require(out.empty() || vals[0] > out.back().t, "schedule csv: times must increase");
    out.push_back({vals[0], std::move(q)});
  }
  return out;
}

inline void write_ramp_csv(const std::vector<RampSample>& ramp, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.precision(17);
  f << "t,dp\n";
  for (const auto& r : ramp) f << r.t << ',' << r.dp << '\n';
}

}  // namespace softarm
