#pragma once

// Estimators for bench identification of a soft joint: damping and
// frequency from a free response, and loop metrics from a quasi-static
// pressure ramp.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "softarm/common.hpp"

namespace softarm {

struct TimeSample {
  double t;
  double y;
};

enum class Amplitude {
  Peak,          // height of each positive peak above zero
  PeakToTrough,  // half the drop from each peak to the following trough
};

struct PeakOptions {
  int min_peaks = 5;
  int max_peaks = 0;                // 0 uses every detected peak
  double prominence_ratio = 0.02;   // of the first peak
  int smooth_window = 0;            // centered moving average, samples; 0/1 = off
  Amplitude amplitude = Amplitude::Peak;
};

struct LogDecrementResult {
  double zeta = 0.0;
  double omega_d_hz = 0.0;
  double omega_n_hz = 0.0;
  double delta = 0.0;  // per-cycle logarithmic decrement
  std::vector<double> peak_times;
  std::vector<double> peak_values;
  std::vector<double> amplitudes;  // the sequence the decrement was taken over
};

namespace detail {

inline std::vector<double> moving_average(const std::vector<double>& y, int window) {
  if (window <= 1) return y;
  const int half = window / 2;
  const auto n = static_cast<int>(y.size());
  std::vector<double> out(y.size());
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - half);
    const int b = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int k = a; k <= b; ++k) acc += y[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = acc / (b - a + 1);
  }
  return out;
}

/// Parabolic refinement of the extremum at sample i.
inline TimeSample refine_extremum(const std::vector<TimeSample>& signal, const std::vector<double>& y,
                                  std::size_t i) {
  if (i == 0 || i + 1 >= y.size()) return {signal[i].t, y[i]};
  const double ym = y[i - 1], y0 = y[i], yp = y[i + 1];
  const double denom = ym - 2.0 * y0 + yp;
  double off = denom != 0.0 ? 0.5 * (ym - yp) / denom : 0.0;
  off = std::clamp(off, -0.5, 0.5);
  const double h = off >= 0.0 ? signal[i + 1].t - signal[i].t : signal[i].t - signal[i - 1].t;
  return {signal[i].t + off * h, y0 - 0.25 * (ym - yp) * off};
}

}  // namespace detail

/// Positive local maxima of y(t), refined by a parabola through the three
/// samples around each maximum. Prominence is measured the usual way: on
/// each side, the lowest value before the signal rises above the peak (or
/// ends); the higher of the two bases is the reference. Peaks less prominent
/// than `prominence_ratio` times the highest maximum are discarded.
inline std::vector<TimeSample> find_peaks(const std::vector<TimeSample>& signal,
                                          const PeakOptions& opt = {}) {
  const std::size_t n = signal.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(signal[i].t) && std::isfinite(signal[i].y), "find_peaks: non-finite sample");
    if (i > 0) require(signal[i].t > signal[i - 1].t, "find_peaks: time must increase");
    y[i] = signal[i].y;
  }
  y = detail::moving_average(y, opt.smooth_window);

  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (y[i] > 0.0 && y[i] > y[i - 1] && y[i] >= y[i + 1]) cand.push_back(i);
  if (cand.empty()) return {};

  double highest = 0.0;
  for (std::size_t i : cand) highest = std::max(highest, y[i]);
  const double threshold = opt.prominence_ratio * highest;
  std::vector<TimeSample> peaks;
  for (std::size_t i : cand) {
    double left = y[i], right = y[i];
    for (std::size_t j = i; j-- > 0 && y[j] <= y[i];) left = std::min(left, y[j]);
    for (std::size_t j = i + 1; j < n && y[j] <= y[i]; ++j) right = std::min(right, y[j]);
    if (y[i] - std::max(left, right) < threshold) continue;
    peaks.push_back(detail::refine_extremum(signal, y, i));
  }
  return peaks;
}

/// Damping ratio and frequencies of a decaying oscillation from the ratio
/// of its first and last amplitudes. Peak-to-trough amplitudes are
/// insensitive to a slowly moving oscillation center; with them the last
/// peak only closes the final trough.
inline LogDecrementResult log_decrement(const std::vector<TimeSample>& signal,
                                        const PeakOptions& opt = {}) {
  require(opt.min_peaks >= 2, "log_decrement: need at least two peaks");
  auto peaks = find_peaks(signal, opt);
  if (static_cast<int>(peaks.size()) < opt.min_peaks)
    throw InvalidArgument("log_decrement: found " + std::to_string(peaks.size()) +
                          " peaks, need " + std::to_string(opt.min_peaks));
  if (opt.max_peaks > 0 && static_cast<int>(peaks.size()) > opt.max_peaks)
    peaks.resize(static_cast<std::size_t>(opt.max_peaks));

  LogDecrementResult r;
  if (opt.amplitude == Amplitude::Peak) {
    for (const auto& p : peaks) r.amplitudes.push_back(p.y);
  } else {
    require(peaks.size() >= 3, "log_decrement: peak-to-trough needs at least three peaks");
    std::vector<double> y(signal.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = signal[i].y;
    y = detail::moving_average(y, opt.smooth_window);
    std::size_t i = 0;
    for (std::size_t k = 0; k + 1 < peaks.size(); ++k) {
      while (i < y.size() && signal[i].t <= peaks[k].t) ++i;
      std::size_t lo = i;
      for (; i < y.size() && signal[i].t < peaks[k + 1].t; ++i)
        if (y[i] < y[lo]) lo = i;
      r.amplitudes.push_back(0.5 * (peaks[k].y - detail::refine_extremum(signal, y, lo).y));
    }
  }
  require(r.amplitudes.front() > 0.0 && r.amplitudes.back() > 0.0, "log_decrement: non-positive amplitude");

  const auto cycles = static_cast<double>(r.amplitudes.size() - 1);
  r.delta = std::log(r.amplitudes.front() / r.amplitudes.back()) / cycles;
  // A pure sinusoid gives a decrement at rounding level; anything clearly
  // negative is growth.
  if (r.delta < -1e-4) throw InvalidArgument("log_decrement: peaks grow, signal is not decaying");
  r.delta = std::max(r.delta, 0.0);
  r.zeta = r.delta / std::sqrt(4.0 * M_PI * M_PI + r.delta * r.delta);
  const auto k = static_cast<double>(peaks.size() - 1);
  r.omega_d_hz = k / (peaks.back().t - peaks.front().t);
  r.omega_n_hz = r.omega_d_hz / std::sqrt(1.0 - r.zeta * r.zeta);
  for (const auto& p : peaks) {
    r.peak_times.push_back(p.t);
    r.peak_values.push_back(p.y);
  }
  return r;
}

struct LoopSample {
  double dp;  // kPa
  double q;   // rad
};

struct HysteresisMetrics {
  double loop_area = 0.0;         // mean signed area per cycle, kPa rad
  double width_at_zero_dp = 0.0;  // mean q gap between falling and rising branches at dp = 0
  double drift_per_cycle = 0.0;   // mean shift of the loop's mean q between cycles
  std::vector<double> cycle_areas;
  std::vector<double> cycle_centroids;
};

/// Splits the trace into closed cycles and measures each one. A cycle
/// starts at the first sample, must reach both ends of the overall dp range
/// (within `range_tol` of the span), and closes when dp crosses or comes
/// within 0.1% of the span of its starting value.
inline HysteresisMetrics hysteresis_metrics(const std::vector<LoopSample>& trace,
                                            double range_tol = 0.02) {
  require(trace.size() >= 4, "hysteresis_metrics: trace too short");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : trace) {
    require(std::isfinite(s.dp) && std::isfinite(s.q), "hysteresis_metrics: non-finite sample");
    lo = std::min(lo, s.dp);
    hi = std::max(hi, s.dp);
  }
  const double span = hi - lo;
  require(span > 0.0, "hysteresis_metrics: dp never changes");
  const double tol = range_tol * span;

  std::vector<std::pair<std::size_t, std::size_t>> cycles;
  std::size_t start = 0;
  while (start + 2 < trace.size()) {
    const double dp0 = trace[start].dp;
    bool seen_lo = false, seen_hi = false;
    std::size_t end = 0;
    for (std::size_t i = start + 1; i < trace.size(); ++i) {
      seen_lo = seen_lo || trace[i].dp <= lo + tol;
      seen_hi = seen_hi || trace[i].dp >= hi - tol;
      if (!(seen_lo && seen_hi)) continue;
      const double a = trace[i - 1].dp - dp0;
      const double b = trace[i].dp - dp0;
      if (std::abs(b) <= 1e-3 * span || (a != 0.0 && (a < 0.0) != (b < 0.0))) {
        end = i;
        break;
      }
    }
    if (end == 0) break;
    cycles.emplace_back(start, end);
    start = end;
  }
  if (cycles.empty()) throw InvalidArgument("hysteresis_metrics: trace never closes a cycle");

  HysteresisMetrics m;
  double width_sum = 0.0;
  int width_count = 0;
  for (const auto& [a, b] : cycles) {
    double area = 0.0;
    double qsum = 0.0;
    for (std::size_t i = a; i <= b; ++i) {
      const auto& p = trace[i];
      const auto& nx = trace[i == b ? a : i + 1];
      area += p.dp * nx.q - nx.dp * p.q;
      if (i < b) qsum += p.q;
    }
    m.cycle_areas.push_back(0.5 * area);
    m.cycle_centroids.push_back(qsum / static_cast<double>(b - a));

    double up = 0.0, down = 0.0;
    int n_up = 0, n_down = 0;
    for (std::size_t i = a; i < b; ++i) {
      const double d0 = trace[i].dp, d1 = trace[i + 1].dp;
      if ((d0 < 0.0 && d1 >= 0.0) || (d0 > 0.0 && d1 <= 0.0)) {
        const double f = d0 / (d0 - d1);
        const double q = trace[i].q + f * (trace[i + 1].q - trace[i].q);
        if (d1 > d0) { up += q; ++n_up; }
        else { down += q; ++n_down; }
      }
    }
    if (n_up > 0 && n_down > 0) {
      width_sum += std::abs(down / n_down - up / n_up);
      ++width_count;
    }
  }
  double area_sum = 0.0;
  for (double v : m.cycle_areas) area_sum += v;
  m.loop_area = area_sum / static_cast<double>(m.cycle_areas.size());
  m.width_at_zero_dp = width_count > 0 ? width_sum / width_count : 0.0;
  if (m.cycle_centroids.size() > 1)
    m.drift_per_cycle = (m.cycle_centroids.back() - m.cycle_centroids.front()) /
                        static_cast<double>(m.cycle_centroids.size() - 1);
  return m;
}

}  // namespace softarm
