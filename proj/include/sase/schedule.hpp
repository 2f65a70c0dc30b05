#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "sase/common.hpp"
#include "sase/rng.hpp"

namespace sase {

/// Per-sensor sampling instants on (0, horizon]. The estimator's grid is the
/// merged union of all sensors' instants with t = 0 prepended as the origin.
struct SamplingSchedule {
  double horizon = 0.0;
  std::vector<std::vector<double>> times;  ///< per sensor, strictly ascending

  int m() const { return int(times.size()); }
  std::size_t total_samples() const {
    std::size_t s = 0;
    for (const auto& v : times) s += v.size();
    return s;
  }
};

/// Draw independent per-sensor schedules with gaps uniform on
/// [t_min, t_max). Deterministic in (seed, sensor index); the gap bound
/// guarantees every sensor's inter-sample intervals stay below t_max.
inline SamplingSchedule generate_schedule(int m, double t_min, double t_max,
                                          double horizon, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("generate_schedule: need at least one sensor");
  if (!(t_min > 0.0) || !(t_max >= t_min))
    throw std::invalid_argument("generate_schedule: need 0 < t_min <= t_max");
  if (!(horizon > 0.0)) throw std::invalid_argument("generate_schedule: horizon must be > 0");
  SamplingSchedule s;
  s.horizon = horizon;
  s.times.resize(m);
  for (int i = 0; i < m; ++i) {
    KeyedStream rng(seed, rng_domain::kSchedule, std::uint64_t(i));
    double t = 0.0;
    while (true) {
      t += rng.next_uniform(t_min, t_max);
      if (t > horizon) break;
      s.times[i].push_back(t);
    }
  }
  return s;
}

/// The merged estimation grid: strictly increasing times with per-step
/// boolean sensor masks. times[0] == 0 always (estimator origin, empty mask).
struct MergedGrid {
  std::vector<double> times;
  std::vector<std::vector<std::uint8_t>> masks;  ///< per step, length m

  std::size_t steps() const { return times.size(); }
};

/// Merge a schedule into the estimation grid. Instants closer than tie_tol
/// collapse into one grid step with both mask bits set. A sensor sampling
/// twice within tie_tol, or any instant at or below 0, is a stream error.
inline MergedGrid merge_schedule(const SamplingSchedule& schedule, double tie_tol = 1e-9) {
  const int m = schedule.m();
  std::vector<std::pair<double, int>> events;  // (time, sensor)
  for (int i = 0; i < m; ++i) {
    double prev = -1.0;
    for (double t : schedule.times[i]) {
      if (!(t > 0.0)) throw StreamError("sampling instants must be strictly positive");
      if (prev >= 0.0 && t <= prev)
        throw StreamError("per-sensor sampling instants must be strictly ascending");
      prev = t;
      events.emplace_back(t, i);
    }
  }
  std::sort(events.begin(), events.end());
  MergedGrid grid;
  grid.times.push_back(0.0);
  grid.masks.emplace_back(m, std::uint8_t{0});
  std::size_t a = 0;
  while (a < events.size()) {
    const double t0 = events[a].first;
    if (t0 <= tie_tol)
      throw StreamError("sampling instant indistinguishable from the grid origin");
    grid.times.push_back(t0);
    grid.masks.emplace_back(m, std::uint8_t{0});
    auto& mask = grid.masks.back();
    while (a < events.size() && events[a].first - t0 <= tie_tol) {
      const int sensor = events[a].second;
      if (mask[sensor])
        throw StreamError("sensor " + std::to_string(sensor + 1) +
                          " samples twice within the tie tolerance at t=" +
                          std::to_string(t0));
      mask[sensor] = 1;
      ++a;
    }
  }
  return grid;
}

/// One offending cumulative interval: sensor saw samples at t_earlier and
/// t_later whose difference is (within tol) an integer number of periods of
/// the beat between modes mode_a and mode_b.
struct PathologicalHit {
  int sensor = 0;
  double t_earlier = 0.0;
  double t_later = 0.0;
  double interval = 0.0;
  int mode_a = 0;
  int mode_b = 0;
  long cycles = 0;
  double period = 0.0;
};

struct PathologicalReport {
  std::vector<PathologicalHit> hits;  ///< capped at 200 entries
  std::size_t total_hits = 0;
  bool clean() const { return total_hits == 0; }
};

/// Diagnostic for sampling-pathology: whenever two eigenvalues of A share a
/// real part (within tol) but differ in imaginary part, cumulative sampling
/// intervals equal to a multiple of 2*pi/|Im difference| can alias those
/// modes together. Randomized schedules avoid these sets almost surely; this
/// check reports any interval that lands within tol of one.
inline PathologicalReport check_pathological(const Eigen::MatrixXd& A,
                                             const SamplingSchedule& schedule,
                                             double tol = 1e-9) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericalError("check_pathological: eigendecomposition failed");
  const Eigen::VectorXcd ev = es.eigenvalues();
  const Eigen::Index n = ev.size();
  std::vector<std::pair<std::pair<int, int>, double>> beats;  // ((a,b), period)
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const std::complex<double> d = ev(a) - ev(b);
      if (std::abs(d.real()) < tol && std::abs(d.imag()) > tol)
        beats.push_back({{int(a), int(b)}, 2.0 * M_PI / std::abs(d.imag())});
    }
  }
  PathologicalReport report;
  if (beats.empty()) return report;
  for (int i = 0; i < schedule.m(); ++i) {
    const auto& ts = schedule.times[i];
    for (std::size_t l = 0; l < ts.size(); ++l) {
      for (std::size_t k = l + 1; k < ts.size(); ++k) {
        const double tau = ts[k] - ts[l];
        for (const auto& beat : beats) {
          const long cyc = std::lround(tau / beat.second);
          if (cyc >= 1 && std::abs(tau - double(cyc) * beat.second) < tol) {
            ++report.total_hits;
            if (report.hits.size() < 200)
              report.hits.push_back({i, ts[l], ts[k], tau, beat.first.first,
                                     beat.first.second, cyc, beat.second});
          }
        }
      }
    }
  }
  return report;
}

/// CSV dump of the merged grid: grid_index, time, mask bits as a '0'/'1'
/// string with sensor 1 leftmost. 17 significant digits keep reruns
/// byte-identical.
inline void write_schedule_csv(std::ostream& out, const SamplingSchedule& schedule,
                               double tie_tol = 1e-9) {
  const MergedGrid grid = merge_schedule(schedule, tie_tol);
  out << "grid_index,time,sensor_mask\n";
  char buf[32];
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", grid.times[k]);
    out << k << ',' << buf << ',';
    for (std::uint8_t bit : grid.masks[k]) out << (bit ? '1' : '0');
    out << '\n';
  }
}

}  // namespace sase
