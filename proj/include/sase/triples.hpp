#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sase/common.hpp"

namespace sase {

/// Where a transported sample came from: straight off the sensor, value or
/// time-stamp edited in transit, or fabricated outright.
enum class Provenance { kAuthentic, kModified, kGenerated };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kAuthentic: return "authentic";
    case Provenance::kModified: return "modified";
    case Provenance::kGenerated: return "generated";
  }
  return "unknown";
}

/// The unit of measurement transport (and of manipulation): which sensor,
/// when it claims to have sampled, and the scalar reading.
struct MeasurementTriple {
  int sensor = 0;  ///< 0-based internally; external formats are 1-based
  double time = 0.0;
  double value = 0.0;
  Provenance provenance = Provenance::kAuthentic;
};

/// An ordered batch of triples on their way to the estimator. `dropped`
/// logs samples removed in transit (denial-of-service) — they never reach
/// the estimator but tests and reports can still see them.
struct TripleStream {
  std::vector<MeasurementTriple> triples;
  std::vector<MeasurementTriple> dropped;
};

/// Tolerance for deciding that two time-stamps mean the same sampling
/// instant (matching manipulations to samples, collapsing grid ties).
inline constexpr double kTimeMatchTol = 1e-9;

/// Sort a stream into arrival order: ascending time, ties broken by sensor
/// index ascending, equal (time, sensor) pairs keeping their relative order.
/// Idempotent. Rejects negative time-stamps.
inline TripleStream reorder_buffer(const TripleStream& in) {
  for (const auto& tr : in.triples) {
    if (!(tr.time >= 0.0) || !std::isfinite(tr.time))
      throw StreamError("reorder_buffer: triple with negative or non-finite time-stamp " +
                        std::to_string(tr.time));
  }
  TripleStream out = in;
  std::stable_sort(out.triples.begin(), out.triples.end(),
                   [](const MeasurementTriple& a, const MeasurementTriple& b) {
                     if (a.time != b.time) return a.time < b.time;
                     return a.sensor < b.sensor;
                   });
  return out;
}

/// One estimation-grid step: the canonical step time, and per-sensor value
/// / availability / provenance. Inactive sensors hold y = 0 and provenance
/// kAuthentic by convention; only entries with mask set are meaningful.
struct GridStep {
  double time = 0.0;
  Eigen::VectorXd y;                   ///< length m, zero where inactive
  std::vector<std::uint8_t> mask;      ///< length m, 1 iff the sensor sampled here
  std::vector<Provenance> provenance;  ///< length m

  int active_count() const {
    int c = 0;
    for (auto b : mask) c += (b != 0);
    return c;
  }
};

/// The estimator's view of a stream: one step per distinct time (ties within
/// the tolerance collapsed), with steps[0] always the t = 0 origin carrying
/// no samples.
struct MeasurementGrid {
  int m = 0;
  std::vector<GridStep> steps;

  std::size_t total_samples() const {
    std::size_t s = 0;
    for (const auto& st : steps) s += std::size_t(st.active_count());
    return s;
  }
};

/// Build the estimation grid from a sorted stream. Triples with time-stamps
/// beyond the horizon are silently cut (a sample postponed past the horizon
/// is indistinguishable from one that never arrived). Each tie group's
/// canonical time is the earliest time in the group.
///
/// Errors: unsorted input (run the reorder buffer first), sensor index out
/// of range, a time-stamp indistinguishable from the origin, or one sensor
/// contributing two samples to a single grid step.
inline MeasurementGrid build_grid(const TripleStream& stream, int m,
                                  double horizon = std::numeric_limits<double>::infinity(),
                                  double tie_tol = kTimeMatchTol) {
  if (m < 1) throw std::invalid_argument("build_grid: need at least one sensor");
  MeasurementGrid grid;
  grid.m = m;
  grid.steps.push_back(GridStep{0.0, Eigen::VectorXd::Zero(m),
                                std::vector<std::uint8_t>(std::size_t(m), 0),
                                std::vector<Provenance>(std::size_t(m), Provenance::kAuthentic)});
  const auto& ts = stream.triples;
  double prev_time = -1.0;
  std::size_t a = 0;
  while (a < ts.size()) {
    const double t0 = ts[a].time;
    if (t0 < prev_time)
      throw StreamError("build_grid: stream is not time-ordered; run the reorder buffer first");
    prev_time = t0;
    if (t0 <= tie_tol)
      throw StreamError("build_grid: sample time indistinguishable from the grid origin");
    if (t0 > horizon + tie_tol) {  // beyond the horizon: this and everything later is cut
      for (std::size_t b = a + 1; b < ts.size(); ++b)
        if (ts[b].time < ts[a].time)
          throw StreamError("build_grid: stream is not time-ordered; run the reorder buffer first");
      break;
    }
    GridStep step;
    step.time = t0;
    step.y = Eigen::VectorXd::Zero(m);
    step.mask.assign(std::size_t(m), 0);
    step.provenance.assign(std::size_t(m), Provenance::kAuthentic);
    while (a < ts.size() && ts[a].time - t0 <= tie_tol) {
      const auto& tr = ts[a];
      if (tr.time < prev_time)
        throw StreamError("build_grid: stream is not time-ordered; run the reorder buffer first");
      prev_time = tr.time;
      if (tr.sensor < 0 || tr.sensor >= m)
        throw StreamError("build_grid: sensor index " + std::to_string(tr.sensor + 1) +
                          " outside 1.." + std::to_string(m));
      if (step.mask[std::size_t(tr.sensor)])
        throw StreamError("build_grid: sensor " + std::to_string(tr.sensor + 1) +
                          " delivered two samples at grid time " + std::to_string(t0));
      step.mask[std::size_t(tr.sensor)] = 1;
      step.y(tr.sensor) = tr.value;
      step.provenance[std::size_t(tr.sensor)] = tr.provenance;
      ++a;
    }
    grid.steps.push_back(std::move(step));
  }
  return grid;
}

}  // namespace sase
