#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sase {

/// Raised when a model violates its structural requirements: inconsistent
/// dimensions, indefinite noise covariances, an unobservable state, or an
/// eigenvalue with geometric multiplicity above one.
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a scenario or config document is malformed, references
/// nonexistent sensors/triples, or is internally inconsistent.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a measurement stream is structurally invalid (negative or
/// out-of-domain time-stamps, duplicate samples for one sensor at one grid
/// time).
struct StreamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a numeric computation produced non-finite or unusable values
/// (overflowing matrix exponential, indefinite factorization that cannot be
/// repaired, solver breakdown).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Accumulates non-fatal events along a run. Estimation keeps going when it
/// can; anything surprising (masked-rank deficiency, ill-conditioned V
/// blocks, covariance re-projection, gain repairs) lands here so callers and
/// reports can surface it.
class WarningLog {
 public:
  void add(std::string message) { entries_.push_back(std::move(message)); }
  const std::vector<std::string>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::string> entries_;
};

/// Convenience: record into an optional log (many functions accept a
/// nullable WarningLog pointer).
inline void warn(WarningLog* log, std::string message) {
  if (log != nullptr) log->add(std::move(message));
}

}  // namespace sase
