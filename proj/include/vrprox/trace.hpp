#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vrprox/types.hpp"

namespace vrprox {

struct TraceRecord {
  int epoch = 0;
  Scalar passes = 0.0;  // cumulative gradient evaluations / n
  Scalar objective = 0.0;
  std::optional<Scalar> gap;  // objective minus reference objective, if any
  std::int64_t grad_evals = 0;
  Scalar wallclock_ms = 0.0;
};

struct RunTrace {
  std::vector<TraceRecord> records;
  Vector theta;
  bool diverged = false;
  std::string note;

  Scalar final_objective() const {
    return records.empty() ? std::numeric_limits<Scalar>::quiet_NaN()
                           : records.back().objective;
  }
  std::optional<Scalar> final_gap() const {
    return records.empty() ? std::nullopt : records.back().gap;
  }
};

/// Per-pass geometric decay factor of the gap: exp of the least-squares slope
/// of ln(gap) against passes over [pass_lo, pass_hi], skipping records whose
/// gap sits at or below the reference-precision floor. NaN when fewer than
/// two usable records fall in the window.
inline Scalar fit_decay_factor(const RunTrace& trace, Scalar pass_lo = 5.0, Scalar pass_hi = 50.0,
                               Scalar gap_floor = 1e-12) {
  std::vector<std::pair<Scalar, Scalar>> points;
  for (const auto& rec : trace.records) {
    if (!rec.gap.has_value()) continue;
    if (rec.passes < pass_lo || rec.passes > pass_hi) continue;
    if (!(*rec.gap > gap_floor)) continue;
    points.emplace_back(rec.passes, std::log(*rec.gap));
  }
  if (points.size() < 2) return std::numeric_limits<Scalar>::quiet_NaN();
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const Scalar m = static_cast<Scalar>(points.size());
  const Scalar denom = m * sxx - sx * sx;
  if (denom == 0.0) return std::numeric_limits<Scalar>::quiet_NaN();
  const Scalar slope = (m * sxy - sx * sy) / denom;
  return std::exp(slope);
}

}  // namespace vrprox
