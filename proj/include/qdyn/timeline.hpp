#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qdyn/errors.hpp"
#include "qdyn/statecraft.hpp"

namespace qdyn {

// Instants at which integration must stop: gate events and record times, merged.
struct Breakpoint {
  double time = 0.0;
  std::vector<std::size_t> x_gates;  // applied first, in schedule order
  std::vector<std::size_t> records;  // record indices taken after the gates
};

struct Timeline {
  std::vector<Breakpoint> points;
};

inline bool same_instant(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

inline Timeline build_timeline(std::span<const double> times, const PulseSchedule& schedule, std::size_t num_qubits) {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k]) || times[k] < 0) throw ValidationError("times[" + std::to_string(k) + "]: must be >= 0");
    if (k > 0 && times[k] < times[k - 1]) throw ValidationError("times: must be sorted ascending");
  }
  const double horizon = times.empty() ? 0.0 : times.back();
  for (std::size_t k = 0; k < schedule.events.size(); ++k) {
    const auto& e = schedule.events[k];
    if (e.qubit >= num_qubits) throw ValidationError("schedule event " + std::to_string(k) + ": qubit out of range");
    if (!(e.time >= 0) || (e.time > horizon && !same_instant(e.time, horizon)))
      throw ValidationError("schedule event " + std::to_string(k) + " at " + std::to_string(e.time) +
                            " us lies outside [0, " + std::to_string(horizon) + "] us");
  }

  Timeline tl;
  auto point_at = [&](double t) -> Breakpoint& {
    auto it = std::lower_bound(tl.points.begin(), tl.points.end(), t,
                               [](const Breakpoint& b, double v) { return b.time < v && !same_instant(b.time, v); });
    if (it != tl.points.end() && same_instant(it->time, t)) return *it;
    return *tl.points.insert(it, Breakpoint{t, {}, {}});
  };
  std::vector<PulseEvent> events = schedule.events;
  std::stable_sort(events.begin(), events.end(), [](const PulseEvent& a, const PulseEvent& b) { return a.time < b.time; });
  for (const auto& e : events) point_at(e.time).x_gates.push_back(e.qubit);
  for (std::size_t r = 0; r < times.size(); ++r) point_at(times[r]).records.push_back(r);
  return tl;
}

// Equal sub-steps no longer than dt covering a segment; zero for an empty segment.
inline std::size_t segment_steps(double length, double dt) {
  if (length <= 0) return 0;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(length / dt - 1e-9)));
}

}  // namespace qdyn
