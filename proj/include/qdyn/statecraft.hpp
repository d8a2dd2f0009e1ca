#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdyn/device.hpp"
#include "qdyn/errors.hpp"

namespace qdyn {

struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double xy_norm() const { return std::hypot(x, y); }
};

inline void validate(const BlochVector& b, const std::string& path = "bloch") {
  if (!(std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.z)))
    throw ValidationError(path + ": components must be finite");
  if (b.x * b.x + b.y * b.y + b.z * b.z > 1.0 + 1e-12) throw ValidationError(path + ": Bloch norm exceeds 1");
}

enum class GateKind { X, CZ };

// Instantaneous gate. q1 is only meaningful for CZ.
struct Gate {
  GateKind kind = GateKind::X;
  std::size_t q0 = 0;
  std::size_t q1 = 0;
};

inline Gate x_gate(std::size_t q) { return {GateKind::X, q, q}; }
inline Gate cz_gate(std::size_t a, std::size_t b) { return {GateKind::CZ, a, b}; }

enum class Color : unsigned char { A, B };

struct Coloring {
  std::vector<Color> assignment;
};

// Breadth-first two-colouring, each component rooted at its lowest index with colour A.
inline Coloring two_coloring(const DeviceModel& device) {
  const std::size_t n = device.size();
  std::vector<int> color(n, -1);
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != -1) continue;
    color[root] = 0;
    std::deque<std::size_t> queue{root};
    while (!queue.empty()) {
      std::size_t v = queue.front();
      queue.pop_front();
      for (auto [w, z] : device.neighbors(v)) {
        if (color[w] == -1) {
          color[w] = 1 - color[v];
          queue.push_back(w);
        } else if (color[w] == color[v]) {
          throw ValidationError("two_coloring: graph is not bipartite (odd cycle through qubits " +
                                std::to_string(device.labels()[v]) + " and " + std::to_string(device.labels()[w]) + ")");
        }
      }
    }
  }
  Coloring c;
  for (int k : color) c.assignment.push_back(k == 0 ? Color::A : Color::B);
  return c;
}

inline bool is_valid_coloring(const DeviceModel& device, const Coloring& c) {
  if (c.assignment.size() != device.size()) return false;
  return std::all_of(device.edges().begin(), device.edges().end(), [&](const CouplingParams& e) {
    return c.assignment[e.edge.first] != c.assignment[e.edge.second];
  });
}

// Parallel CZ layers covering every edge once. Chains and rings are walked from qubit 0
// and alternate layers; an odd ring needs a third layer for its closing edge. General
// graphs use greedy edge colouring in file order.
inline std::vector<std::vector<Gate>> cz_layers(const DeviceModel& device) {
  std::vector<std::vector<Gate>> layers;
  auto place = [&](std::size_t a, std::size_t b, std::size_t preferred) {
    auto busy = [&](const std::vector<Gate>& layer) {
      return std::any_of(layer.begin(), layer.end(), [&](const Gate& g) {
        return g.q0 == a || g.q1 == a || g.q0 == b || g.q1 == b;
      });
    };
    std::size_t k = preferred;
    while (k < layers.size() && busy(layers[k])) ++k;
    if (k >= layers.size()) layers.resize(k + 1);
    layers[k].push_back(cz_gate(std::min(a, b), std::max(a, b)));
  };

  const auto kind = device.topology();
  if (kind == TopologyKind::general || device.edges().empty()) {
    for (const auto& e : device.edges()) place(e.edge.first, e.edge.second, 0);
    return layers;
  }
  // Walk the path or cycle.
  std::size_t start = 0;
  if (kind == TopologyKind::chain) {
    for (std::size_t i = 0; i < device.size(); ++i)
      if (device.neighbors(i).size() == 1) { start = i; break; }
  }
  std::size_t prev = device.size();
  std::size_t cur = start;
  for (std::size_t step = 0; step < device.edges().size(); ++step) {
    std::size_t next = device.size();
    for (auto [w, z] : device.neighbors(cur))
      if (w != prev) { next = w; break; }
    if (kind == TopologyKind::ring && step + 1 == device.edges().size()) next = start;
    place(cur, next, step % 2);
    prev = cur;
    cur = next;
  }
  return layers;
}

struct PulseEvent {
  double time = 0.0;  // us
  std::size_t qubit = 0;
  GateKind gate = GateKind::X;
};

struct PulseSchedule {
  std::vector<PulseEvent> events;
  double total_time = 0.0;  // us

  bool empty() const { return events.empty(); }
};

inline void validate(const PulseSchedule& s, std::size_t num_qubits) {
  std::vector<std::size_t> count(num_qubits, 0);
  double last = 0.0;
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    const auto& e = s.events[k];
    const std::string path = "events[" + std::to_string(k) + "]";
    if (!(e.time > 0 && e.time <= s.total_time * (1 + 1e-12)))
      throw ValidationError(path + ".time_us: must lie in (0, total_time]");
    if (e.time < last) throw ValidationError(path + ".time_us: events must be sorted");
    if (e.qubit >= num_qubits) throw ValidationError(path + ".qubit: index out of range");
    if (e.gate != GateKind::X) throw ValidationError(path + ".gate: schedules carry X gates only");
    last = e.time;
    ++count[e.qubit];
  }
  for (std::size_t q = 0; q < num_qubits; ++q)
    if (count[q] % 2 != 0) throw ValidationError("schedule: qubit " + std::to_string(q) + " receives an odd number of X gates");
}

// Staggered decoupling: colour A gets X at T/2 and T of every slice, colour B at T/4 and 3T/4.
inline PulseSchedule dd_schedule(const Coloring& coloring, double slice_us, std::size_t n_dd) {
  if (!(slice_us > 0)) throw ValidationError("dd_schedule: slice must be > 0");
  PulseSchedule s;
  s.total_time = static_cast<double>(n_dd) * slice_us;
  for (std::size_t k = 0; k < n_dd; ++k) {
    for (int quarter = 1; quarter <= 4; ++quarter) {
      const double t = slice_us * static_cast<double>(4 * k + quarter) / 4.0;
      const Color who = quarter % 2 == 0 ? Color::A : Color::B;
      for (std::size_t q = 0; q < coloring.assignment.size(); ++q)
        if (coloring.assignment[q] == who) s.events.push_back({t, q, GateKind::X});
    }
  }
  return s;
}

inline nlohmann::json schedule_to_json(const PulseSchedule& s) {
  nlohmann::json doc;
  doc["format"] = "qdyn-schedule/1";
  doc["total_time_us"] = s.total_time;
  doc["events"] = nlohmann::json::array();
  for (const auto& e : s.events) doc["events"].push_back({{"time_us", e.time}, {"qubit", e.qubit}, {"gate", "X"}});
  return doc;
}

inline PulseSchedule schedule_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("events") || !doc.at("events").is_array())
    throw ParseError("schedule: expected an object with an 'events' array");
  PulseSchedule s;
  s.total_time = doc.value("total_time_us", 0.0);
  for (std::size_t k = 0; k < doc.at("events").size(); ++k) {
    const auto& e = doc.at("events")[k];
    const std::string path = "events[" + std::to_string(k) + "]";
    if (!e.contains("time_us") || !e.at("time_us").is_number()) throw ParseError(path + ".time_us: required number");
    if (!e.contains("qubit") || !e.at("qubit").is_number_unsigned()) throw ParseError(path + ".qubit: required index");
    if (e.value("gate", std::string("X")) != "X") throw ParseError(path + ".gate: only X is supported");
    s.events.push_back({e.at("time_us").get<double>(), e.at("qubit").get<std::size_t>(), GateKind::X});
  }
  return s;
}

inline PulseSchedule load_schedule(const std::string& text) {
  try {
    return schedule_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("schedule: ") + e.what());
  }
}

}  // namespace qdyn
