#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qdyn/dense_state.hpp"
#include "qdyn/device.hpp"
#include "qdyn/errors.hpp"
#include "qdyn/mpdo.hpp"
#include "qdyn/pauli.hpp"
#include "qdyn/state.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/tensor_solver.hpp"
#include "qdyn/trajectory.hpp"

namespace qdyn {

// S_k = X_k times Z on every neighbour of k, in device qubit order.
inline std::vector<PauliString> stabilizer_set(const DeviceModel& device) {
  const std::size_t n = device.size();
  std::vector<PauliString> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<Pauli> ops(n, Pauli::I);
    ops[k] = Pauli::X;
    for (const auto& [j, zeta] : device.neighbors(k)) ops[j] = Pauli::Z;
    out.emplace_back(std::move(ops));
  }
  return out;
}

inline std::vector<Observable> stabilizer_observables(const DeviceModel& device) {
  std::vector<Observable> out;
  for (auto& s : stabilizer_set(device)) out.push_back(Observable::of(std::move(s)));
  return out;
}

inline double expect(const DenseState& state, const PauliString& p) { return expect_complex(state, p).real(); }
inline double expect(const MpdoState& state, const PauliString& p) { return state.expect(p).real(); }
inline double expect(const QuantumState& state, const PauliString& p) {
  return std::visit([&](const auto& s) { return expect(s, p); }, state);
}

// (1/N) sum (1 + <S_i>) / 2
inline double mean_projection(std::span<const double> stabilizers) {
  if (stabilizers.empty()) throw ValidationError("mean_projection: no stabilizer expectations");
  double acc = 0.0;
  for (double s : stabilizers) acc += 0.5 * (1.0 + s);
  return acc / static_cast<double>(stabilizers.size());
}

inline double graph_fidelity(const DenseState& state, const DeviceModel& device) {
  if (state.num_qubits() != device.size()) throw ValidationError("graph_fidelity: state and device sizes differ");
  return pure_fidelity(state, graph_state_vector(device));
}

inline double graph_fidelity(const MpdoState& state, const DeviceModel& device) {
  if (state.num_qubits() != device.size()) throw ValidationError("graph_fidelity: state and device sizes differ");
  return graph_reference(device).overlap(state).real();
}

inline double graph_fidelity(const QuantumState& state, const DeviceModel& device) {
  return std::visit([&](const auto& s) { return graph_fidelity(s, device); }, state);
}

// Two product bases that together cover every stabilizer: X on one colour class and Z on
// the other, then swapped. For a ring of even length these alternate XZXZ... and ZXZX...
inline std::vector<PauliString> measurement_settings(const DeviceModel& device) {
  Coloring c;
  try {
    c = two_coloring(device);
  } catch (const ValidationError&) {
    throw ValidationError("measurement_settings: graph has an odd cycle, two settings cannot cover the stabilizers");
  }
  const std::size_t n = device.size();
  std::vector<Pauli> first(n), second(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = c.assignment[i] == Color::A;
    first[i] = a ? Pauli::X : Pauli::Z;
    second[i] = a ? Pauli::Z : Pauli::X;
  }
  return {PauliString(std::move(first)), PauliString(std::move(second))};
}

// True when `setting` measures `p` directly: they agree on every qubit in the support of p.
inline bool setting_covers(const PauliString& setting, const PauliString& p) {
  if (setting.size() != p.size()) return false;
  for (std::size_t i : p.support())
    if (setting[i] != p[i]) return false;
  return true;
}

inline BlochVector bloch(const QuantumState& state, std::size_t qubit) {
  const std::size_t n = num_qubits(state);
  if (qubit >= n) throw ValidationError("bloch: qubit index out of range");
  return {expect(state, single_pauli(n, qubit, Pauli::X)), expect(state, single_pauli(n, qubit, Pauli::Y)),
          expect(state, single_pauli(n, qubit, Pauli::Z))};
}

// Probabilities of the positive X and Y outcomes in the rotating frame of the fit model.
// H = omega |1><1| rotates <Y> as -sin(omega t), while the fit model writes +sin, so the
// frame is mirrored in y.
struct RamseyProbabilities {
  double p_x = 0.0;
  double p_y = 0.0;
};

inline RamseyProbabilities ramsey_probabilities(const BlochVector& b) { return {0.5 * (1 + b.x), 0.5 * (1 - b.y)}; }

struct StabilizerReport {
  double time = 0.0;
  std::vector<double> expectations;
  double p_bar = 0.0;
  std::optional<double> fidelity;
};

// Reports for every record of a trajectory containing the stabilizer observables (and
// optionally a "fidelity" column).
inline std::vector<StabilizerReport> stabilizer_reports(const Trajectory& tr, const DeviceModel& device) {
  std::vector<std::size_t> cols;
  for (const auto& s : stabilizer_set(device)) cols.push_back(tr.index_of(s.sparse()));
  std::optional<std::size_t> fid;
  for (std::size_t k = 0; k < tr.names.size(); ++k)
    if (tr.names[k] == "fidelity") fid = k;
  std::vector<StabilizerReport> out;
  for (std::size_t r = 0; r < tr.times.size(); ++r) {
    StabilizerReport rep;
    rep.time = tr.times[r];
    for (std::size_t c : cols) rep.expectations.push_back(tr.values[r][c]);
    rep.p_bar = mean_projection(rep.expectations);
    if (fid) rep.fidelity = tr.values[r][*fid];
    out.push_back(std::move(rep));
  }
  return out;
}

inline void write_stabilizer_csv(std::ostream& out, const std::vector<StabilizerReport>& reports) {
  const std::size_t n = reports.empty() ? 0 : reports.front().expectations.size();
  const bool fid = !reports.empty() && reports.front().fidelity.has_value();
  out << "time_us";
  for (std::size_t k = 0; k < n; ++k) out << ",s_" << k;
  out << ",p_bar";
  if (fid) out << ",fidelity";
  out << '\n';
  for (const auto& r : reports) {
    out << format_double(r.time);
    for (double v : r.expectations) out << ',' << format_double(v);
    out << ',' << format_double(r.p_bar);
    if (fid) out << ',' << format_double(r.fidelity.value_or(0.0));
    out << '\n';
  }
}

}  // namespace qdyn
