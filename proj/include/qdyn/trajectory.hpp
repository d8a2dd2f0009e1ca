#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qdyn/errors.hpp"
#include "qdyn/pauli.hpp"

namespace qdyn {

// A quantity recorded along a trajectory. All kinds are linear in the density operator,
// so parity mixtures can be averaged record by record.
struct Observable {
  enum class Kind { pauli, graph_fidelity, initial_overlap };

  Kind kind = Kind::pauli;
  PauliString pauli;
  std::string name;

  static Observable of(PauliString p) {
    Observable o;
    o.name = p.sparse();
    o.pauli = std::move(p);
    return o;
  }
  static Observable graph_fidelity() { return {Kind::graph_fidelity, {}, "fidelity"}; }
  // tr(rho(t) rho(0)); the state fidelity when the initial state is pure.
  static Observable initial_overlap() { return {Kind::initial_overlap, {}, "initial_overlap"}; }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;      // [record][observable]
  std::vector<std::vector<double>> std_errors;  // sampled parity only; same shape as values
  std::vector<double> trace;
  std::vector<double> max_bond;      // tensor solver only
  std::vector<double> trunc_weight;  // tensor solver only
  std::vector<Eigen::MatrixXcd> snapshots;  // dense solver, on request

  std::size_t index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return k;
    throw ValidationError("trajectory: no observable named '" + name + "'");
  }

  std::vector<double> column(const std::string& name) const {
    const std::size_t k = index_of(name);
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& row : values) out.push_back(row[k]);
    return out;
  }
};

// 17 significant digits round-trip doubles exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const Trajectory& tr) {
  out << "time_us";
  for (const auto& n : tr.names) out << ',' << n;
  if (!tr.std_errors.empty())
    for (const auto& n : tr.names) out << ",stderr_" << n;
  if (!tr.max_bond.empty()) out << ",max_bond,trunc_weight";
  out << '\n';
  for (std::size_t r = 0; r < tr.times.size(); ++r) {
    out << format_double(tr.times[r]);
    for (double v : tr.values[r]) out << ',' << format_double(v);
    if (!tr.std_errors.empty())
      for (double v : tr.std_errors[r]) out << ',' << format_double(v);
    if (!tr.max_bond.empty()) out << ',' << format_double(tr.max_bond[r]) << ',' << format_double(tr.trunc_weight[r]);
    out << '\n';
  }
}

// Snapshot dump layout (little-endian host order):
//   char[8] "QDYNRHO1"; uint32 num_qubits; uint32 count;
//   then per snapshot: double time_us, followed by 4^n (re, im) double pairs, row-major.
inline void write_snapshots(const std::string& path, const Trajectory& tr, std::uint32_t num_qubits) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write("QDYNRHO1", 8);
  const std::uint32_t count = static_cast<std::uint32_t>(tr.snapshots.size());
  out.write(reinterpret_cast<const char*>(&num_qubits), sizeof num_qubits);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
    const double t = tr.times.at(k);
    out.write(reinterpret_cast<const char*>(&t), sizeof t);
    const auto& m = tr.snapshots[k];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double re = m(r, c).real(), im = m(r, c).imag();
        out.write(reinterpret_cast<const char*>(&re), sizeof re);
        out.write(reinterpret_cast<const char*>(&im), sizeof im);
      }
  }
}

}  // namespace qdyn
