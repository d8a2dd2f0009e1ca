#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qdyn/device.hpp"
#include "qdyn/errors.hpp"
#include "qdyn/pauli.hpp"
#include "qdyn/statecraft.hpp"

namespace qdyn {

using cplx = std::complex<double>;

// Qubit-only density operator in the computational basis, qubit 0 most significant.
// Parity enters the dense solver through enumerated configurations, not through the state.
class DenseState {
 public:
  DenseState() = default;
  DenseState(std::size_t num_qubits, Eigen::MatrixXcd rho) : n_(num_qubits), rho_(std::move(rho)) {
    const Eigen::Index dim = Eigen::Index{1} << n_;
    if (rho_.rows() != dim || rho_.cols() != dim) throw ValidationError("dense state: matrix size does not match 2^N");
  }

  std::size_t num_qubits() const { return n_; }
  Eigen::Index dim() const { return rho_.rows(); }
  const Eigen::MatrixXcd& rho() const { return rho_; }
  Eigen::MatrixXcd& rho() { return rho_; }

  std::size_t mask(std::size_t qubit) const { return std::size_t{1} << (n_ - 1 - qubit); }

 private:
  std::size_t n_ = 0;
  Eigen::MatrixXcd rho_;
};

inline constexpr std::size_t kDenseQubitLimit = 12;

inline Eigen::Matrix2cd bloch_matrix(const BlochVector& b) {
  const cplx i(0, 1);
  Eigen::Matrix2cd m;
  m << 0.5 * (1 + b.z), 0.5 * (b.x - i * b.y), 0.5 * (b.x + i * b.y), 0.5 * (1 - b.z);
  return m;
}

inline DenseState dense_product_state(std::span<const BlochVector> bloch) {
  if (bloch.empty()) throw ValidationError("product_state: need at least one qubit");
  if (bloch.size() > kDenseQubitLimit) throw ValidationError("product_state: too many qubits for a dense state");
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Ones(1, 1);
  for (std::size_t i = 0; i < bloch.size(); ++i) {
    validate(bloch[i], "bloch[" + std::to_string(i) + "]");
    const Eigen::Matrix2cd m = bloch_matrix(bloch[i]);
    // rho (x) m: the earlier qubit stays most significant.
    Eigen::MatrixXcd ordered(rho.rows() * 2, rho.cols() * 2);
    for (Eigen::Index r = 0; r < rho.rows(); ++r)
      for (Eigen::Index c = 0; c < rho.cols(); ++c)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) ordered(2 * r + a, 2 * c + b) = rho(r, c) * m(a, b);
    rho = std::move(ordered);
  }
  return DenseState(bloch.size(), std::move(rho));
}

inline void apply_gate(DenseState& state, const Gate& g) {
  const std::size_t n = state.num_qubits();
  if (g.q0 >= n || (g.kind == GateKind::CZ && g.q1 >= n)) throw ValidationError("apply_gate: qubit index out of range");
  auto& rho = state.rho();
  const Eigen::Index dim = rho.rows();
  if (g.kind == GateKind::X) {
    const std::size_t m = state.mask(g.q0);
    Eigen::MatrixXcd out(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c)
      for (Eigen::Index r = 0; r < dim; ++r) out(r, c) = rho(static_cast<Eigen::Index>(r ^ m), static_cast<Eigen::Index>(c ^ m));
    rho = std::move(out);
    return;
  }
  if (g.q0 == g.q1) throw ValidationError("apply_gate: CZ needs two distinct qubits");
  const std::size_t m = state.mask(g.q0) | state.mask(g.q1);
  auto sign = [m](Eigen::Index s) { return (static_cast<std::size_t>(s) & m) == m ? -1.0 : 1.0; };
  for (Eigen::Index c = 0; c < dim; ++c)
    for (Eigen::Index r = 0; r < dim; ++r) rho(r, c) *= sign(r) * sign(c);
}

// tr(rho P), kept complex so callers can check that the imaginary part vanishes.
inline cplx expect_complex(const DenseState& state, const PauliString& p) {
  const std::size_t n = state.num_qubits();
  if (p.size() != n) throw ValidationError("expect: Pauli string length differs from qubit count");
  std::size_t xmask = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] == Pauli::X || p[i] == Pauli::Y) xmask |= state.mask(i);
  const auto& rho = state.rho();
  cplx total = 0;
  for (Eigen::Index s = 0; s < rho.rows(); ++s) {
    cplx phase = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const bool bit = (static_cast<std::size_t>(s) & state.mask(i)) != 0;
      if (p[i] == Pauli::Z) phase *= bit ? -1.0 : 1.0;
      else if (p[i] == Pauli::Y) phase *= bit ? cplx(0, -1) : cplx(0, 1);
    }
    total += rho(s, static_cast<Eigen::Index>(static_cast<std::size_t>(s) ^ xmask)) * phase;
  }
  return total;
}

// Amplitudes of the graph state: 2^(-N/2) times (-1) per edge with both ends in |1>.
inline Eigen::VectorXcd graph_state_vector(const DeviceModel& device) {
  const std::size_t n = device.size();
  if (n > kDenseQubitLimit + 8) throw ValidationError("graph_state_vector: too many qubits");
  const Eigen::Index dim = Eigen::Index{1} << n;
  Eigen::VectorXcd psi(dim);
  const double amp = std::pow(2.0, -0.5 * static_cast<double>(n));
  for (Eigen::Index s = 0; s < dim; ++s) {
    int sign = 1;
    for (const auto& e : device.edges()) {
      const bool a = (static_cast<std::size_t>(s) >> (n - 1 - e.edge.first)) & 1U;
      const bool b = (static_cast<std::size_t>(s) >> (n - 1 - e.edge.second)) & 1U;
      if (a && b) sign = -sign;
    }
    psi(s) = amp * sign;
  }
  return psi;
}

// <psi| rho |psi>
inline double pure_fidelity(const DenseState& state, const Eigen::VectorXcd& psi) {
  if (psi.size() != state.dim()) throw ValidationError("fidelity: vector size differs from state dimension");
  return psi.dot(state.rho() * psi).real();
}

// Largest deviations from Hermiticity, unit trace and positivity.
struct PhysicalityReport {
  double hermiticity_error = 0.0;
  double trace_error = 0.0;
  double min_eigenvalue = 0.0;
};

inline PhysicalityReport physicality(const DenseState& state) {
  PhysicalityReport r;
  const auto& rho = state.rho();
  r.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  r.trace_error = std::abs(rho.trace() - cplx(1, 0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  return r;
}

}  // namespace qdyn
