#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdyn/device.hpp"
#include "qdyn/errors.hpp"
#include "qdyn/mpdo.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/timeline.hpp"
#include "qdyn/trajectory.hpp"
#include "qdyn/units.hpp"

namespace qdyn {

// Second-order (Strang) splitting of the Liouvillian into one-site dissipative/detuning
// propagators D and diagonal coupling phases Z: D(h/2) Z(h) D(h) Z(h) ... D(h/2).
// The qubit-parity term commutes with every other term, so it is applied exactly once
// per gate-free segment.
struct TrotterPlan {
  double dt = 0.05;  // us
  int order = 2;
  // When set, every breakpoint must fall on a multiple of dt; otherwise segments between
  // breakpoints are split into equal steps no longer than dt.
  bool strict_alignment = false;
};

inline constexpr std::size_t kDefaultMaxBond = 64;
inline constexpr double kDefaultTruncEps = 1e-12;

namespace detail {

using cplx = std::complex<double>;

// exp(h L_i) for the single-qubit part: relaxation, heating, dephasing and the detuning
// Delta, in the local basis a = 2s + s'.
inline Eigen::Matrix4cd qubit_local_propagator(const QubitParams& q, double h) {
  const Rates r = lindblad_rates(q);
  const double gamma = r.g0 + r.g1;
  const double omega = angular(q.delta);
  const double e = std::exp(-gamma * h);
  const double p1_inf = gamma > 0 ? r.g1 / gamma : 0.0;
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  m(3, 0) = (1 - e) * p1_inf;
  m(3, 3) = e + (1 - e) * p1_inf;
  m(0, 0) = 1.0 - m(3, 0);
  m(0, 3) = 1.0 - m(3, 3);
  const cplx c01 = std::exp(cplx(-(0.5 * gamma + 2 * r.g2) * h, omega * h));
  m(1, 1) = c01;
  m(2, 2) = std::conj(c01);
  return m;
}

// rho -> X rho X maps |s><s'| to |1-s><1-s'|.
inline Eigen::Matrix4cd x_superop() {
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  for (int a = 0; a < 4; ++a) m(3 - a, a) = 1;
  return m;
}

// exp(-i tau [nu z (1-sz)/2, .]) on (qubit, parity), indexed a_q * 4 + a_p. Parity
// coherences never occur, so their entries are left at 1.
inline std::array<cplx, 16> parity_phases(double nu_hz, double tau) {
  std::array<cplx, 16> p;
  p.fill(1);
  const double w = angular(nu_hz);
  for (int s = 0; s < 2; ++s)
    for (int sp = 0; sp < 2; ++sp)
      for (int par = 0; par < 2; ++par) {
        const double z = par == 0 ? 1.0 : -1.0;
        p[(2 * s + sp) * 4 + 3 * par] = std::exp(cplx(0, -tau * w * z * (s - sp)));
      }
  return p;
}

// ZZ coupling phases exp(-i tau 2 zeta (s_i s_j - s_i' s_j')), indexed a_i * 4 + a_j.
inline std::array<cplx, 16> coupling_phases(double zeta_hz, double tau) {
  std::array<cplx, 16> p;
  const double w = 2 * angular(zeta_hz);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const int s = a >> 1, sp = a & 1, u = b >> 1, up = b & 1;
      p[a * 4 + b] = std::exp(cplx(0, -tau * w * (s * u - sp * up)));
    }
  return p;
}

// Controlled-Z superoperator: sign (-1)^(s_i s_j + s_i' s_j').
inline std::array<cplx, 16> cz_phases() {
  std::array<cplx, 16> p;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const int s = a >> 1, sp = a & 1, u = b >> 1, up = b & 1;
      p[a * 4 + b] = ((s * u + sp * up) % 2) ? -1.0 : 1.0;
    }
  return p;
}

// Group phases on (q_i, p_i, q_{i+1}) from an optional parity gate and optional coupling.
inline std::array<cplx, 64> group_phases(const std::array<cplx, 16>* nu, const std::array<cplx, 16>* zz) {
  std::array<cplx, 64> p;
  for (int a0 = 0; a0 < 4; ++a0)
    for (int a1 = 0; a1 < 4; ++a1)
      for (int a2 = 0; a2 < 4; ++a2) {
        cplx v = 1;
        if (nu) v *= (*nu)[a0 * 4 + a1];
        if (zz) v *= (*zz)[a0 * 4 + a2];
        p[a0 * 16 + a1 * 4 + a2] = v;
      }
  return p;
}

struct CouplingLayout {
  std::vector<double> next_zeta;  // zeta of edge (i, i+1), NaN when absent
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> long_range;
};

inline CouplingLayout coupling_layout(const DeviceModel& device) {
  CouplingLayout c;
  c.next_zeta.assign(device.size(), std::nan(""));
  for (const auto& e : device.edges()) {
    std::size_t a = e.edge.first, b = e.edge.second;
    if (a > b) std::swap(a, b);
    if (e.zeta == 0.0) continue;
    if (b == a + 1) c.next_zeta[a] = e.zeta;
    else c.long_range.push_back({{a, b}, e.zeta});
  }
  return c;
}

}  // namespace detail

// Product state over interleaved qubit and parity sites.
inline MpdoState mpdo_product_state(std::span<const BlochVector> bloch, std::span<const double> even_fractions,
                                    MpdoState::Truncation trunc = {}) {
  if (bloch.empty()) throw ValidationError("product_state: need at least one qubit");
  if (bloch.size() != even_fractions.size())
    throw ValidationError("product_state: one even-parity fraction per qubit required");
  std::vector<Eigen::Vector4cd> sites;
  const std::complex<double> i(0, 1);
  for (std::size_t q = 0; q < bloch.size(); ++q) {
    const auto& b = bloch[q];
    validate(b, "bloch[" + std::to_string(q) + "]");
    const double f = even_fractions[q];
    if (!(f >= 0 && f <= 1)) throw ValidationError("even_fraction[" + std::to_string(q) + "]: must lie in [0, 1]");
    sites.emplace_back(0.5 * (1 + b.z), 0.5 * (b.x - i * b.y), 0.5 * (b.x + i * b.y), 0.5 * (1 - b.z));
    sites.emplace_back(f, 0, 0, 1 - f);
  }
  return MpdoState::product(sites, trunc);
}

inline MpdoState mpdo_product_state(const DeviceModel& device, std::span<const BlochVector> bloch,
                                    MpdoState::Truncation trunc = {}) {
  if (bloch.size() != device.size()) throw ValidationError("product_state: one Bloch vector per qubit required");
  std::vector<double> b;
  for (const auto& q : device.qubits()) b.push_back(q.even_fraction);
  return mpdo_product_state(bloch, b, trunc);
}

inline void apply_gate(MpdoState& state, const Gate& g) {
  const std::size_t n = state.num_qubits();
  if (g.q0 >= n || (g.kind == GateKind::CZ && g.q1 >= n)) throw ValidationError("apply_gate: qubit index out of range");
  if (g.kind == GateKind::X) {
    state.apply_one_site(2 * g.q0, detail::x_superop(), true);
    return;
  }
  if (g.q0 == g.q1) throw ValidationError("apply_gate: CZ needs two distinct qubits");
  state.apply_qubit_pair_diag(g.q0, g.q1, detail::cz_phases());
}

// CZ over every edge applied to |+>^N, with parity sites diag(b, 1-b).
inline MpdoState mpdo_graph_state(const DeviceModel& device, MpdoState::Truncation trunc = {}) {
  std::vector<BlochVector> plus(device.size(), BlochVector{1, 0, 0});
  MpdoState s = mpdo_product_state(device, plus, {std::max<std::size_t>(trunc.max_bond, 256), 1e-14});
  for (const auto& layer : cz_layers(device))
    for (const auto& g : layer) apply_gate(s, g);
  s.set_truncation(trunc);
  return s;
}

// Reference operator for Hilbert-Schmidt overlaps: parity sites replaced by the trace
// vector, valid when parity is uncorrelated with the qubits (any prepared state).
inline MpdoState traced_parity_reference(const MpdoState& state) {
  MpdoState out = state;
  out.replace_parity_with_trace();
  return out;
}

// Hilbert-Schmidt overlap with the ideal graph state |g><g| (parity traced).
inline MpdoState graph_reference(const DeviceModel& device) {
  std::vector<BlochVector> plus(device.size(), BlochVector{1, 0, 0});
  std::vector<double> ones(device.size(), 1.0);
  MpdoState s = mpdo_product_state(plus, ones, {1024, 1e-14});
  for (const auto& layer : cz_layers(device))
    for (const auto& g : layer) apply_gate(s, g);
  s.replace_parity_with_trace();
  return s;
}

namespace detail {

class TrotterStepper {
 public:
  TrotterStepper(const DeviceModel& device, double h, double tau) : layout_(coupling_layout(device)) {
    const std::size_t n = device.size();
    for (std::size_t i = 0; i < n; ++i) {
      half_.push_back(qubit_local_propagator(device.qubit(i), 0.5 * h));
      full_.push_back(qubit_local_propagator(device.qubit(i), h));
      nu_.push_back(parity_phases(device.qubit(i).nu, tau));
    }
    for (std::size_t i = 0; i + 1 < n; ++i)
      zz_.push_back(std::isnan(layout_.next_zeta[i]) ? std::array<cplx, 16>{} : coupling_phases(layout_.next_zeta[i], h));
    for (const auto& [edge, zeta] : layout_.long_range) long_.push_back(coupling_phases(zeta, h));
  }

  // One D Z layer pair; the first step of a segment uses D(h/2) and folds in the parity gate.
  void step(MpdoState& s, bool first) const {
    const auto& d = first ? half_ : full_;
    const std::size_t n = s.num_qubits();
    const std::size_t last = 2 * n - 2;
    const bool rightward = s.center() != last || n == 1;
    if (rightward && s.center() != 0) s.move_center(0);

    if (rightward) {
      s.apply_one_site(0, d[0]);
      for (std::size_t i = 0; i + 1 < n; ++i) group(s, i, d[i + 1], first, MpdoState::Direction::right);
      if (first) s.apply_two_site_diag(last, nu_[n - 1], MpdoState::Direction::left);
    } else {
      s.apply_one_site(last, d[n - 1]);
      if (first) s.apply_two_site_diag(last, nu_[n - 1], MpdoState::Direction::left);
      for (std::size_t i = n - 1; i-- > 0;) group(s, i, d[i], first, MpdoState::Direction::left);
    }
    for (std::size_t k = 0; k < layout_.long_range.size(); ++k) {
      const auto [a, b] = layout_.long_range[k].first;
      s.route_diag(2 * a, 2 * b, long_[k]);
    }
  }

  // Closing D(h/2), swept from whichever end holds the centre.
  void finish(MpdoState& s) const {
    const std::size_t n = s.num_qubits();
    if (s.center() <= n - 1) {
      for (std::size_t i = 0; i < n; ++i) s.apply_one_site(2 * i, half_[i]);
    } else {
      for (std::size_t i = n; i-- > 0;) s.apply_one_site(2 * i, half_[i]);
    }
  }

 private:
  // Group (q_i, p_i, q_{i+1}); `d` is the pending one-site propagator of the site the
  // centre moves onto.
  void group(MpdoState& s, std::size_t i, const Eigen::Matrix4cd& d, bool first, MpdoState::Direction dir) const {
    const bool coupled = !std::isnan(layout_.next_zeta[i]);
    const std::size_t target = dir == MpdoState::Direction::right ? 2 * i + 2 : 2 * i;
    if (!coupled && !first) {
      s.apply_one_site(target, d);
      return;
    }
    const auto phases = group_phases(first ? &nu_[i] : nullptr, coupled ? &zz_[i] : nullptr);
    s.apply_three_site_diag(2 * i, phases, dir, &d);
  }

  CouplingLayout layout_;
  std::vector<Eigen::Matrix4cd> half_, full_;
  std::vector<std::array<cplx, 16>> nu_, zz_, long_;
};

inline bool on_grid(double t, double dt) {
  const double k = t / dt;
  return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
}

}  // namespace detail

// Trotterised Lindblad evolution of the interleaved qubit/parity operator. Gates fire at
// their event times before any record at the same instant.
inline Trajectory evolve_mpdo(const DeviceModel& device, const MpdoState& initial, std::span<const double> times,
                              const PulseSchedule& schedule, const TrotterPlan& plan, std::size_t max_bond,
                              double trunc_eps, const std::vector<Observable>& observables) {
  const std::size_t n = device.size();
  if (initial.num_qubits() != n) throw ValidationError("evolve_mpdo: state and device sizes differ");
  if (max_bond < 1) throw ValidationError("evolve_mpdo: max_bond must be >= 1");
  if (!(trunc_eps >= 0)) throw ValidationError("evolve_mpdo: trunc_eps must be >= 0");
  if (!(plan.dt > 0)) throw ValidationError("evolve_mpdo: dt must be > 0");
  if (plan.order != 2) throw ValidationError("evolve_mpdo: only second-order splitting is available");
  const Timeline timeline = build_timeline(times, schedule, n);
  if (plan.strict_alignment) {
    for (const auto& bp : timeline.points)
      if (!detail::on_grid(bp.time, plan.dt))
        throw ValidationError("evolve_mpdo: breakpoint at " + std::to_string(bp.time) +
                              " us is not aligned to dt = " + std::to_string(plan.dt) + " us");
  }

  bool want_graph = false, want_initial = false;
  for (const auto& o : observables) {
    if (o.kind == Observable::Kind::pauli && o.pauli.size() != n)
      throw ValidationError("observable '" + o.name + "': length differs from qubit count");
    want_graph |= o.kind == Observable::Kind::graph_fidelity;
    want_initial |= o.kind == Observable::Kind::initial_overlap;
  }
  const MpdoState graph = want_graph ? graph_reference(device) : MpdoState{};
  const MpdoState init_ref = want_initial ? traced_parity_reference(initial) : MpdoState{};

  Trajectory tr;
  tr.times.assign(times.begin(), times.end());
  for (const auto& o : observables) tr.names.push_back(o.name);
  tr.values.assign(times.size(), std::vector<double>(observables.size(), 0.0));
  tr.trace.assign(times.size(), 0.0);
  tr.max_bond.assign(times.size(), 0.0);
  tr.trunc_weight.assign(times.size(), 0.0);

  MpdoState state = initial;
  state.set_truncation({max_bond, trunc_eps});
  double t = 0.0;
  for (const auto& bp : timeline.points) {
    const double tau = bp.time - t;
    const std::size_t steps = segment_steps(tau, plan.dt);
    if (steps > 0) {
      const double h = tau / static_cast<double>(steps);
      const detail::TrotterStepper stepper(device, h, tau);
      for (std::size_t k = 0; k < steps; ++k) stepper.step(state, k == 0);
      stepper.finish(state);
    }
    t = bp.time;
    for (std::size_t q : bp.x_gates) apply_gate(state, x_gate(q));
    for (std::size_t r : bp.records) {
      for (std::size_t o = 0; o < observables.size(); ++o) {
        const auto& obs = observables[o];
        double v = 0.0;
        switch (obs.kind) {
          case Observable::Kind::pauli: v = state.expect(obs.pauli).real(); break;
          case Observable::Kind::graph_fidelity: v = graph.overlap(state).real(); break;
          case Observable::Kind::initial_overlap: v = init_ref.overlap(state).real(); break;
        }
        tr.values[r][o] = v;
      }
      tr.trace[r] = state.trace().real();
      tr.max_bond[r] = static_cast<double>(state.max_bond_reached());
      tr.trunc_weight[r] = state.truncation_weight();
    }
  }
  return tr;
}

inline Trajectory evolve_mpdo(const DeviceModel& device, const MpdoState& initial, std::span<const double> times,
                              const PulseSchedule& schedule, const TrotterPlan& plan,
                              const std::vector<Observable>& observables) {
  return evolve_mpdo(device, initial, times, schedule, plan, kDefaultMaxBond, kDefaultTruncEps, observables);
}

// Inputs shared by every run of a convergence sweep.
struct SweepScenario {
  MpdoState initial;
  std::vector<double> times;
  PulseSchedule schedule;
  std::vector<Observable> observables;
  double trunc_eps = kDefaultTruncEps;
};

struct SweepRow {
  std::string axis;  // "bond" or "dt"
  double from = 0.0;
  double to = 0.0;
  double max_delta = 0.0;
};

struct ConvergenceReport {
  std::vector<SweepRow> rows;
  bool converged = false;
};

inline double max_abs_delta(const Trajectory& a, const Trajectory& b) {
  if (a.values.size() != b.values.size()) throw ValidationError("compare: record counts differ");
  double m = 0.0;
  for (std::size_t r = 0; r < a.values.size(); ++r) {
    if (a.values[r].size() != b.values[r].size()) throw ValidationError("compare: observable counts differ");
    for (std::size_t o = 0; o < a.values[r].size(); ++o) m = std::max(m, std::abs(a.values[r][o] - b.values[r][o]));
  }
  return m;
}

// Bond refinement runs at the finest dt, dt refinement at the largest bond. Converged when
// the last delta along each axis is below `tolerance`.
inline ConvergenceReport convergence_sweep(const DeviceModel& device, const SweepScenario& scenario,
                                           std::vector<std::size_t> bonds, std::vector<double> dts,
                                           double tolerance = 1e-5) {
  if (bonds.size() < 2 || dts.size() < 2) throw ValidationError("convergence_sweep: need at least two bonds and two dt values");
  std::sort(bonds.begin(), bonds.end());
  std::sort(dts.begin(), dts.end(), std::greater<>());
  auto run = [&](std::size_t bond, double dt) {
    TrotterPlan plan;
    plan.dt = dt;
    return evolve_mpdo(device, scenario.initial, scenario.times, scenario.schedule, plan, bond, scenario.trunc_eps,
                       scenario.observables);
  };
  ConvergenceReport rep;
  Trajectory prev = run(bonds[0], dts.back());
  for (std::size_t k = 1; k < bonds.size(); ++k) {
    Trajectory cur = run(bonds[k], dts.back());
    rep.rows.push_back({"bond", static_cast<double>(bonds[k - 1]), static_cast<double>(bonds[k]), max_abs_delta(prev, cur)});
    prev = std::move(cur);
  }
  const bool bond_ok = rep.rows.back().max_delta < tolerance;
  prev = run(bonds.back(), dts[0]);
  for (std::size_t k = 1; k < dts.size(); ++k) {
    Trajectory cur = run(bonds.back(), dts[k]);
    rep.rows.push_back({"dt", dts[k - 1], dts[k], max_abs_delta(prev, cur)});
    prev = std::move(cur);
  }
  rep.converged = bond_ok && rep.rows.back().max_delta < tolerance;
  return rep;
}

}  // namespace qdyn
