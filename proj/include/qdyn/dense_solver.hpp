#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "qdyn/dense_state.hpp"
#include "qdyn/device.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/timeline.hpp"
#include "qdyn/trajectory.hpp"

namespace qdyn {

// Per-qubit charge parity: +1 even (frequency Delta + nu), -1 odd (Delta - nu).
struct ParityConfig {
  std::vector<int> signs;
};

// Energies (rad/us) of every computational basis state for one parity configuration.
inline Eigen::VectorXd hamiltonian_diagonal(const DeviceModel& device, const ParityConfig& parity) {
  const std::size_t n = device.size();
  if (parity.signs.size() != n) throw ValidationError("hamiltonian_diagonal: parity length differs from qubit count");
  if (n > kDenseQubitLimit) throw ValidationError("hamiltonian_diagonal: too many qubits for dense storage");
  std::vector<double> omega(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = device.qubit(i);
    omega[i] = angular(q.delta + parity.signs[i] * q.nu);
  }
  const Eigen::Index dim = Eigen::Index{1} << n;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index s = 0; s < dim; ++s) {
    auto bit = [&](std::size_t i) { return (static_cast<std::size_t>(s) >> (n - 1 - i)) & 1U; };
    double v = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (bit(i)) v += omega[i];
    for (const auto& c : device.edges())
      if (bit(c.edge.first) && bit(c.edge.second)) v += 2.0 * angular(c.zeta);
    e(s) = v;
  }
  return e;
}

// Liouvillian for one parity configuration, split into an elementwise part
// (Hamiltonian phases, anticommutator decay, dephasing) and per-qubit jump terms.
class DenseLiouvillian {
 public:
  DenseLiouvillian(const DeviceModel& device, const ParityConfig& parity) : n_(device.size()) {
    const Eigen::VectorXd energy = hamiltonian_diagonal(device, parity);
    const Eigen::Index dim = energy.size();
    std::vector<Rates> rates;
    for (const auto& q : device.qubits()) rates.push_back(lindblad_rates(q));
    for (std::size_t i = 0; i < n_; ++i) {
      g0_.push_back(rates[i].g0);
      g1_.push_back(rates[i].g1);
    }
    elementwise_.resize(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
      for (Eigen::Index r = 0; r < dim; ++r) {
        double decay = 0;
        for (std::size_t i = 0; i < n_; ++i) {
          const int nr = static_cast<int>((static_cast<std::size_t>(r) >> (n_ - 1 - i)) & 1U);
          const int nc = static_cast<int>((static_cast<std::size_t>(c) >> (n_ - 1 - i)) & 1U);
          decay += 0.5 * rates[i].g0 * (nr + nc) + 0.5 * rates[i].g1 * ((1 - nr) + (1 - nc));
          if (nr != nc) decay += 2.0 * rates[i].g2;
        }
        elementwise_(r, c) = cplx(-decay, -(energy(r) - energy(c)));
      }
    }
  }

  // out = L(rho)
  void apply(const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) const {
    out = elementwise_.cwiseProduct(rho);
    const Eigen::Index dim = rho.rows();
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t m = std::size_t{1} << (n_ - 1 - i);
      if (g0_[i] != 0) {
        // sigma+ rho sigma-: population/coherence flows from bit 1 to bit 0 on both sides.
        for (Eigen::Index c = 0; c < dim; ++c) {
          if (static_cast<std::size_t>(c) & m) continue;
          for (Eigen::Index r = 0; r < dim; ++r) {
            if (static_cast<std::size_t>(r) & m) continue;
            out(r, c) += g0_[i] * rho(static_cast<Eigen::Index>(r | m), static_cast<Eigen::Index>(c | m));
          }
        }
      }
      if (g1_[i] != 0) {
        for (Eigen::Index c = 0; c < dim; ++c) {
          if (!(static_cast<std::size_t>(c) & m)) continue;
          for (Eigen::Index r = 0; r < dim; ++r) {
            if (!(static_cast<std::size_t>(r) & m)) continue;
            out(r, c) += g1_[i] * rho(static_cast<Eigen::Index>(r ^ m), static_cast<Eigen::Index>(c ^ m));
          }
        }
      }
    }
  }

 private:
  std::size_t n_;
  Eigen::MatrixXcd elementwise_;
  std::vector<double> g0_, g1_;
};

inline Eigen::MatrixXcd liouvillian_apply(const DeviceModel& device, const ParityConfig& parity, const Eigen::MatrixXcd& rho) {
  Eigen::MatrixXcd out;
  DenseLiouvillian(device, parity).apply(rho, out);
  return out;
}

enum class ParityMode { enumerate, sample };

struct DenseOptions {
  double dt = 0.05;  // us
  ParityMode parity = ParityMode::enumerate;
  std::size_t samples = 512;
  std::uint64_t seed = 0;
  bool keep_snapshots = false;
  std::size_t workers = 0;  // 0: hardware concurrency
};

inline constexpr std::size_t kDenseSolverQubitLimit = 10;

// Configurations with their weights: full enumeration (sorted by bit pattern, bit set = odd)
// or k seeded Bernoulli(b_i) draws with weight 1/k.
inline std::vector<std::pair<ParityConfig, double>> parity_configs(const DeviceModel& device, const DenseOptions& opt) {
  const std::size_t n = device.size();
  std::vector<std::pair<ParityConfig, double>> out;
  if (opt.parity == ParityMode::enumerate) {
    for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
      ParityConfig c;
      double w = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool odd = (bits >> (n - 1 - i)) & 1U;
        c.signs.push_back(odd ? -1 : 1);
        const double b = device.qubit(i).even_fraction;
        w *= odd ? 1.0 - b : b;
      }
      if (w > 0) out.emplace_back(std::move(c), w);
    }
    return out;
  }
  if (opt.samples == 0) throw ValidationError("parity sampling needs at least one sample");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < opt.samples; ++k) {
    ParityConfig c;
    for (std::size_t i = 0; i < n; ++i) c.signs.push_back(u(rng) < device.qubit(i).even_fraction ? 1 : -1);
    out.emplace_back(std::move(c), 1.0 / static_cast<double>(opt.samples));
  }
  return out;
}

namespace detail {

inline void rk4_step(const DenseLiouvillian& L, Eigen::MatrixXcd& rho, double h, Eigen::MatrixXcd (&k)[4],
                     Eigen::MatrixXcd& tmp) {
  L.apply(rho, k[0]);
  tmp = rho + 0.5 * h * k[0];
  L.apply(tmp, k[1]);
  tmp = rho + 0.5 * h * k[1];
  L.apply(tmp, k[2]);
  tmp = rho + h * k[2];
  L.apply(tmp, k[3]);
  rho += (h / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]);
}

struct DensePartial {
  std::vector<std::vector<double>> sum;    // [record][obs], weighted
  std::vector<std::vector<double>> sumsq;  // unweighted squares (sampling only)
  std::vector<double> trace;
  std::vector<Eigen::MatrixXcd> snapshots;
};

}  // namespace detail

// Exact (to RK4 accuracy) Lindblad evolution averaged over charge-parity configurations.
// Gates fire at their event times before any record at the same instant.
inline Trajectory evolve_dense(const DeviceModel& device, const DenseState& initial, std::span<const double> times,
                               const PulseSchedule& schedule, const DenseOptions& opt,
                               const std::vector<Observable>& observables) {
  const std::size_t n = device.size();
  if (n > kDenseSolverQubitLimit)
    throw ValidationError("evolve_dense: " + std::to_string(n) + " qubits exceeds the dense limit of " +
                          std::to_string(kDenseSolverQubitLimit));
  if (initial.num_qubits() != n) throw ValidationError("evolve_dense: state and device sizes differ");
  if (!(opt.dt > 0)) throw ValidationError("evolve_dense: dt must be > 0");
  const Timeline timeline = build_timeline(times, schedule, n);

  Eigen::VectorXcd graph;
  for (const auto& o : observables) {
    if (o.kind == Observable::Kind::pauli && o.pauli.size() != n)
      throw ValidationError("observable '" + o.name + "': length differs from qubit count");
    if (o.kind == Observable::Kind::graph_fidelity && graph.size() == 0) graph = graph_state_vector(device);
  }

  const auto configs = parity_configs(device, opt);
  const std::size_t records = times.size();
  const std::size_t nobs = observables.size();
  const bool sampling = opt.parity == ParityMode::sample;

  auto evaluate = [&](const DenseState& s, std::size_t k) -> double {
    const auto& o = observables[k];
    switch (o.kind) {
      case Observable::Kind::pauli: return expect_complex(s, o.pauli).real();
      case Observable::Kind::graph_fidelity: return pure_fidelity(s, graph);
      case Observable::Kind::initial_overlap: return (s.rho().cwiseProduct(initial.rho().transpose())).sum().real();
    }
    return 0.0;
  };

  auto run_chunk = [&](std::size_t begin, std::size_t end) {
    detail::DensePartial part;
    part.sum.assign(records, std::vector<double>(nobs, 0.0));
    part.sumsq.assign(records, std::vector<double>(nobs, 0.0));
    part.trace.assign(records, 0.0);
    if (opt.keep_snapshots) part.snapshots.assign(records, Eigen::MatrixXcd::Zero(initial.dim(), initial.dim()));
    Eigen::MatrixXcd k[4], tmp;
    for (std::size_t ci = begin; ci < end; ++ci) {
      const auto& [config, weight] = configs[ci];
      const DenseLiouvillian L(device, config);
      DenseState state = initial;
      double t = 0.0;
      for (const auto& bp : timeline.points) {
        const std::size_t steps = segment_steps(bp.time - t, opt.dt);
        const double h = steps ? (bp.time - t) / static_cast<double>(steps) : 0.0;
        for (std::size_t s = 0; s < steps; ++s) detail::rk4_step(L, state.rho(), h, k, tmp);
        t = bp.time;
        for (std::size_t q : bp.x_gates) apply_gate(state, x_gate(q));
        for (std::size_t r : bp.records) {
          for (std::size_t o = 0; o < nobs; ++o) {
            const double v = evaluate(state, o);
            part.sum[r][o] += weight * v;
            if (sampling) part.sumsq[r][o] += v * v;
          }
          part.trace[r] += weight * state.rho().trace().real();
          if (opt.keep_snapshots) part.snapshots[r] += weight * state.rho();
        }
      }
    }
    return part;
  };

  // Fixed-size chunks reduced in order: results do not depend on the worker count.
  constexpr std::size_t kChunk = 8;
  const std::size_t nchunks = (configs.size() + kChunk - 1) / kChunk;
  std::vector<detail::DensePartial> partials(nchunks);
  std::size_t workers = opt.workers ? opt.workers : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, nchunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) partials[c] = run_chunk(c * kChunk, std::min(configs.size(), (c + 1) * kChunk));
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t c = w; c < nchunks; c += workers)
          partials[c] = run_chunk(c * kChunk, std::min(configs.size(), (c + 1) * kChunk));
      }));
    }
    for (auto& j : jobs) j.get();
  }

  Trajectory tr;
  tr.times.assign(times.begin(), times.end());
  for (const auto& o : observables) tr.names.push_back(o.name);
  tr.values.assign(records, std::vector<double>(nobs, 0.0));
  tr.trace.assign(records, 0.0);
  std::vector<std::vector<double>> sumsq(records, std::vector<double>(nobs, 0.0));
  if (opt.keep_snapshots) tr.snapshots.assign(records, Eigen::MatrixXcd::Zero(initial.dim(), initial.dim()));
  for (const auto& p : partials) {
    for (std::size_t r = 0; r < records; ++r) {
      for (std::size_t o = 0; o < nobs; ++o) {
        tr.values[r][o] += p.sum[r][o];
        sumsq[r][o] += p.sumsq[r][o];
      }
      tr.trace[r] += p.trace[r];
      if (opt.keep_snapshots) tr.snapshots[r] += p.snapshots[r];
    }
  }
  if (sampling) {
    const double k = static_cast<double>(configs.size());
    tr.std_errors.assign(records, std::vector<double>(nobs, 0.0));
    if (k > 1) {
      for (std::size_t r = 0; r < records; ++r)
        for (std::size_t o = 0; o < nobs; ++o) {
          const double mean = tr.values[r][o];
          const double var = std::max(0.0, (sumsq[r][o] - k * mean * mean) / (k - 1));
          tr.std_errors[r][o] = std::sqrt(var / k);
        }
    }
  }
  return tr;
}

}  // namespace qdyn
