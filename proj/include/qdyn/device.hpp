#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qdyn/errors.hpp"
#include "qdyn/units.hpp"

namespace qdyn {

// Per-qubit noise and frequency parameters. Times in us, frequencies cyclic (Hz).
struct QubitParams {
  double t1 = 0.0;
  double t2 = 0.0;
  double nu = 0.0;     // charge-parity splitting nu/2pi
  double delta = 0.0;  // frame detuning Delta/2pi
  double even_fraction = 0.5;
  double heating_fraction = 0.0;
};

// ZZ coupling zeta/2pi (Hz) on one edge.
struct CouplingParams {
  std::pair<std::size_t, std::size_t> edge;
  double zeta = 0.0;
};

enum class TopologyKind { chain, ring, general };

inline const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::chain: return "chain";
    case TopologyKind::ring: return "ring";
    case TopologyKind::general: return "general";
  }
  return "general";
}

// Lindblad rates in 1/us: relaxation g0, heating g1, dephasing g2.
struct Rates {
  double g0 = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
};

struct EffectiveMixture {
  std::vector<double> frequencies;  // rad/us
  std::vector<double> weights;
};

// Throws ValidationError naming `path` when an invariant fails.
inline void validate(const QubitParams& q, const std::string& path = "qubit") {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ValidationError(path + "." + field + ": " + why);
  };
  if (!std::isfinite(q.t1) || q.t1 <= 0) fail("t1", "must be > 0");
  if (!std::isfinite(q.t2) || q.t2 <= 0) fail("t2", "must be > 0");
  if (q.t2 > 2.0 * q.t1) fail("t2", "violates t2 <= 2*t1");
  if (!std::isfinite(q.nu) || q.nu < 0) fail("nu", "must be >= 0");
  if (!std::isfinite(q.delta)) fail("delta", "must be finite");
  if (!(q.even_fraction >= 0 && q.even_fraction <= 1)) fail("even_fraction", "must lie in [0,1]");
  if (!(q.heating_fraction >= 0 && q.heating_fraction < 1)) fail("heating_fraction", "must lie in [0,1)");
}

inline Rates lindblad_rates(const QubitParams& q) {
  Rates r;
  const double gamma = 1.0 / q.t1;
  r.g1 = q.heating_fraction * gamma;
  r.g0 = gamma - r.g1;
  r.g2 = 0.5 * (1.0 / q.t2 - 0.5 * gamma);
  if (r.g2 < 0) r.g2 = 0;  // only reachable through rounding at t2 == 2*t1
  return r;
}

class DeviceModel {
 public:
  DeviceModel() = default;

  // Validates every invariant; `labels` defaults to 0..N-1.
  DeviceModel(std::vector<QubitParams> qubits, std::vector<CouplingParams> edges,
              TopologyKind kind = TopologyKind::general, std::vector<int> labels = {})
      : qubits_(std::move(qubits)), edges_(std::move(edges)), kind_(kind), labels_(std::move(labels)) {
    if (labels_.empty()) {
      for (std::size_t i = 0; i < qubits_.size(); ++i) labels_.push_back(static_cast<int>(i));
    }
    check();
  }

  std::size_t size() const { return qubits_.size(); }
  const std::vector<QubitParams>& qubits() const { return qubits_; }
  const QubitParams& qubit(std::size_t i) const { return qubits_.at(i); }
  const std::vector<CouplingParams>& edges() const { return edges_; }
  TopologyKind topology() const { return kind_; }
  const std::vector<int>& labels() const { return labels_; }

  std::optional<std::size_t> index_of_label(int label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }

  // Neighbours of qubit i in ascending index order, with zeta/2pi in Hz.
  std::vector<std::pair<std::size_t, double>> neighbors(std::size_t i) const {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& e : edges_) {
      if (e.edge.first == i) out.emplace_back(e.edge.second, e.zeta);
      if (e.edge.second == i) out.emplace_back(e.edge.first, e.zeta);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool has_edge(std::size_t i, std::size_t j) const {
    return std::any_of(edges_.begin(), edges_.end(), [&](const CouplingParams& e) {
      return (e.edge.first == i && e.edge.second == j) || (e.edge.first == j && e.edge.second == i);
    });
  }

  // Copy with every qubit's parameters transformed by `fn`.
  template <class Fn>
  DeviceModel with_qubits(Fn&& fn) const {
    std::vector<QubitParams> q = qubits_;
    for (auto& p : q) fn(p);
    return DeviceModel(std::move(q), edges_, kind_, labels_);
  }

  DeviceModel with_edges(std::vector<CouplingParams> edges) const {
    return DeviceModel(qubits_, std::move(edges), kind_, labels_);
  }

 private:
  void check() const {
    const std::size_t n = qubits_.size();
    if (n == 0) throw ValidationError("qubits: device needs at least one qubit");
    if (labels_.size() != n) throw ValidationError("labels: size differs from qubit count");
    for (std::size_t i = 0; i < n; ++i) validate(qubits_[i], "qubits[" + std::to_string(i) + "]");
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (labels_[a] == labels_[b])
          throw ValidationError("labels: duplicate label " + std::to_string(labels_[a]));

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
    std::vector<std::size_t> degree(n, 0);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const std::string path = "edges[" + std::to_string(k) + "]";
      auto [i, j] = edges_[k].edge;
      if (i >= n || j >= n) throw ValidationError(path + ".qubits: index out of range");
      if (i == j) throw ValidationError(path + ".qubits: endpoints must differ");
      if (!std::isfinite(edges_[k].zeta)) throw ValidationError(path + ".zeta: must be finite");
      auto key = std::minmax(i, j);
      if (!seen.emplace(std::pair{key.first, key.second}, k).second)
        throw ValidationError(path + ".qubits: duplicate edge (" + std::to_string(labels_[i]) + "," +
                              std::to_string(labels_[j]) + ")");
      ++degree[i];
      ++degree[j];
    }

    if (kind_ == TopologyKind::general) return;
    const bool ring = kind_ == TopologyKind::ring;
    const std::size_t want = ring ? n : n - 1;
    if (edges_.size() != want)
      throw ValidationError(std::string("edges: ") + to_string(kind_) + " of " + std::to_string(n) +
                            " qubits needs exactly " + std::to_string(want) + " edges");
    if (ring && n < 3) throw ValidationError("topology: a ring needs at least 3 qubits");
    for (std::size_t i = 0; i < n; ++i) {
      if (ring && degree[i] != 2) throw ValidationError("edges: ring vertex " + std::to_string(labels_[i]) + " must have degree 2");
      if (!ring && degree[i] > 2) throw ValidationError("edges: chain vertex " + std::to_string(labels_[i]) + " has degree > 2");
    }
    // Connectivity: together with the degree/edge-count checks this pins a single path or cycle.
    std::vector<char> seen_v(n, 0);
    std::vector<std::size_t> stack{0};
    seen_v[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      std::size_t v = stack.back();
      stack.pop_back();
      for (auto [w, z] : neighbors(v)) {
        if (!seen_v[w]) {
          seen_v[w] = 1;
          ++reached;
          stack.push_back(w);
        }
      }
    }
    if (reached != n) throw ValidationError(std::string("edges: ") + to_string(kind_) + " is not connected");
  }

  std::vector<QubitParams> qubits_;
  std::vector<CouplingParams> edges_;
  TopologyKind kind_ = TopologyKind::general;
  std::vector<int> labels_;
};

// Chain 0-1-...-(N-1) with zetas[i] on edge (i, i+1).
inline DeviceModel make_chain(std::vector<QubitParams> qubits, const std::vector<double>& zetas) {
  const std::size_t n = qubits.size();
  std::vector<CouplingParams> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({{i, i + 1}, zetas.at(i)});
  return DeviceModel(std::move(qubits), std::move(edges), n > 1 ? TopologyKind::chain : TopologyKind::general);
}

// Ring with zetas[i] on edge (i, (i+1) mod N).
inline DeviceModel make_ring(std::vector<QubitParams> qubits, const std::vector<double>& zetas) {
  const std::size_t n = qubits.size();
  std::vector<CouplingParams> edges;
  for (std::size_t i = 0; i < n; ++i) edges.push_back({{i, (i + 1) % n}, zetas.at(i)});
  return DeviceModel(std::move(qubits), std::move(edges), TopologyKind::ring);
}

// Same Hamiltonian with every rate driven to zero (t1, t2 pushed to 1e300 us).
inline DeviceModel without_dissipation(const DeviceModel& device) {
  return device.with_qubits([](QubitParams& q) {
    q.t1 = 1e300;
    q.t2 = 2e300;
    q.heating_fraction = 0.0;
  });
}

// Frequencies and weights of the single-qubit mixture obtained by tracing out every
// other qubit under the diagonal Hamiltonian. `neighbor_populations` maps each neighbour
// index to its excited-state probability. Ordering: even parity first, then neighbour
// subsets by ascending bitmask over neighbours sorted by index.
inline EffectiveMixture effective_mixture(const DeviceModel& device, std::size_t i,
                                          const std::map<std::size_t, double>& neighbor_populations) {
  const auto& q = device.qubit(i);
  const auto nbrs = device.neighbors(i);
  std::vector<double> pops;
  std::vector<double> shifts;
  for (auto [j, zeta] : nbrs) {
    auto it = neighbor_populations.find(j);
    if (it == neighbor_populations.end())
      throw ValidationError("neighbor_populations: missing entry for neighbour " + std::to_string(j));
    if (!(it->second >= 0 && it->second <= 1))
      throw ValidationError("neighbor_populations[" + std::to_string(j) + "]: must lie in [0,1]");
    pops.push_back(it->second);
    shifts.push_back(2.0 * angular(zeta));
  }
  EffectiveMixture mix;
  const std::size_t subsets = std::size_t{1} << nbrs.size();
  for (int parity = 0; parity < 2; ++parity) {
    const double sign = parity == 0 ? 1.0 : -1.0;
    const double pw = parity == 0 ? q.even_fraction : 1.0 - q.even_fraction;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      double w = pw;
      double f = angular(q.delta + sign * q.nu);
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const bool excited = (mask >> k) & 1U;
        w *= excited ? pops[k] : 1.0 - pops[k];
        if (excited) f += shifts[k];
      }
      mix.frequencies.push_back(f);
      mix.weights.push_back(w);
    }
  }
  return mix;
}

}  // namespace qdyn
