#pragma once

#include <span>
#include <variant>
#include <vector>

#include "qdyn/dense_state.hpp"
#include "qdyn/device.hpp"
#include "qdyn/mpdo.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/tensor_solver.hpp"

namespace qdyn {

// Dense states carry qubits only (the dense solver enumerates parity); tensor states carry
// the interleaved parity sites initialised to diag(b, 1-b).
using QuantumState = std::variant<DenseState, MpdoState>;

enum class Backend { dense, tensor };

inline QuantumState product_state(const DeviceModel& device, std::span<const BlochVector> bloch, Backend backend,
                                  MpdoState::Truncation trunc = {}) {
  if (bloch.size() != device.size()) throw ValidationError("product_state: one Bloch vector per qubit required");
  if (backend == Backend::dense) return dense_product_state(bloch);
  return mpdo_product_state(device, bloch, trunc);
}

struct GraphPreparation {
  QuantumState state;
  std::vector<std::vector<Gate>> layers;  // CZ layers, each a set of disjoint edges
};

// CZ over every device edge applied to |+>^N.
inline GraphPreparation graph_state(const DeviceModel& device, Backend backend, MpdoState::Truncation trunc = {}) {
  GraphPreparation g;
  g.layers = cz_layers(device);
  if (backend == Backend::dense) {
    std::vector<BlochVector> plus(device.size(), BlochVector{1, 0, 0});
    DenseState s = dense_product_state(plus);
    for (const auto& layer : g.layers)
      for (const auto& gate : layer) apply_gate(s, gate);
    g.state = std::move(s);
  } else {
    g.state = mpdo_graph_state(device, trunc);
  }
  return g;
}

inline void apply_gate(QuantumState& state, const Gate& g) {
  std::visit([&](auto& s) { apply_gate(s, g); }, state);
}

inline std::size_t num_qubits(const QuantumState& state) {
  return std::visit([](const auto& s) { return s.num_qubits(); }, state);
}

}  // namespace qdyn
