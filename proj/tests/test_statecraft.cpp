#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "qdyn/dense_solver.hpp"
#include "qdyn/device_io.hpp"
#include "qdyn/observables.hpp"
#include "qdyn/state.hpp"
#include "qdyn/statecraft.hpp"

using namespace qdyn;

namespace {

QubitParams qubit(double nu = 0, double delta = 0) {
  QubitParams q;
  q.t1 = 100;
  q.t2 = 100;
  q.nu = nu;
  q.delta = delta;
  return q;
}

DeviceModel ring(std::size_t n, double zeta = -30e3) {
  return make_ring(std::vector<QubitParams>(n, qubit()), std::vector<double>(n, zeta));
}

DeviceModel chain(std::size_t n, double zeta = -30e3) {
  return make_chain(std::vector<QubitParams>(n, qubit()), std::vector<double>(n - 1, zeta));
}

std::vector<double> times_of(const PulseSchedule& s, std::size_t q) {
  std::vector<double> t;
  for (const auto& e : s.events)
    if (e.qubit == q) t.push_back(e.time);
  return t;
}

}  // namespace

TEST(Product, PlusStateOnThreeQubits) {
  const std::vector<BlochVector> plus(3, BlochVector{1, 0, 0});
  const DenseState s = dense_product_state(plus);
  const Eigen::MatrixXcd expected = Eigen::MatrixXcd::Constant(8, 8, 1.0 / 8);
  EXPECT_LT((s.rho() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Product, GroundAndMixed) {
  const std::vector<BlochVector> g{{0, 0, 1}};
  EXPECT_NEAR(dense_product_state(g).rho()(0, 0).real(), 1.0, 1e-15);
  EXPECT_NEAR(dense_product_state(g).rho()(1, 1).real(), 0.0, 1e-15);
  const std::vector<BlochVector> m{{0, 0, 0}};
  EXPECT_LT((dense_product_state(m).rho() - 0.5 * Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Product, RejectsLongBlochVector) {
  const std::vector<BlochVector> bad{{1, 0.1, 0}};
  EXPECT_THROW(dense_product_state(bad), ValidationError);
  const DeviceModel d = chain(1);
  EXPECT_THROW(product_state(d, bad, Backend::tensor), ValidationError);
}

TEST(Coloring, RingChainAndOddCycle) {
  const Coloring c = two_coloring(ring(12));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(c.assignment[i], i % 2 == 0 ? Color::A : Color::B);
  const Coloring p = two_coloring(chain(3));
  EXPECT_EQ(p.assignment, (std::vector<Color>{Color::A, Color::B, Color::A}));
  EXPECT_THROW(two_coloring(ring(3)), ValidationError);
}

TEST(Coloring, RandomBipartiteGraphs) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<std::size_t> side(n);
    for (auto& s : side) s = rng() % 2;
    std::vector<CouplingParams> edges;
    bool odd_cycle = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng() % 3 == 0) {
          if (side[i] == side[j] && rng() % 4 != 0) continue;
          odd_cycle |= side[i] == side[j];
          edges.push_back({{i, j}, -30e3});
        }
    const DeviceModel d(std::vector<QubitParams>(n, qubit()), edges);
    if (!odd_cycle) {
      EXPECT_TRUE(is_valid_coloring(d, two_coloring(d)));
    } else {
      // A same-side edge does not always close an odd cycle; whatever comes back must be valid.
      try {
        EXPECT_TRUE(is_valid_coloring(d, two_coloring(d)));
      } catch (const ValidationError&) {
      }
    }
  }
}

TEST(Graph, ChainStabilizerIsOne) {
  const DeviceModel d = chain(3);
  for (Backend b : {Backend::dense, Backend::tensor}) {
    const QuantumState s = graph_state(d, b).state;
    EXPECT_NEAR(expect(s, PauliString::from_dense("ZXZ")), 1.0, 1e-12);
  }
}

TEST(Graph, RingStabilizersAreOne) {
  const DeviceModel d = ring(12);
  const QuantumState s = graph_state(d, Backend::tensor).state;
  for (const auto& p : stabilizer_set(d)) EXPECT_NEAR(expect(s, p), 1.0, 1e-10) << p.sparse();
  const DeviceModel small = ring(6);
  const QuantumState t = graph_state(small, Backend::dense).state;
  for (const auto& p : stabilizer_set(small)) EXPECT_NEAR(expect(t, p), 1.0, 1e-12) << p.sparse();
}

TEST(Graph, SingleQubitIsPlus) {
  const DeviceModel d(std::vector<QubitParams>{qubit()}, {});
  const auto g = graph_state(d, Backend::dense);
  EXPECT_TRUE(g.layers.empty());
  const BlochVector b = bloch(g.state, 0);
  EXPECT_NEAR(b.x, 1, 1e-15);
  EXPECT_NEAR(b.z, 0, 1e-15);
}

TEST(Graph, RingLayersAreEvenThenOdd) {
  const auto layers = cz_layers(ring(12));
  ASSERT_EQ(layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l)
    for (const auto& g : layers[l]) {
      const std::size_t lo = g.q1 == g.q0 + 1 ? g.q0 : g.q1;
      EXPECT_EQ(lo % 2, l);
    }
}

TEST(Gates, XFlipsGround) {
  const DeviceModel d = chain(1);
  for (Backend b : {Backend::dense, Backend::tensor}) {
    const std::vector<BlochVector> g{{0, 0, 1}};
    QuantumState s = product_state(d, g, b);
    apply_gate(s, x_gate(0));
    EXPECT_NEAR(bloch(s, 0).z, -1.0, 1e-14);
  }
}

TEST(Gates, CzOnPlusPlusIsTwoQubitGraphState) {
  const DeviceModel d = chain(2);
  const std::vector<BlochVector> plus(2, BlochVector{1, 0, 0});
  QuantumState s = product_state(d, plus, Backend::dense);
  apply_gate(s, cz_gate(0, 1));
  EXPECT_NEAR(graph_fidelity(s, d), 1.0, 1e-14);
}

TEST(Gates, XIsAnInvolution) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  const DeviceModel d = chain(3);
  for (int k = 0; k < 50; ++k) {
    std::vector<BlochVector> bl;
    for (int i = 0; i < 3; ++i) {
      BlochVector b{g(rng), g(rng), g(rng)};
      const double r = std::max(b.norm(), 1.0);
      bl.push_back({b.x / r, b.y / r, b.z / r});
    }
    QuantumState s = product_state(d, bl, Backend::dense);
    apply_gate(s, cz_gate(0, 1));
    const DenseState before = std::get<DenseState>(s);
    const std::size_t q = k % 3;
    apply_gate(s, x_gate(q));
    apply_gate(s, x_gate(q));
    EXPECT_LT((std::get<DenseState>(s).rho() - before.rho()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Gates, IndexOutOfRange) {
  const DeviceModel d = chain(2);
  const std::vector<BlochVector> plus(2, BlochVector{1, 0, 0});
  for (Backend b : {Backend::dense, Backend::tensor}) {
    QuantumState s = product_state(d, plus, b);
    EXPECT_THROW(apply_gate(s, x_gate(2)), ValidationError);
    EXPECT_THROW(apply_gate(s, cz_gate(0, 5)), ValidationError);
  }
}

TEST(Schedule, SingleSliceTimes) {
  const PulseSchedule s = dd_schedule(two_coloring(ring(12)), 5.757, 1);
  EXPECT_DOUBLE_EQ(s.total_time, 5.757);
  const auto a = times_of(s, 0), b = times_of(s, 1);
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_NEAR(a[0], 2.8785, 1e-12);
  EXPECT_NEAR(a[1], 5.757, 1e-12);
  EXPECT_NEAR(b[0], 1.43925, 1e-12);
  EXPECT_NEAR(b[1], 4.31775, 1e-12);
}

TEST(Schedule, EmptyAndTwoSlices) {
  EXPECT_TRUE(dd_schedule(two_coloring(ring(4)), 5.757, 0).empty());
  const PulseSchedule s = dd_schedule(two_coloring(ring(4)), 4.0, 2);
  EXPECT_EQ(times_of(s, 0), (std::vector<double>{2, 4, 6, 8}));
  EXPECT_EQ(times_of(s, 1), (std::vector<double>{1, 3, 5, 7}));
  validate(s, 4);
}

TEST(Schedule, InvariantsOnRandomSlices) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.1, 20.0);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 * (2 + k % 5);
    const double T = u(rng);
    const std::size_t n_dd = 1 + k % 7;
    const PulseSchedule s = dd_schedule(two_coloring(ring(n)), T, n_dd);
    EXPECT_NO_THROW(validate(s, n));
    for (std::size_t slice = 0; slice < n_dd; ++slice)
      for (std::size_t q = 0; q < n; ++q) {
        std::size_t count = 0;
        for (const auto& e : s.events)
          if (e.qubit == q && e.time > slice * T + 1e-12 && e.time <= (slice + 1) * T * (1 + 1e-12)) ++count;
        EXPECT_EQ(count % 2, 0u);
      }
  }
}

TEST(Schedule, ValidationCatchesBadEvents) {
  PulseSchedule s;
  s.total_time = 4;
  s.events = {{2, 0, GateKind::X}};
  EXPECT_THROW(validate(s, 2), ValidationError);  // odd count
  s.events = {{2, 0, GateKind::X}, {1, 0, GateKind::X}};
  EXPECT_THROW(validate(s, 2), ValidationError);  // unsorted
  s.events = {{0, 0, GateKind::X}, {1, 0, GateKind::X}};
  EXPECT_THROW(validate(s, 2), ValidationError);  // at t = 0
  s.events = {{1, 3, GateKind::X}, {2, 3, GateKind::X}};
  EXPECT_THROW(validate(s, 2), ValidationError);  // qubit out of range
}

TEST(Schedule, JsonRoundTrip) {
  const PulseSchedule s = dd_schedule(two_coloring(ring(6)), 5.757, 3);
  const PulseSchedule t = schedule_from_json(schedule_to_json(s));
  EXPECT_DOUBLE_EQ(t.total_time, s.total_time);
  ASSERT_EQ(t.events.size(), s.events.size());
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    EXPECT_DOUBLE_EQ(t.events[k].time, s.events[k].time);
    EXPECT_EQ(t.events[k].qubit, s.events[k].qubit);
  }
}

// Noiseless dynamics under the staggered schedule return the initial state after every slice.
TEST(Schedule, EchoIsExactOnRandomDevices) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 8; ++k) {
    const std::size_t n = k % 2 == 0 ? 4 : 3;
    std::vector<QubitParams> qs;
    std::vector<double> z;
    for (std::size_t i = 0; i < n; ++i) {
      qs.push_back(qubit(5000 * std::abs(u(rng)), 20000 * u(rng)));
      z.push_back(100e3 * u(rng));
    }
    const DeviceModel d = without_dissipation(n == 4 ? make_ring(qs, z) : make_chain(qs, {z[0], z[1]}));
    const double T = 5.757;
    const PulseSchedule s = dd_schedule(two_coloring(d), T, 3);
    const auto g = graph_state(d, Backend::dense);
    DenseOptions opt;
    opt.dt = 0.01;
    const Trajectory tr = evolve_dense(d, std::get<DenseState>(g.state), std::vector<double>{T, 2 * T, 3 * T}, s, opt,
                                       {Observable::initial_overlap()});
    for (const auto& row : tr.values) EXPECT_GE(row[0], 1 - 1e-8);
  }
}
