#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "qdyn/dense_solver.hpp"
#include "qdyn/device_io.hpp"
#include "qdyn/observables.hpp"
#include "qdyn/state.hpp"

using namespace qdyn;

namespace {

std::string data_path(const std::string& name) { return std::string(QDYN_DATA_DIR) + "/devices/" + name; }

QubitParams qubit() {
  QubitParams q;
  q.t1 = 100;
  q.t2 = 100;
  return q;
}

DeviceModel ring(std::size_t n) { return make_ring(std::vector<QubitParams>(n, qubit()), std::vector<double>(n, -30e3)); }
DeviceModel chain(std::size_t n) {
  return make_chain(std::vector<QubitParams>(n, qubit()), std::vector<double>(n ? n - 1 : 0, -30e3));
}

std::vector<std::string> sparse_names(const std::vector<PauliString>& v) {
  std::vector<std::string> out;
  for (const auto& p : v) out.push_back(p.dense());
  return out;
}

}  // namespace

TEST(Stabilizers, ChainRingAndSingle) {
  EXPECT_EQ(sparse_names(stabilizer_set(chain(3))), (std::vector<std::string>{"XZI", "ZXZ", "IZX"}));
  const auto r = stabilizer_set(ring(12));
  ASSERT_EQ(r.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(r[i][i], Pauli::X);
    EXPECT_EQ(r[i][(i + 1) % 12], Pauli::Z);
    EXPECT_EQ(r[i][(i + 11) % 12], Pauli::Z);
    EXPECT_EQ(r[i].support().size(), 3u);
  }
  const DeviceModel one(std::vector<QubitParams>{qubit()}, {});
  EXPECT_EQ(sparse_names(stabilizer_set(one)), (std::vector<std::string>{"X"}));
}

TEST(Expect, GraphMixedAndPlus) {
  const DeviceModel d = chain(3);
  for (Backend b : {Backend::dense, Backend::tensor}) {
    const QuantumState g = graph_state(d, b).state;
    for (const auto& s : stabilizer_set(d)) EXPECT_NEAR(expect(g, s), 1.0, 1e-12);
    const std::vector<BlochVector> mixed(3, BlochVector{0, 0, 0}), plus(3, BlochVector{1, 0, 0});
    const QuantumState m = product_state(d, mixed, b), p = product_state(d, plus, b);
    for (const char* s : {"XII", "ZZI", "YXZ", "IIZ"}) EXPECT_NEAR(expect(m, PauliString::from_dense(s)), 0.0, 1e-15);
    EXPECT_NEAR(expect(p, PauliString::from_dense("ZXZ")), 0.0, 1e-15);
    EXPECT_THROW(expect(p, PauliString::from_dense("ZX")), ValidationError);
  }
}

TEST(MeanProjection, Examples) {
  const std::vector<double> ones(5, 1.0), zeros(5, 0.0), mix{1.0, 0.0};
  EXPECT_DOUBLE_EQ(mean_projection(ones), 1.0);
  EXPECT_DOUBLE_EQ(mean_projection(zeros), 0.5);
  EXPECT_DOUBLE_EQ(mean_projection(mix), 0.75);
  EXPECT_THROW(mean_projection(std::vector<double>{}), ValidationError);
}

TEST(MeanProjection, AffineAndPermutationInvariant) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> s(1 + k % 12);
    for (auto& v : s) v = u(rng);
    const double p = mean_projection(s);
    std::vector<double> q = s;
    std::shuffle(q.begin(), q.end(), rng);
    EXPECT_NEAR(mean_projection(q), p, 1e-15);
    const std::size_t i = k % s.size();
    const double dv = 0.1;
    q = s;
    q[i] += dv;
    EXPECT_NEAR(mean_projection(q) - p, 0.5 * dv / static_cast<double>(s.size()), 1e-15);
  }
}

TEST(Fidelity, IdealMixedAndGround) {
  const DeviceModel d = ring(6);
  const QuantumState g = graph_state(d, Backend::dense).state;
  EXPECT_NEAR(graph_fidelity(g, d), 1.0, 1e-15);
  const std::vector<BlochVector> ground(6, BlochVector{0, 0, 1}), mixed(6, BlochVector{0, 0, 0});
  for (Backend b : {Backend::dense, Backend::tensor}) {
    EXPECT_NEAR(graph_fidelity(product_state(d, ground, b), d), 1.0 / 64, 1e-15);
    EXPECT_NEAR(graph_fidelity(product_state(d, mixed, b), d), 1.0 / 64, 1e-15);
  }
  const DeviceModel big = load_device_file(data_path("table3_12q_ring.json"));
  const std::vector<BlochVector> mixed12(12, BlochVector{0, 0, 0});
  EXPECT_NEAR(graph_fidelity(product_state(big, mixed12, Backend::tensor), big), 2.44140625e-4, 1e-15);
}

TEST(Settings, RingOfTwelveAndFour) {
  const auto s12 = measurement_settings(ring(12));
  ASSERT_EQ(s12.size(), 2u);
  EXPECT_EQ(s12[0].dense(), "XZXZXZXZXZXZ");
  EXPECT_EQ(s12[1].dense(), "ZXZXZXZXZXZX");
  const auto s4 = measurement_settings(ring(4));
  EXPECT_EQ(s4[0].dense(), "XZXZ");
  EXPECT_EQ(s4[1].dense(), "ZXZX");
  EXPECT_THROW(measurement_settings(ring(5)), ValidationError);
}

TEST(Settings, CoverEveryStabilizerOnRandomBipartiteGraphs) {
  std::mt19937_64 rng(67);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng() % 10;
    std::vector<int> side(n);
    for (auto& s : side) s = static_cast<int>(rng() % 2);
    std::vector<CouplingParams> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (side[i] != side[j] && rng() % 3 == 0) edges.push_back({{i, j}, -30e3});
    const DeviceModel d(std::vector<QubitParams>(n, qubit()), edges);
    const auto settings = measurement_settings(d);
    for (const auto& s : stabilizer_set(d)) {
      std::size_t covering = 0;
      for (const auto& m : settings)
        if (setting_covers(m, s)) {
          ++covering;
          EXPECT_TRUE(m.commutes_with(s));
        }
      EXPECT_GE(covering, 1u) << s.dense();
    }
  }
}

TEST(Bloch, PlusGroundAndRevival) {
  const DeviceModel one(std::vector<QubitParams>{qubit()}, {});
  for (Backend b : {Backend::dense, Backend::tensor}) {
    const std::vector<BlochVector> plus{{1, 0, 0}}, ground{{0, 0, 1}};
    const BlochVector p = bloch(product_state(one, plus, b), 0);
    EXPECT_NEAR(p.x, 1, 1e-15);
    EXPECT_NEAR(p.y, 0, 1e-15);
    EXPECT_NEAR(p.z, 0, 1e-15);
    EXPECT_NEAR(bloch(product_state(one, ground, b), 0).z, 1, 1e-15);
  }
  QubitParams q = qubit();
  q.nu = 4000;
  const DeviceModel d = without_dissipation(DeviceModel(std::vector<QubitParams>{q}, {}));
  const std::vector<BlochVector> plus{{1, 0, 0}};
  const std::vector<double> times{0, 31.25, 62.5, 100, 125};
  std::vector<Observable> obs;
  for (Pauli p : {Pauli::X, Pauli::Y}) obs.push_back(Observable::of(single_pauli(1, 0, p)));
  const Trajectory tr = evolve_dense(d, dense_product_state(plus), times, {}, {}, obs);
  for (std::size_t r = 0; r < times.size(); ++r)
    EXPECT_NEAR(std::hypot(tr.values[r][0], tr.values[r][1]), std::abs(std::cos(angular(4000) * times[r])), 1e-9);
}

TEST(Reports, CsvLayout) {
  const DeviceModel d = chain(3);
  const auto g = graph_state(d, Backend::dense);
  auto obs = stabilizer_observables(d);
  obs.push_back(Observable::graph_fidelity());
  const Trajectory tr = evolve_dense(d, std::get<DenseState>(g.state), std::vector<double>{0, 5}, {}, {}, obs);
  const auto reports = stabilizer_reports(tr, d);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_NEAR(reports[0].p_bar, 1.0, 1e-12);
  ASSERT_TRUE(reports[0].fidelity.has_value());
  for (const auto& r : reports)
    for (double v : r.expectations) EXPECT_LE(std::abs(v), 1 + 1e-6);
  std::ostringstream out;
  write_stabilizer_csv(out, reports);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "time_us,s_0,s_1,s_2,p_bar,fidelity");
}
