// Acceptance run: one PASS/FAIL line per criterion. Arguments select criteria (default all).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "qdyn/characterization.hpp"
#include "qdyn/dense_solver.hpp"
#include "qdyn/device_io.hpp"
#include "qdyn/observables.hpp"
#include "qdyn/state.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/tensor_solver.hpp"

using namespace qdyn;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDdSlice = 5.757;  // us

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

DeviceModel device(const std::string& name) { return load_device_file(std::string(QDYN_DATA_DIR) + "/devices/" + name); }

// Independent angular frequency in rad/us for a frequency in Hz.
double w(double hz) { return 2 * kPi * hz * 1e-6; }

std::vector<double> grid(double stop, double step) {
  std::vector<double> t;
  for (int k = 0; k * step <= stop + 1e-9; ++k) t.push_back(k * step);
  return t;
}

std::vector<Observable> bloch_observables(std::size_t n) {
  std::vector<Observable> out;
  for (std::size_t i = 0; i < n; ++i)
    for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) out.push_back(Observable::of(single_pauli(n, i, p)));
  return out;
}

BlochVector random_bloch(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0, 1);
  BlochVector b{g(rng), g(rng), g(rng)};
  const double r = std::cbrt(u(rng)) / b.norm();
  return {b.x * r, b.y * r, b.z * r};
}

DeviceModel random_device(std::mt19937_64& rng, std::size_t n, bool ring, double heating) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<QubitParams> qs;
  std::vector<double> z;
  for (std::size_t i = 0; i < n; ++i) {
    const double t1 = 30 + 250 * u(rng);
    QubitParams q;
    q.t1 = t1;
    q.t2 = 2 * t1 * (0.1 + 0.9 * u(rng));
    q.nu = 8000 * u(rng);
    q.delta = 2e4 * (u(rng) - 0.5);
    q.even_fraction = u(rng);
    q.heating_fraction = heating * u(rng);
    qs.push_back(q);
    z.push_back(-150e3 * u(rng));
  }
  if (ring) return make_ring(qs, z);
  z.pop_back();
  return make_chain(qs, z);
}

// Random bipartite graph on n vertices.
DeviceModel random_bipartite(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> side(n);
  for (auto& s : side) s = static_cast<int>(rng() % 2);
  std::vector<CouplingParams> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (side[i] != side[j] && rng() % 3 == 0) edges.push_back({{i, j}, -30e3});
  QubitParams q;
  q.t1 = 100;
  q.t2 = 100;
  return DeviceModel(std::vector<QubitParams>(n, q), edges);
}

DeviceModel single(const QubitParams& q) { return make_chain({q}, {}); }

// ---------------------------------------------------------------------------------------

Outcome ramsey_closed_form() {
  const auto start = std::chrono::steady_clock::now();
  const DeviceModel table = device("table1_3q_product.json");
  QubitParams q = table.qubit(*table.index_of_label(22));
  q.even_fraction = 0.5;
  const std::vector<BlochVector> plus{{1, 0, 0}};
  const std::vector<double> times = grid(300, 1);
  const Trajectory tr = evolve_dense(single(q), dense_product_state(plus), times, {}, {}, bloch_observables(1));
  double err = 0;
  for (std::size_t r = 0; r < times.size(); ++r) {
    const double t = times[r];
    const double env = 0.5 * std::exp(-t / q.t2) * std::cos(w(q.nu) * t);
    const RamseyProbabilities p = ramsey_probabilities({tr.values[r][0], tr.values[r][1], tr.values[r][2]});
    err = std::max({err, std::abs(p.p_x - (0.5 + env * std::cos(w(q.delta) * t))),
                    std::abs(p.p_y - (0.5 + env * std::sin(w(q.delta) * t)))});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {err < 1e-8 && secs < 5, fmt("max |dP| = %.2e over %zu delays (< 1e-8), %.2f s (< 5 s)", err, times.size(), secs)};
}

Outcome mixture_oracle() {
  const DeviceModel table = device("table1_3q_product.json");
  const QubitParams a = table.qubit(0), b = table.qubit(1);
  const double zeta = table.edges()[0].zeta;
  const DeviceModel pair = without_dissipation(make_chain({a, b}, {zeta}));
  const std::vector<BlochVector> plus(2, BlochVector{1, 0, 0});
  const std::vector<double> times = grid(300, 2);
  DenseOptions opt;
  opt.dt = 0.005;
  const Trajectory tr = evolve_dense(pair, dense_product_state(plus), times, {}, opt, bloch_observables(2));
  double err = 0;
  for (std::size_t r = 0; r < times.size(); ++r) {
    double x = 0;
    for (double s : {1.0, -1.0})
      for (double shift : {0.0, 2 * zeta}) x += 0.25 * std::cos(w(a.delta + s * a.nu + shift) * times[r]);
    err = std::max(err, std::abs(tr.values[r][0] - x));
  }
  return {err < 1e-10, fmt("max |d<X1>| = %.2e over %zu delays (< 1e-10), dt = 0.005 us", err, times.size())};
}

Outcome parity_site_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const DeviceModel d = device("table2_3q_graph.json");
  std::vector<Observable> obs = stabilizer_observables(d);
  for (const auto& o : bloch_observables(3)) obs.push_back(o);
  const std::vector<double> times = grid(300, 5);
  auto dense = std::async(std::launch::async, [&] {
    DenseOptions opt;
    opt.dt = 0.05;
    return evolve_dense(d, std::get<DenseState>(graph_state(d, Backend::dense).state), times, {}, opt, obs);
  });
  TrotterPlan plan;
  plan.dt = 0.05;
  const Trajectory mp = evolve_mpdo(d, mpdo_graph_state(d), times, {}, plan, 32, kDefaultTruncEps, obs);
  const double diff = max_abs_delta(dense.get(), mp);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {diff < 1e-4 && secs < 120,
          fmt("max |tensor - dense| = %.2e over 3 stabilizers + 9 Bloch components (< 1e-4), dt 0.05, bond 32, %.1f s", diff,
              secs)};
}

Outcome population_law() {
  std::mt19937_64 rng(4001);
  double err = 0;
  int cases = 0;
  for (int k = 0; k < 60; ++k) {
    const std::size_t n = 1 + k % 3;
    const DeviceModel d = random_device(rng, n, false, 0.0);
    std::vector<BlochVector> bl;
    for (std::size_t i = 0; i < n; ++i) bl.push_back(random_bloch(rng));
    const std::vector<double> times{0, 3.3, 17, 60, 150, 400};
    Trajectory tr;
    if (k % 2 == 0) {
      DenseOptions opt;
      opt.dt = 0.1;
      tr = evolve_dense(d, dense_product_state(bl), times, {}, opt, bloch_observables(n));
    } else {
      TrotterPlan plan;
      plan.dt = 0.1;
      tr = evolve_mpdo(d, mpdo_product_state(d, bl), times, {}, plan, bloch_observables(n));
    }
    for (std::size_t r = 0; r < times.size(); ++r)
      for (std::size_t i = 0; i < n; ++i)
        err = std::max(err, std::abs(tr.values[r][3 * i + 2] - (1 - (1 - bl[i].z) * std::exp(-times[r] / d.qubit(i).t1))));
    ++cases;
  }
  return {err < 1e-8, fmt("max |<Z> - law| = %.2e over %d random product states, both solvers (< 1e-8)", err, cases)};
}

Outcome echo_exactness() {
  const DeviceModel d = without_dissipation(device("table3_12q_ring.json"));
  const PulseSchedule s = dd_schedule(two_coloring(d), kDdSlice, 9);
  std::vector<double> times;
  for (int n = 1; n <= 9; ++n) times.push_back(kDdSlice * n);
  TrotterPlan plan;
  plan.dt = 0.5;
  const Trajectory tr = evolve_mpdo(d, mpdo_graph_state(d), times, s, plan, {Observable::initial_overlap()});
  double worst = 1;
  for (const auto& row : tr.values) worst = std::min(worst, row[0]);
  return {worst >= 1 - 1e-8, fmt("min fidelity with the initial state over n_dd = 1..9: 1 - %.2e (>= 1 - 1e-8)", 1 - worst)};
}

Outcome ring_dd_versus_idle() {
  const auto start = std::chrono::steady_clock::now();
  const DeviceModel d = device("table3_12q_ring.json");
  double max_t1 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) max_t1 = std::max(max_t1, d.qubit(i).t1);
  std::vector<Observable> obs = stabilizer_observables(d);
  obs.push_back(Observable::graph_fidelity());
  std::vector<double> dd_times;
  for (int n = 0; n <= 9; ++n) dd_times.push_back(kDdSlice * n);
  std::vector<double> idle_times = dd_times;
  for (double f : {1.0, 2.0, 3.0, 4.0, 5.0}) idle_times.push_back(f * max_t1);
  TrotterPlan plan;
  plan.dt = 0.5;
  const MpdoState init = mpdo_graph_state(d);
  auto idle_f = std::async(std::launch::async, [&] { return evolve_mpdo(d, init, idle_times, {}, plan, obs); });
  const Trajectory dd = evolve_mpdo(d, init, dd_times, dd_schedule(two_coloring(d), kDdSlice, 9), plan, obs);
  const Trajectory idle = idle_f.get();
  const std::size_t fid = obs.size() - 1;
  auto p_bar = [&](const Trajectory& tr, std::size_t r) {
    return mean_projection(std::span<const double>(tr.values[r].data(), fid));
  };

  // (a) decay toward 1/2: the distance from 1/2 shrinks across the long-time records and ends < 0.02.
  bool decays = std::abs(p_bar(idle, 0) - 1) < 1e-9;
  std::vector<double> dist;
  for (std::size_t r = dd_times.size(); r < idle_times.size(); ++r) dist.push_back(std::abs(p_bar(idle, r) - 0.5));
  for (std::size_t k = 1; k < dist.size(); ++k) decays &= dist[k] <= dist[k - 1];
  decays &= dist.front() < std::abs(p_bar(idle, 0) - 0.5);
  const bool a = decays && dist.back() < 0.02;

  // (b) DD at least as good at every common record t >= T.
  double margin = 1;
  for (std::size_t r = 1; r < dd_times.size(); ++r) margin = std::min(margin, p_bar(dd, r) - p_bar(idle, r));
  const bool b = margin >= 0;

  // (c) fidelity ratio at the record nearest 50 us (9 T).
  const std::size_t last = dd_times.size() - 1;
  const double ratio = dd.values[last][fid] / idle.values[last][fid];
  const bool c = ratio >= 10;

  double bond = 0;
  for (double v : idle.max_bond) bond = std::max(bond, v);
  for (double v : dd.max_bond) bond = std::max(bond, v);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {a && b && c,
          fmt("(a) %s |P-1/2| at 5*T1max=%.0f us: %.2e (< 0.02); (b) %s min(P_dd - P_idle) = %.3e; (c) %s F_dd/F_idle at "
              "%.2f us = %.1f (>= 10; F_dd %.4f, F_idle %.2e); dt 0.5, max bond %.0f, %.0f s",
              a ? "ok" : "FAILED", 5 * max_t1, dist.back(), b ? "ok" : "FAILED", margin, c ? "ok" : "FAILED",
              dd_times[last], ratio, dd.values[last][fid], idle.values[last][fid], bond, secs)};
}

RamseyParams qubit22() {
  const DeviceModel table = device("table1_3q_product.json");
  const QubitParams q = table.qubit(*table.index_of_label(22));
  RamseyParams p;
  p.t2 = q.t2;
  p.nu = q.nu;
  p.delta = q.delta;
  return p;
}

Outcome fit_coverage() {
  const RamseyParams p = qubit22();
  const auto times = linspace(0, 300, 50);
  int covered = 0;
  double chi = 0;
  for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
    const FitResult f = fit_ramsey(synth_ramsey(p, RamseyVariant::fixed_b, times, 1024, seed), RamseyVariant::fixed_b);
    covered += std::abs(f.value("nu") - p.nu) <= 2 * f.sigma("nu");
    chi += f.reduced_chi2 / 100;
  }
  return {covered >= 95 && chi >= 0.8 && chi <= 1.2,
          fmt("nu within 2 sigma in %d/100 runs (>= 95); mean reduced chi2 %.3f (in [0.8, 1.2]); seeds 1000..1099", covered,
              chi)};
}

Outcome free_b_detection() {
  RamseyParams p = qubit22();
  p.b = 0.368;
  p.omega_s = 50e3;
  const RamseyDataset d = synth_ramsey(p, RamseyVariant::free_b, linspace(0, 300, 50), 1024, 20230720);
  FitOptions opt;
  opt.omega_s = p.omega_s;
  const FitResult fixed = fit_ramsey(d, RamseyVariant::fixed_b, opt);
  const FitResult free = fit_ramsey(d, RamseyVariant::free_b, opt);
  const double b = free.value("b"), sb = free.sigma("b");
  const bool pass = fixed.reduced_chi2 > 3 && free.reduced_chi2 < 1.5 && std::abs(b - 0.368) <= 3 * sb;
  return {pass, fmt("fixed_b reduced chi2 %.2f (> 3); free_b reduced chi2 %.2f (< 1.5), b = %.3f +- %.3f (0.368 within 3 "
                    "sigma: %s)",
                    fixed.reduced_chi2, free.reduced_chi2, b, sb, std::abs(b - 0.368) <= 3 * sb ? "yes" : "no")};
}

Outcome heating_negligible() {
  const DeviceModel base = device("table2_3q_graph.json");
  const std::vector<double> times = grid(300, 2);
  const std::vector<Observable> obs{Observable::of(PauliString::from_dense("ZXZ"))};
  auto run = [&](double h) {
    std::vector<QubitParams> qs;
    for (std::size_t i = 0; i < base.size(); ++i) {
      QubitParams q = base.qubit(i);
      q.heating_fraction = h;
      qs.push_back(q);
    }
    const DeviceModel d(qs, base.edges());
    DenseOptions opt;
    opt.dt = 0.05;
    return evolve_dense(d, std::get<DenseState>(graph_state(d, Backend::dense).state), times, {}, opt, obs);
  };
  std::vector<std::future<Trajectory>> jobs;
  for (double h : {0.0, 0.05, 0.1, 0.2}) jobs.push_back(std::async(std::launch::async, run, h));
  const Trajectory ref = jobs[0].get();
  std::string per;
  double worst = 0;
  for (std::size_t k = 1; k < jobs.size(); ++k) {
    const double dev = max_abs_delta(ref, jobs[k].get());
    worst = std::max(worst, dev);
    per += fmt("%s%.4f", k > 1 ? ", " : "", dev);
  }
  return {worst <= 0.02, fmt("max |d<Z1X2Z3>| for heating 0.05, 0.1, 0.2: %s (<= 0.02)", per.c_str())};
}

Outcome structural_suite() {
  int cases = 0, failures = 0;
  std::string first;
  auto check = [&](bool ok, const std::string& what) {
    ++cases;
    if (!ok && failures++ == 0) first = what;
  };
  std::mt19937_64 rng(9001);
  std::uniform_real_distribution<double> u(0, 1);

  // Dense trace, Hermiticity and positivity.
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + k % 3;
    const DeviceModel d = random_device(rng, n, false, 0.3);
    std::vector<BlochVector> bl;
    for (std::size_t i = 0; i < n; ++i) bl.push_back(random_bloch(rng));
    QuantumState s = product_state(d, bl, Backend::dense);
    if (n > 1 && k % 2) apply_gate(s, cz_gate(0, 1));
    DenseOptions opt;
    opt.dt = 0.1;
    opt.keep_snapshots = true;
    const Trajectory tr = evolve_dense(d, std::get<DenseState>(s), std::vector<double>{0, 4, 45}, {}, opt, {});
    bool ok = true;
    for (std::size_t r = 0; r < tr.times.size(); ++r) {
      const PhysicalityReport p = physicality(DenseState(n, tr.snapshots[r]));
      ok &= p.trace_error < 1e-10 && p.hermiticity_error < 1e-10 && p.min_eigenvalue >= -1e-9;
    }
    check(ok, fmt("dense physicality, case %d", k));
  }

  // Tensor parity marginals.
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + k % 3;
    const DeviceModel d = random_device(rng, n, n == 4 && k % 2 == 0, 0.2);
    std::vector<BlochVector> bl;
    for (std::size_t i = 0; i < n; ++i) bl.push_back(random_bloch(rng));
    MpdoState s = mpdo_product_state(d, bl, {64, 1e-12});
    if (k % 3 == 0) apply_gate(s, cz_gate(0, 1));
    const detail::TrotterStepper stepper(d, 0.1, 3.0);
    for (int step = 0; step < 30; ++step) stepper.step(s, step == 0);
    stepper.finish(s);
    bool ok = std::abs(s.trace() - cplx(1, 0)) < 1e-6;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector4cd m = s.marginal(2 * i + 1);
      const double b = d.qubit(i).even_fraction;
      ok &= std::abs(m(0) - b) < 1e-8 && std::abs(m(3) - (1 - b)) < 1e-8 && std::abs(m(1)) + std::abs(m(2)) < 1e-8;
    }
    check(ok, fmt("tensor parity marginal, case %d", k));
  }

  // Readout mitigation round trip.
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + k % 4;
    std::vector<ConfusionMatrix> cms;
    for (std::size_t q = 0; q < n; ++q) cms.push_back({0.501 + 0.499 * u(rng), 0.501 + 0.499 * u(rng)});
    const double z = 2 * u(rng) - 1;
    bool ok = std::abs(mitigate(apply_confusion(z, cms[0]), cms[0]) - z) < 1e-12;
    std::vector<double> p(std::size_t{1} << n);
    double sum = 0;
    for (auto& v : p) sum += v = u(rng);
    for (auto& v : p) v /= sum;
    const std::vector<double> back = mitigate(apply_confusion(p, cms), cms);
    for (std::size_t s = 0; s < p.size(); ++s) ok &= std::abs(back[s] - p[s]) < 1e-10;
    check(ok, fmt("mitigation round trip, case %d", k));
  }

  // Two-coloring: valid on bipartite graphs, rejected on odd rings.
  for (int k = 0; k < 200; ++k) {
    const DeviceModel d = random_bipartite(rng, 2 + k % 11);
    check(is_valid_coloring(d, two_coloring(d)), fmt("two-coloring, case %d", k));
  }
  for (std::size_t n : {3, 5, 7, 9, 11, 13}) {
    QubitParams q;
    q.t1 = q.t2 = 100;
    bool rejected = false;
    try {
      two_coloring(make_ring(std::vector<QubitParams>(n, q), std::vector<double>(n, -30e3)));
    } catch (const ValidationError&) {
      rejected = true;
    }
    check(rejected, fmt("odd ring of %zu accepted", n));
  }

  // Measurement settings cover every stabilizer with a commuting setting.
  for (int k = 0; k < 200; ++k) {
    const DeviceModel d = random_bipartite(rng, 2 + k % 11);
    const auto settings = measurement_settings(d);
    bool ok = true;
    for (const auto& s : stabilizer_set(d)) {
      bool covered = false;
      for (const auto& m : settings) covered |= setting_covers(m, s) && m.commutes_with(s);
      ok &= covered;
    }
    check(ok, fmt("setting coverage, case %d", k));
  }
  return {failures == 0, fmt("%d seeded cases across 6 properties, %d failures%s%s", cases, failures, failures ? "; first: " : "",
                             first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Ramsey closed form", ramsey_closed_form},
      {"mixture-of-effective-qubits oracle", mixture_oracle},
      {"parity-site equivalence", parity_site_equivalence},
      {"population law", population_law},
      {"DD echo exactness", echo_exactness},
      {"12-qubit ring idle vs DD", ring_dd_versus_idle},
      {"fit coverage", fit_coverage},
      {"free-b detection", free_b_detection},
      {"heating negligibility", heating_negligible},
      {"structural suite", structural_suite},
  };
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) selected.insert(std::atoi(argv[k]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[k].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
