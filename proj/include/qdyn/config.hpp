#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdyn/characterization.hpp"
#include "qdyn/dense_solver.hpp"
#include "qdyn/device_io.hpp"
#include "qdyn/errors.hpp"
#include "qdyn/observables.hpp"
#include "qdyn/state.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/tensor_solver.hpp"
#include "qdyn/trajectory.hpp"

namespace qdyn {

enum class Scenario { idle, dd, ramsey, t1 };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::idle: return "idle";
    case Scenario::dd: return "dd";
    case Scenario::ramsey: return "ramsey";
    case Scenario::t1: return "t1";
  }
  return "?";
}

struct InitialSpec {
  enum class Kind { graph, product } kind = Kind::graph;
  std::vector<BlochVector> bloch;  // product only
};

struct SolverSpec {
  Backend backend = Backend::dense;
  double dt = 0.05;
  std::size_t max_bond = kDefaultMaxBond;
  double trunc_eps = kDefaultTruncEps;
  bool strict_alignment = false;
  std::size_t workers = 0;
  bool snapshots = false;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against the config file
  std::filesystem::path device_path;
  Scenario scenario = Scenario::idle;
  InitialSpec initial;
  std::vector<double> times;
  SolverSpec solver;
  ParityMode parity = ParityMode::enumerate;
  std::size_t samples = 512;
  double dd_slice = 0.0;
  std::size_t n_dd = 0;
  std::vector<std::string> observables;
  std::filesystem::path out_dir = ".";
  std::string prefix = "run";
  std::optional<std::uint64_t> seed;
  std::uint64_t shots = 0;  // ramsey / t1: 0 writes exact probabilities
  nlohmann::json raw;       // the document after command-line overrides
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& path, const std::string& msg) {
  throw ValidationError("config " + path + ": " + msg);
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) config_error(path + "." + key, "missing required field");
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error(path, "wrong type (" + std::string(j.type_name()) + ")");
  }
}

inline std::vector<double> parse_times(const nlohmann::json& j, const std::string& path) {
  std::vector<double> out;
  if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) out.push_back(get_as<double>(j[k], path + "[" + std::to_string(k) + "]"));
    return out;
  }
  if (!j.is_object()) config_error(path, "expected a list of times or {start, stop, count|step}");
  const double start = get_as<double>(j.value("start", nlohmann::json(0.0)), path + ".start");
  const double stop = get_as<double>(require(j, "stop", path), path + ".stop");
  if (!(stop >= start)) config_error(path, "stop must be >= start");
  if (j.contains("count")) {
    const auto n = get_as<std::size_t>(j.at("count"), path + ".count");
    if (n < 1) config_error(path + ".count", "must be >= 1");
    return linspace(start, stop, n);
  }
  if (j.contains("step")) {
    const double step = get_as<double>(j.at("step"), path + ".step");
    if (!(step > 0)) config_error(path + ".step", "must be > 0");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < n; ++k) out.push_back(start + step * static_cast<double>(k));
    return out;
  }
  config_error(path, "needs either count or step");
}

inline BlochVector parse_bloch(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) config_error(path, "Bloch vector must be [x, y, z]");
  BlochVector b{get_as<double>(j[0], path), get_as<double>(j[1], path), get_as<double>(j[2], path)};
  validate(b, path);
  return b;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

// Dotted-path override "solver.dt=0.01"; the value is parsed as JSON when possible and
// kept as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->contains(parts[k]) || !(*node)[parts[k]].is_object()) (*node)[parts[k]] = nlohmann::json::object();
    node = &(*node)[parts[k]];
  }
  (*node)[parts.back()] = value;
}

inline RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  using namespace detail;
  if (!doc.is_object()) config_error("", "top level must be an object");
  if (doc.contains("format") && doc.at("format") != "qdyn-run/1") config_error(".format", "expected 'qdyn-run/1'");
  RunConfig c;
  c.raw = doc;
  c.base_dir = base_dir;
  c.device_path = resolve(base_dir, get_as<std::string>(require(doc, "device", ""), ".device"));

  const std::string scen = get_as<std::string>(require(doc, "scenario", ""), ".scenario");
  if (scen == "idle") c.scenario = Scenario::idle;
  else if (scen == "dd") c.scenario = Scenario::dd;
  else if (scen == "ramsey") c.scenario = Scenario::ramsey;
  else if (scen == "t1") c.scenario = Scenario::t1;
  else config_error(".scenario", "unknown scenario '" + scen + "' (idle, dd, ramsey, t1)");

  if (doc.contains("initial")) {
    const auto& ini = doc.at("initial");
    const std::string kind = get_as<std::string>(require(ini, "kind", ".initial"), ".initial.kind");
    if (kind == "graph") {
      c.initial.kind = InitialSpec::Kind::graph;
    } else if (kind == "product" || kind == "file") {
      c.initial.kind = InitialSpec::Kind::product;
      nlohmann::json list;
      std::string where = ".initial.bloch";
      if (kind == "file") {
        const auto p = resolve(base_dir, get_as<std::string>(require(ini, "path", ".initial"), ".initial.path"));
        list = require(read_json_file(p), "bloch", p.string());
        where = p.string() + ".bloch";
      } else {
        list = require(ini, "bloch", ".initial");
      }
      if (!list.is_array()) config_error(where, "expected a list of [x, y, z]");
      for (std::size_t k = 0; k < list.size(); ++k) c.initial.bloch.push_back(parse_bloch(list[k], where + "[" + std::to_string(k) + "]"));
    } else {
      config_error(".initial.kind", "unknown kind '" + kind + "' (graph, product, file)");
    }
  } else if (c.scenario == Scenario::idle || c.scenario == Scenario::dd) {
    c.initial.kind = InitialSpec::Kind::graph;
  }

  if (doc.contains("dd")) {
    const auto& dd = doc.at("dd");
    c.dd_slice = get_as<double>(require(dd, "slice_us", ".dd"), ".dd.slice_us");
    c.n_dd = get_as<std::size_t>(require(dd, "n_dd", ".dd"), ".dd.n_dd");
    if (!(c.dd_slice > 0)) config_error(".dd.slice_us", "must be > 0");
  } else if (c.scenario == Scenario::dd) {
    config_error(".dd", "scenario 'dd' needs {slice_us, n_dd}");
  }

  if (doc.contains("times")) {
    c.times = parse_times(doc.at("times"), ".times");
  } else if (c.scenario == Scenario::dd) {
    for (std::size_t k = 0; k <= c.n_dd; ++k) c.times.push_back(c.dd_slice * static_cast<double>(k));
  } else {
    config_error(".times", "missing required field");
  }

  if (doc.contains("solver")) {
    const auto& s = doc.at("solver");
    const std::string kind = get_as<std::string>(s.value("kind", nlohmann::json("dense")), ".solver.kind");
    if (kind == "dense") c.solver.backend = Backend::dense;
    else if (kind == "tensor") c.solver.backend = Backend::tensor;
    else config_error(".solver.kind", "unknown solver '" + kind + "' (dense, tensor)");
    c.solver.dt = get_as<double>(s.value("dt", nlohmann::json(0.05)), ".solver.dt");
    c.solver.max_bond = get_as<std::size_t>(s.value("max_bond", nlohmann::json(kDefaultMaxBond)), ".solver.max_bond");
    c.solver.trunc_eps = get_as<double>(s.value("trunc_eps", nlohmann::json(kDefaultTruncEps)), ".solver.trunc_eps");
    c.solver.strict_alignment = get_as<bool>(s.value("strict_alignment", nlohmann::json(false)), ".solver.strict_alignment");
    c.solver.workers = get_as<std::size_t>(s.value("workers", nlohmann::json(0)), ".solver.workers");
    c.solver.snapshots = get_as<bool>(s.value("snapshots", nlohmann::json(false)), ".solver.snapshots");
    if (!(c.solver.dt > 0)) config_error(".solver.dt", "must be > 0");
    if (c.solver.max_bond < 1) config_error(".solver.max_bond", "must be >= 1");
    if (!(c.solver.trunc_eps >= 0)) config_error(".solver.trunc_eps", "must be >= 0");
  }

  if (doc.contains("parity")) {
    const auto& p = doc.at("parity");
    const std::string mode = get_as<std::string>(p.value("mode", nlohmann::json("enumerate")), ".parity.mode");
    if (mode == "enumerate") c.parity = ParityMode::enumerate;
    else if (mode == "sample") c.parity = ParityMode::sample;
    else config_error(".parity.mode", "unknown mode '" + mode + "' (enumerate, sample)");
    c.samples = get_as<std::size_t>(p.value("samples", nlohmann::json(512)), ".parity.samples");
    if (c.samples < 1) config_error(".parity.samples", "must be >= 1");
  }

  if (doc.contains("observables")) {
    const auto& o = doc.at("observables");
    if (!o.is_array()) config_error(".observables", "expected a list of names");
    for (std::size_t k = 0; k < o.size(); ++k) c.observables.push_back(get_as<std::string>(o[k], ".observables[" + std::to_string(k) + "]"));
  }

  if (doc.contains("output")) {
    const auto& o = doc.at("output");
    c.out_dir = resolve(base_dir, get_as<std::string>(o.value("dir", nlohmann::json(".")), ".output.dir"));
    c.prefix = get_as<std::string>(o.value("prefix", nlohmann::json("run")), ".output.prefix");
  } else {
    c.out_dir = base_dir;
  }
  if (doc.contains("seed")) c.seed = get_as<std::uint64_t>(doc.at("seed"), ".seed");
  if (doc.contains("shots")) c.shots = get_as<std::uint64_t>(doc.at("shots"), ".shots");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json doc = detail::read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_run_config(doc, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

// Observable names: "stabilizers", "fidelity", "initial_overlap", "bloch", a dense string
// of N letters ("ZXZ") or a sparse one ("Z0X1Z2").
inline std::vector<Observable> expand_observables(const std::vector<std::string>& names, const DeviceModel& device) {
  const std::size_t n = device.size();
  std::vector<Observable> out;
  for (const auto& name : names) {
    if (name == "stabilizers") {
      for (auto& o : stabilizer_observables(device)) out.push_back(std::move(o));
    } else if (name == "fidelity") {
      out.push_back(Observable::graph_fidelity());
    } else if (name == "initial_overlap") {
      out.push_back(Observable::initial_overlap());
    } else if (name == "bloch") {
      for (std::size_t i = 0; i < n; ++i)
        for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) out.push_back(Observable::of(single_pauli(n, i, p)));
    } else {
      const bool dense = name.size() == n && std::all_of(name.begin(), name.end(), [](char ch) { return std::isalpha(static_cast<unsigned char>(ch)); });
      try {
        out.push_back(Observable::of(dense ? PauliString::from_dense(name) : PauliString::from_sparse(name, n)));
      } catch (const Error& e) {
        throw ValidationError("observable '" + name + "': " + e.what());
      }
    }
  }
  std::vector<Observable> unique;
  for (auto& o : out)
    if (std::none_of(unique.begin(), unique.end(), [&](const Observable& u) { return u.name == o.name; })) unique.push_back(std::move(o));
  return unique;
}

// Idle and dd runs evolve one state. Ramsey and t1 runs evolve one state per qubit with
// that qubit prepared (|+> or |1>) and every other qubit in |0>, so ZZ terms stay silent.
struct RunPlan {
  DeviceModel device;
  std::vector<QuantumState> initials;
  PulseSchedule schedule;
  std::vector<std::vector<Observable>> observables;  // one list per initial state
};

// Loads the device and checks every guard rail; the returned plan is ready to evolve.
inline RunPlan plan_run(const RunConfig& c) {
  if (!std::filesystem::exists(c.device_path)) throw ValidationError("config .device: file '" + c.device_path.string() + "' does not exist");
  RunPlan p;
  p.device = load_device_file(c.device_path.string());
  const std::size_t n = p.device.size();
  if (c.solver.backend == Backend::dense && n > kDenseSolverQubitLimit)
    throw ValidationError("config .solver.kind: dense solver is limited to " + std::to_string(kDenseSolverQubitLimit) +
                          " qubits, device has " + std::to_string(n) + " (use the tensor solver)");
  if (c.parity == ParityMode::sample && c.solver.backend == Backend::tensor)
    throw ValidationError("config .parity.mode: sampling applies to the dense solver only; the tensor solver carries parity exactly");
  if (c.parity == ParityMode::sample && !c.seed) throw ValidationError("config .seed: required when parity.mode is 'sample'");
  if (c.shots > 0 && !c.seed) throw ValidationError("config .seed: required when shots > 0");
  if (c.times.empty()) throw ValidationError("config .times: at least one record time required");

  const MpdoState::Truncation trunc{c.solver.max_bond, c.solver.trunc_eps};
  switch (c.scenario) {
    case Scenario::ramsey:
    case Scenario::t1: {
      if (!c.initial.bloch.empty()) throw ValidationError("config .initial: ramsey and t1 scenarios fix their own preparation");
      const BlochVector prepared = c.scenario == Scenario::ramsey ? BlochVector{1, 0, 0} : BlochVector{0, 0, -1};
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<BlochVector> bl(n, BlochVector{0, 0, 1});
        bl[i] = prepared;
        p.initials.push_back(product_state(p.device, bl, c.solver.backend, trunc));
        std::vector<Observable> obs;
        for (Pauli q : {Pauli::X, Pauli::Y, Pauli::Z}) obs.push_back(Observable::of(single_pauli(n, i, q)));
        p.observables.push_back(std::move(obs));
      }
      break;
    }
    case Scenario::idle:
    case Scenario::dd: {
      if (c.observables.empty()) throw ValidationError("config .observables: nothing to record (list is empty)");
      p.observables.push_back(expand_observables(c.observables, p.device));
      if (c.initial.kind == InitialSpec::Kind::graph) {
        p.initials.push_back(graph_state(p.device, c.solver.backend, trunc).state);
      } else {
        if (c.initial.bloch.size() != n) throw ValidationError("config .initial.bloch: one vector per qubit required");
        p.initials.push_back(product_state(p.device, c.initial.bloch, c.solver.backend, trunc));
      }
      break;
    }
  }
  if (c.scenario == Scenario::dd) {
    p.schedule = dd_schedule(two_coloring(p.device), c.dd_slice, c.n_dd);
    validate(p.schedule, n);
    if (c.times.back() + 1e-9 < p.schedule.total_time)
      throw ValidationError("config .times: last record time precedes the end of the DD schedule (" +
                            std::to_string(p.schedule.total_time) + " us)");
  }
  return p;
}

inline Trajectory evolve(const RunConfig& c, const DeviceModel& device, const QuantumState& initial,
                         const PulseSchedule& schedule, const std::vector<Observable>& observables) {
  if (c.solver.backend == Backend::dense) {
    DenseOptions o;
    o.dt = c.solver.dt;
    o.parity = c.parity;
    o.samples = c.samples;
    o.seed = c.seed.value_or(0);
    o.keep_snapshots = c.solver.snapshots;
    o.workers = c.solver.workers;
    return evolve_dense(device, std::get<DenseState>(initial), c.times, schedule, o, observables);
  }
  TrotterPlan plan;
  plan.dt = c.solver.dt;
  plan.strict_alignment = c.solver.strict_alignment;
  return evolve_mpdo(device, std::get<MpdoState>(initial), c.times, schedule, plan, c.solver.max_bond, c.solver.trunc_eps,
                     observables);
}

struct RunOutput {
  DeviceModel device;
  Trajectory trajectory;  // ramsey / t1: the per-qubit runs side by side
  std::vector<StabilizerReport> stabilizers;  // when every stabilizer was recorded
  std::vector<std::pair<std::string, RamseyDataset>> ramsey;  // per qubit label
  std::vector<std::pair<std::string, T1Dataset>> t1;
};

inline RunOutput run_config(const RunConfig& c) {
  const RunPlan p = plan_run(c);
  RunOutput out;
  out.device = p.device;

  // Independent runs go in parallel; results are merged in qubit order.
  std::vector<std::future<Trajectory>> jobs;
  for (std::size_t k = 0; k < p.initials.size(); ++k)
    jobs.push_back(std::async(std::launch::async, [&, k] { return evolve(c, p.device, p.initials[k], p.schedule, p.observables[k]); }));
  std::vector<Trajectory> runs;
  for (auto& j : jobs) runs.push_back(j.get());

  if (c.scenario == Scenario::idle || c.scenario == Scenario::dd) {
    out.trajectory = std::move(runs.front());
    bool all = true;
    for (const auto& s : stabilizer_set(p.device))
      all &= std::find(out.trajectory.names.begin(), out.trajectory.names.end(), s.sparse()) != out.trajectory.names.end();
    if (all) out.stabilizers = stabilizer_reports(out.trajectory, p.device);
    return out;
  }

  Trajectory& merged = out.trajectory;
  merged.times = c.times;
  merged.values.assign(c.times.size(), {});
  for (const auto& r : runs) {
    merged.names.insert(merged.names.end(), r.names.begin(), r.names.end());
    for (std::size_t t = 0; t < c.times.size(); ++t) merged.values[t].insert(merged.values[t].end(), r.values[t].begin(), r.values[t].end());
  }
  merged.trace = runs.front().trace;

  std::mt19937_64 rng(c.seed.value_or(0));
  auto sample = [&](double prob) {
    prob = std::clamp(prob, 0.0, 1.0);
    if (c.shots == 0) return prob;
    std::binomial_distribution<std::uint64_t> draw(c.shots, prob);
    return static_cast<double>(draw(rng)) / static_cast<double>(c.shots);
  };
  const std::uint64_t shots = std::max<std::uint64_t>(c.shots, 1);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string label = std::to_string(p.device.labels()[i]);
    const auto& v = runs[i].values;  // columns X_i, Y_i, Z_i
    if (c.scenario == Scenario::ramsey) {
      RamseyDataset d;
      for (std::size_t r = 0; r < c.times.size(); ++r) {
        const RamseyProbabilities pr = ramsey_probabilities({v[r][0], v[r][1], v[r][2]});
        d.times.push_back(c.times[r]);
        d.p_x.push_back(sample(pr.p_x));
        d.p_y.push_back(sample(pr.p_y));
        d.shots.push_back(shots);
      }
      out.ramsey.emplace_back(label, std::move(d));
    } else {
      T1Dataset d;
      for (std::size_t r = 0; r < c.times.size(); ++r) {
        d.times.push_back(c.times[r]);
        d.p1.push_back(sample(0.5 * (1 - v[r][2])));
        d.shots.push_back(shots);
      }
      out.t1.emplace_back(label, std::move(d));
    }
  }
  return out;
}

}  // namespace qdyn
