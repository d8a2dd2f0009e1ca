// qdyn command-line front end: simulate, fit, compare, dd-plan, validate.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qdyn/characterization.hpp"
#include "qdyn/config.hpp"
#include "qdyn/device_io.hpp"
#include "qdyn/observables.hpp"
#include "qdyn/statecraft.hpp"
#include "qdyn/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int k = 0; k < argc; ++k) s += (k ? " " : "") + std::string(argv[k]);
  return s;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw qdyn::Error("cannot open '" + p.string() + "' for writing");
  return out;
}

void write_text(const fs::path& p, const std::string& text) { open_out(p) << text; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw qdyn::ValidationError("cannot open '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw qdyn::ParseError(p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------------------
// simulate

std::vector<fs::path> write_run(const qdyn::RunConfig& c, const qdyn::RunOutput& out) {
  std::vector<fs::path> files;
  const fs::path base = (c.out_dir / c.prefix).lexically_normal();
  auto name = [&](const std::string& suffix) { return fs::path(base.string() + suffix); };

  files.push_back(name("_trajectory.csv"));
  auto tr = open_out(files.back());
  qdyn::write_csv(tr, out.trajectory);
  if (!out.stabilizers.empty()) {
    files.push_back(name("_stabilizers.csv"));
    auto st = open_out(files.back());
    qdyn::write_stabilizer_csv(st, out.stabilizers);
  }
  for (const auto& [label, d] : out.ramsey) {
    files.push_back(name("_ramsey_q" + label + ".csv"));
    auto f = open_out(files.back());
    qdyn::write_ramsey_csv(f, d);
  }
  for (const auto& [label, d] : out.t1) {
    files.push_back(name("_t1_q" + label + ".csv"));
    auto f = open_out(files.back());
    qdyn::write_t1_csv(f, d);
  }
  if (!out.trajectory.snapshots.empty()) {
    files.push_back(name("_snapshots.bin"));
    qdyn::write_snapshots(files.back().string(), out.trajectory, static_cast<std::uint32_t>(out.device.size()));
  }
  return files;
}

void write_manifest(const qdyn::RunConfig& c, const std::vector<fs::path>& files, const std::string& cmd) {
  json m;
  m["format"] = "qdyn-manifest/1";
  m["version"] = QDYN_VERSION;
  m["command"] = cmd;
  m["created"] = utc_timestamp();
  json cfg = c.raw;
  cfg["device"] = fs::absolute(c.device_path).string();
  cfg["output"] = {{"dir", fs::absolute(c.out_dir).string()}, {"prefix", c.prefix}};
  m["config"] = cfg;
  m["device"] = read_json(c.device_path);
  m["outputs"] = json::array();
  for (const auto& f : files) m["outputs"].push_back(f.filename().string());
  write_text(fs::path(c.out_dir / (c.prefix + "_manifest.json")), m.dump(2) + "\n");
}

int cmd_simulate(const std::string& config, const std::vector<std::string>& overrides, const std::string& cmd) {
  const qdyn::RunConfig c = qdyn::load_run_config(config, overrides);
  const qdyn::RunOutput out = qdyn::run_config(c);
  const auto files = write_run(c, out);
  write_manifest(c, files, cmd);
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------
// fit

bool is_t1_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw qdyn::ValidationError("cannot open '" + p.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return qdyn::detail::split_csv(line) == std::vector<std::string>{"time_us", "p1", "shots"};
  }
  return false;
}

qdyn::Weighting weighting_from_string(const std::string& s) {
  if (s == "binomial") return qdyn::Weighting::binomial;
  if (s == "model") return qdyn::Weighting::model;
  if (s == "uniform") return qdyn::Weighting::uniform;
  throw qdyn::ValidationError("--weighting: unknown value '" + s + "' (binomial, model, uniform)");
}

int cmd_fit(const fs::path& data, std::string variant, double omega_s_hz, const std::string& weighting, fs::path out) {
  std::ifstream in(data);
  if (!in) throw qdyn::ValidationError("cannot open '" + data.string() + "'");
  const bool t1 = is_t1_file(data);
  if (variant.empty()) variant = t1 ? "t1" : "free_b";
  if (t1 != (variant == "t1"))
    throw qdyn::ValidationError("variant '" + variant + "' does not match the dataset header in '" + data.string() + "'");

  qdyn::FitOptions opt;
  opt.omega_s = omega_s_hz;
  opt.weighting = weighting_from_string(weighting);
  qdyn::FitResult r;
  std::vector<double> times;
  if (t1) {
    const qdyn::T1Dataset d = qdyn::read_t1_csv(in);
    r = qdyn::fit_t1(d, opt);
    times = d.times;
  } else {
    const qdyn::RamseyDataset d = qdyn::read_ramsey_csv(in);
    r = qdyn::fit_ramsey(d, qdyn::ramsey_variant_from_string(variant), opt);
    times = d.times;
  }

  if (out.empty()) out = data.parent_path() / (data.stem().string() + "_fit.json");
  json doc = qdyn::fit_to_json(r);
  doc["dataset"] = fs::absolute(data).string();
  doc["omega_s_hz"] = omega_s_hz;
  doc["weighting"] = weighting;
  if (t1) doc["derived"] = {{"heating_fraction", r.value("B")}, {"heating_fraction_sigma", r.sigma("B")}};
  write_text(out, doc.dump(2) + "\n");

  const fs::path res_path = out.parent_path() / (out.stem().string() + "_residuals.csv");
  auto res = open_out(res_path);
  const std::size_t n = times.size();
  if (t1) {
    res << "time_us,r_p1\n";
    for (std::size_t k = 0; k < n; ++k) res << qdyn::format_double(times[k]) << ',' << qdyn::format_double(r.residuals[k]) << '\n';
  } else {
    res << "time_us,r_p_x,r_p_y\n";
    for (std::size_t k = 0; k < n; ++k)
      res << qdyn::format_double(times[k]) << ',' << qdyn::format_double(r.residuals[k]) << ','
          << qdyn::format_double(r.residuals[n + k]) << '\n';
  }

  std::cout << "variant " << r.model << ", reduced chi2 " << r.reduced_chi2 << " (dof " << r.dof << ")\n";
  for (std::size_t k = 0; k < r.names.size(); ++k) std::cout << "  " << r.names[k] << " = " << r.values[k] << " +- " << r.sigmas[k] << '\n';
  std::cout << "wrote " << out.string() << "\nwrote " << res_path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------
// compare

int cmd_compare(const std::string& a, const std::string& b, const std::vector<std::string>& overrides, fs::path out) {
  const qdyn::RunConfig ca = qdyn::load_run_config(a, overrides);
  const qdyn::RunConfig cb = qdyn::load_run_config(b, overrides);
  auto fa = std::async(std::launch::async, [&] { return qdyn::run_config(ca); });
  auto fb = std::async(std::launch::async, [&] { return qdyn::run_config(cb); });
  const qdyn::Trajectory ta = fa.get().trajectory, tb = fb.get().trajectory;

  if (ta.names != tb.names) throw qdyn::ValidationError("compare: the configs record different observables");
  if (ta.times.size() != tb.times.size()) throw qdyn::ValidationError("compare: time grids differ in length");
  for (std::size_t r = 0; r < ta.times.size(); ++r)
    if (std::abs(ta.times[r] - tb.times[r]) > 1e-9 * std::max(1.0, std::abs(ta.times[r])))
      throw qdyn::ValidationError("compare: time grids differ at record " + std::to_string(r));

  if (out.empty()) out = ca.out_dir / (ca.prefix + "_vs_" + cb.prefix + ".csv");
  auto f = open_out(out);
  const bool ratio = std::find(ta.names.begin(), ta.names.end(), "fidelity") != ta.names.end();
  f << "time_us";
  for (const auto& n : ta.names) f << ",delta_" << n;
  if (ratio) f << ",ratio_fidelity";
  f << '\n';
  std::vector<double> max_abs(ta.names.size(), 0.0);
  for (std::size_t r = 0; r < ta.times.size(); ++r) {
    f << qdyn::format_double(ta.times[r]);
    for (std::size_t k = 0; k < ta.names.size(); ++k) {
      const double d = tb.values[r][k] - ta.values[r][k];
      max_abs[k] = std::max(max_abs[k], std::abs(d));
      f << ',' << qdyn::format_double(d);
    }
    if (ratio) {
      const std::size_t k = ta.index_of("fidelity");
      f << ',' << qdyn::format_double(tb.values[r][k] / ta.values[r][k]);
    }
    f << '\n';
  }
  double overall = 0.0;
  std::cout << "max |B - A| per observable\n";
  for (std::size_t k = 0; k < ta.names.size(); ++k) {
    std::cout << "  " << ta.names[k] << ' ' << max_abs[k] << '\n';
    overall = std::max(overall, max_abs[k]);
  }
  std::cout << "max " << overall << "\nwrote " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------
// dd-plan, validate

int cmd_dd_plan(const fs::path& device, double slice, std::size_t n_dd, const fs::path& out) {
  const qdyn::DeviceModel d = qdyn::load_device_file(device.string());
  const qdyn::PulseSchedule s = qdyn::dd_schedule(qdyn::two_coloring(d), slice, n_dd);
  qdyn::validate(s, d.size());
  json doc = qdyn::schedule_to_json(s);
  doc["slice_us"] = slice;
  doc["n_dd"] = n_dd;
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    write_text(out, doc.dump(2) + "\n");
    std::cout << "wrote " << out.string() << " (" << s.events.size() << " pulses)\n";
  }
  return kExitOk;
}

int cmd_validate(const std::string& config, const std::vector<std::string>& overrides) {
  const qdyn::RunConfig c = qdyn::load_run_config(config, overrides);
  const qdyn::RunPlan p = qdyn::plan_run(c);
  std::size_t count = 0;
  for (const auto& o : p.observables) count += o.size();
  std::cout << config << ": ok (" << p.device.size() << " qubits, scenario " << qdyn::to_string(c.scenario) << ", "
            << c.times.size() << " records, " << count << " observables in " << p.initials.size() << " run(s))\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdyn: parity-extended Lindblad simulation and characterization of idle transmon qubits"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(QDYN_VERSION));

  std::string config, config_b, data, variant, weighting = "binomial", out, device;
  std::vector<std::string> overrides;
  double omega_s_khz = 0.0, slice = 0.0;
  std::size_t n_dd = 0;

  auto* sim = app.add_subcommand("simulate", "run a config and write trajectory, stabilizer and manifest files");
  sim->add_option("config", config, "run config (JSON)")->required();
  sim->add_option("--set", overrides, "override a config field, e.g. --set solver.dt=0.01");

  auto* fit = app.add_subcommand("fit", "fit a Ramsey or T1 dataset");
  fit->add_option("data", data, "dataset CSV")->required();
  fit->add_option("--variant", variant, "fixed_b, free_b, gaussian or t1 (default from the header)");
  fit->add_option("--omega-s", omega_s_khz, "known frame offset omega_s/2pi in kHz");
  fit->add_option("--weighting", weighting, "binomial, model or uniform");
  fit->add_option("--out", out, "result JSON path");

  auto* cmp = app.add_subcommand("compare", "run two configs and write per-record deltas");
  cmp->add_option("config_a", config, "reference config")->required();
  cmp->add_option("config_b", config_b, "second config")->required();
  cmp->add_option("--set", overrides, "override applied to both configs");
  cmp->add_option("--out", out, "comparison CSV path");

  auto* plan = app.add_subcommand("dd-plan", "emit the staggered decoupling schedule of a device");
  plan->add_option("device", device, "device JSON")->required();
  plan->add_option("--slice", slice, "slice length T in us")->required();
  plan->add_option("--n-dd", n_dd, "number of slices")->required();
  plan->add_option("--out", out, "schedule JSON path (default stdout)");

  auto* val = app.add_subcommand("validate", "check a config without running it");
  val->add_option("config", config, "run config (JSON)")->required();
  val->add_option("--set", overrides, "override a config field");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*sim) return cmd_simulate(config, overrides, command_line(argc, argv));
    if (*fit) return cmd_fit(data, variant, omega_s_khz * 1e3, weighting, out);
    if (*cmp) return cmd_compare(config, config_b, overrides, out);
    if (*plan) return cmd_dd_plan(device, slice, n_dd, out);
    if (*val) return cmd_validate(config, overrides);
  } catch (const qdyn::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const qdyn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
