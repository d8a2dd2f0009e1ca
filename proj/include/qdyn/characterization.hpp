#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qdyn/errors.hpp"
#include "qdyn/lm.hpp"
#include "qdyn/trajectory.hpp"
#include "qdyn/units.hpp"

namespace qdyn {

enum class RamseyVariant { fixed_b, free_b, gaussian };

inline const char* to_string(RamseyVariant v) {
  switch (v) {
    case RamseyVariant::fixed_b: return "fixed_b";
    case RamseyVariant::free_b: return "free_b";
    case RamseyVariant::gaussian: return "gaussian";
  }
  return "?";
}

inline RamseyVariant ramsey_variant_from_string(const std::string& s) {
  if (s == "fixed_b") return RamseyVariant::fixed_b;
  if (s == "free_b") return RamseyVariant::free_b;
  if (s == "gaussian") return RamseyVariant::gaussian;
  throw ValidationError("unknown Ramsey model variant '" + s + "' (expected fixed_b, free_b or gaussian)");
}

// Frequencies in Hz, times in us, kappa in 1/us.
struct RamseyParams {
  double A = 0.5;
  double B = 0.5;
  double phi = 0.0;
  double t2 = 100.0;
  double delta = 0.0;
  double nu = 0.0;
  double omega_s = 0.0;
  double b = 0.5;
  double kappa = 0.0;
};

inline void validate(const RamseyParams& p) {
  if (!(p.t2 > 0)) throw ValidationError("ramsey params: t2 must be > 0");
  if (!(p.nu >= 0)) throw ValidationError("ramsey params: nu must be >= 0");
  if (!(p.b >= 0 && p.b <= 1)) throw ValidationError("ramsey params: b must lie in [0, 1]");
  if (!(p.kappa >= 0)) throw ValidationError("ramsey params: kappa must be >= 0");
}

struct RamseyPoint {
  double p_x = 0.0;
  double p_y = 0.0;
};

inline RamseyPoint ramsey_model(double t, const RamseyParams& p, RamseyVariant variant) {
  const double w = angular(p.delta + p.omega_s);
  const double v = angular(p.nu);
  double env = p.A * std::exp(-t / p.t2);
  if (variant == RamseyVariant::gaussian) env *= std::exp(-p.kappa * p.kappa * t * t);
  if (variant == RamseyVariant::free_b) {
    const double up = (w + v) * t + p.phi, dn = (w - v) * t + p.phi;
    return {env * (p.b * std::cos(up) + (1 - p.b) * std::cos(dn)) + p.B,
            env * (p.b * std::sin(up) + (1 - p.b) * std::sin(dn)) + p.B};
  }
  const double k = std::cos(v * t);
  return {env * std::cos(w * t + p.phi) * k + p.B, env * std::sin(w * t + p.phi) * k + p.B};
}

// Excited-state population after preparing |1>; B is the heating fraction.
inline double t1_model(double t, double A, double B, double t1) {
  if (!(t1 > 0)) throw ValidationError("t1_model: T1 must be > 0");
  return A * std::exp(-t / t1) + B;
}

struct RamseyDataset {
  std::vector<double> times;  // us
  std::vector<double> p_x;
  std::vector<double> p_y;
  std::vector<std::uint64_t> shots;
};

struct T1Dataset {
  std::vector<double> times;  // us
  std::vector<double> p1;
  std::vector<std::uint64_t> shots;
};

inline void validate(const RamseyDataset& d) {
  const std::size_t n = d.times.size();
  if (d.p_x.size() != n || d.p_y.size() != n || d.shots.size() != n)
    throw ValidationError("ramsey dataset: columns have different lengths");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(d.p_x[k] >= 0 && d.p_x[k] <= 1 && d.p_y[k] >= 0 && d.p_y[k] <= 1))
      throw ValidationError("ramsey dataset: probability outside [0, 1] at row " + std::to_string(k));
    if (d.shots[k] < 1) throw ValidationError("ramsey dataset: shots must be >= 1 at row " + std::to_string(k));
  }
}

inline void validate(const T1Dataset& d) {
  const std::size_t n = d.times.size();
  if (d.p1.size() != n || d.shots.size() != n) throw ValidationError("t1 dataset: columns have different lengths");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(d.p1[k] >= 0 && d.p1[k] <= 1)) throw ValidationError("t1 dataset: probability outside [0, 1] at row " + std::to_string(k));
    if (d.shots[k] < 1) throw ValidationError("t1 dataset: shots must be >= 1 at row " + std::to_string(k));
  }
}

namespace detail {

inline double draw_fraction(std::mt19937_64& rng, double p, std::uint64_t shots, std::size_t row) {
  if (!(p >= -1e-12 && p <= 1 + 1e-12))
    throw ValidationError("synth: model probability " + std::to_string(p) + " outside [0, 1] at point " + std::to_string(row));
  p = std::clamp(p, 0.0, 1.0);
  std::binomial_distribution<std::uint64_t> draw(shots, p);
  return static_cast<double>(draw(rng)) / static_cast<double>(shots);
}

}  // namespace detail

// Binomial(shots, p)/shots per point, p_x drawn before p_y at each delay.
inline RamseyDataset synth_ramsey(const RamseyParams& params, RamseyVariant variant, const std::vector<double>& times,
                                  std::uint64_t shots, std::uint64_t seed) {
  if (shots < 1) throw ValidationError("synth_ramsey: shots must be >= 1");
  std::mt19937_64 rng(seed);
  RamseyDataset d;
  d.times = times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const RamseyPoint m = ramsey_model(times[k], params, variant);
    d.p_x.push_back(detail::draw_fraction(rng, m.p_x, shots, k));
    d.p_y.push_back(detail::draw_fraction(rng, m.p_y, shots, k));
    d.shots.push_back(shots);
  }
  return d;
}

inline T1Dataset synth_t1(double A, double B, double t1, const std::vector<double>& times, std::uint64_t shots,
                          std::uint64_t seed) {
  if (shots < 1) throw ValidationError("synth_t1: shots must be >= 1");
  std::mt19937_64 rng(seed);
  T1Dataset d;
  d.times = times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    d.p1.push_back(detail::draw_fraction(rng, t1_model(times[k], A, B, t1), shots, k));
    d.shots.push_back(shots);
  }
  return d;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out;
  if (n == 1) return {a};
  for (std::size_t k = 0; k < n; ++k) out.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  return out;
}

// ---------------------------------------------------------------------------------------
// Fitting

// binomial: sigma from the observed fraction; model: one further pass with sigma from the
// fitted probabilities; uniform: unit weights (noiseless data).
enum class Weighting { binomial, model, uniform };

struct FitOptions {
  double omega_s = 0.0;  // Hz, known frame offset
  Weighting weighting = Weighting::binomial;
  std::optional<RamseyParams> initial_guess;
  LmOptions lm;
};

struct FitResult {
  std::string model;  // fixed_b, free_b, gaussian or t1
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t dof = 0;
  int iterations = 0;
  std::vector<double> residuals;  // weighted, p_x block then p_y block

  double value(const std::string& n) const { return values.at(index(n)); }
  double sigma(const std::string& n) const { return sigmas.at(index(n)); }
  bool has(const std::string& n) const { return std::find(names.begin(), names.end(), n) != names.end(); }

  std::size_t index(const std::string& n) const {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw ValidationError("fit result has no parameter '" + n + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
};

inline nlohmann::json fit_to_json(const FitResult& r) {
  nlohmann::json values = nlohmann::json::object(), sigmas = nlohmann::json::object();
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    values[r.names[k]] = r.values[k];
    sigmas[r.names[k]] = r.sigmas[k];
  }
  return {{"format", "qdyn-fit/1"},
          {"variant", r.model},
          {"values", values},
          {"sigmas", sigmas},
          {"chi2", r.chi2},
          {"reduced_chi2", r.reduced_chi2},
          {"dof", r.dof},
          {"iterations", r.iterations}};
}

// max(sqrt(p(1-p)/shots), 1/(2 shots)) from the observed fraction.
inline double binomial_sigma(double p, std::uint64_t shots) {
  const double n = static_cast<double>(shots);
  return std::max(std::sqrt(std::max(p * (1 - p), 0.0) / n), 0.5 / n);
}

namespace detail {

inline std::size_t ramsey_param_count(RamseyVariant v) { return v == RamseyVariant::fixed_b ? 6 : 7; }

// theta = [A, B, phi, t2, delta, nu] (+ b for free_b, + kappa^2 for gaussian).
inline Eigen::VectorXd pack(const RamseyParams& p, RamseyVariant v) {
  Eigen::VectorXd th(ramsey_param_count(v));
  th << p.A, p.B, p.phi, p.t2, p.delta, p.nu, Eigen::VectorXd::Zero(th.size() - 6);
  if (v == RamseyVariant::free_b) th(6) = p.b;
  if (v == RamseyVariant::gaussian) th(6) = p.kappa * p.kappa;
  return th;
}

// Weighted residuals (data - model)/sigma and their Jacobian, p_x rows then p_y rows.
inline void ramsey_residuals(const RamseyDataset& d, const std::vector<double>& sigma, double omega_s,
                             RamseyVariant v, const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
  const std::size_t n = d.times.size();
  const Eigen::Index np = th.size();
  r.resize(2 * n);
  J.setZero(2 * n, np);
  const double A = th(0), B = th(1), phi = th(2), t2 = th(3);
  const double w = angular(th(4) + omega_s), nu = angular(th(5));
  constexpr double c = kTwoPi * 1e-6;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = d.times[k];
    const Eigen::Index ix = static_cast<Eigen::Index>(k), iy = static_cast<Eigen::Index>(n + k);
    const double sx = sigma[k], sy = sigma[n + k];
    double e = std::exp(-t / t2);
    double ux = 0, uy = 0;  // (model - B) / A
    double dphi_x = 0, dphi_y = 0, dnu_x = 0, dnu_y = 0, db_x = 0, db_y = 0;
    if (v == RamseyVariant::free_b) {
      const double b = th(6);
      const double up = (w + nu) * t + phi, dn = (w - nu) * t + phi;
      const double cu = std::cos(up), su = std::sin(up), cd = std::cos(dn), sd = std::sin(dn);
      ux = e * (b * cu + (1 - b) * cd);
      uy = e * (b * su + (1 - b) * sd);
      dphi_x = -A * e * (b * su + (1 - b) * sd);
      dphi_y = A * e * (b * cu + (1 - b) * cd);
      dnu_x = -A * e * c * t * (b * su - (1 - b) * sd);
      dnu_y = A * e * c * t * (b * cu - (1 - b) * cd);
      db_x = A * e * (cu - cd);
      db_y = A * e * (su - sd);
    } else {
      if (v == RamseyVariant::gaussian) e *= std::exp(-th(6) * t * t);
      const double ph = w * t + phi;
      const double C = std::cos(ph), S = std::sin(ph), K = std::cos(nu * t), Kd = std::sin(nu * t);
      ux = e * C * K;
      uy = e * S * K;
      dphi_x = -A * e * S * K;
      dphi_y = A * e * C * K;
      dnu_x = -A * e * C * Kd * c * t;
      dnu_y = -A * e * S * Kd * c * t;
    }
    const double gx = A * ux, gy = A * uy;
    r(ix) = (d.p_x[k] - (gx + B)) / sx;
    r(iy) = (d.p_y[k] - (gy + B)) / sy;
    // J = d r / d theta = -(d model / d theta) / sigma
    const double dx[7] = {ux, 1, dphi_x, gx * t / (t2 * t2), dphi_x * c * t, dnu_x,
                          v == RamseyVariant::free_b ? db_x : -t * t * gx};
    const double dy[7] = {uy, 1, dphi_y, gy * t / (t2 * t2), dphi_y * c * t, dnu_y,
                          v == RamseyVariant::free_b ? db_y : -t * t * gy};
    for (Eigen::Index p = 0; p < np; ++p) {
      J(ix, p) = -dx[p] / sx;
      J(iy, p) = -dy[p] / sy;
    }
  }
}

inline std::vector<double> ramsey_sigmas(const RamseyDataset& d, Weighting w) {
  std::vector<double> s;
  const std::size_t n = d.times.size();
  for (std::size_t k = 0; k < n; ++k) s.push_back(w == Weighting::uniform ? 1.0 : binomial_sigma(d.p_x[k], d.shots[k]));
  for (std::size_t k = 0; k < n; ++k) s.push_back(w == Weighting::uniform ? 1.0 : binomial_sigma(d.p_y[k], d.shots[k]));
  return s;
}

inline std::vector<double> ramsey_model_sigmas(const RamseyDataset& d, const Eigen::VectorXd& th, double omega_s,
                                               RamseyVariant v) {
  std::vector<double> unit(2 * d.times.size(), 1.0), s;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  ramsey_residuals(d, unit, omega_s, v, th, r, J);
  const std::size_t n = d.times.size();
  for (std::size_t k = 0; k < n; ++k) s.push_back(binomial_sigma(std::clamp(d.p_x[k] - r(k), 0.0, 1.0), d.shots[k]));
  for (std::size_t k = 0; k < n; ++k)
    s.push_back(binomial_sigma(std::clamp(d.p_y[k] - r(n + k), 0.0, 1.0), d.shots[k]));
  return s;
}

// Sampling rate (Hz) when the delays are equally spaced; such data cannot distinguish
// frequencies that differ by multiples of it.
inline std::optional<double> uniform_sampling_rate(const std::vector<double>& t) {
  if (t.size() < 3) return std::nullopt;
  const double step = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(step > 0)) return std::nullopt;
  for (std::size_t k = 1; k < t.size(); ++k)
    if (std::abs(t[k] - t[k - 1] - step) > 1e-9 * step) return std::nullopt;
  return 1e6 / step;
}

inline double wrap_phase(double phi) {
  phi = std::remainder(phi, kTwoPi);
  return phi <= -kTwoPi / 2 ? phi + kTwoPi : phi;
}

}  // namespace detail

// Initial guess from the discrete spectrum of z = (p_x - B) + i (p_y - B): the two largest
// peaks sit at Delta + omega_s +- nu.
inline RamseyParams ramsey_auto_guess(const RamseyDataset& d, double omega_s = 0.0) {
  const std::size_t n = d.times.size();
  if (n < 4) throw ValidationError("ramsey_auto_guess: need at least four points");
  double B = 0.0;
  for (std::size_t k = 0; k < n; ++k) B += d.p_x[k] + d.p_y[k];
  B /= static_cast<double>(2 * n);
  std::vector<std::complex<double>> z(n);
  double amax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    z[k] = {d.p_x[k] - B, d.p_y[k] - B};
    amax = std::max(amax, std::abs(z[k]));
  }
  const double t0 = d.times.front(), span = d.times.back() - d.times.front();
  if (!(span > 0)) throw ValidationError("ramsey_auto_guess: delays must span a positive interval");
  const double fmax = 0.5 * static_cast<double>(n - 1) / span * 1e6;  // Hz, mean-spacing Nyquist
  const double df = 1e6 / span / 16.0;                                  // 16x zero padding
  std::vector<double> freq, power;
  for (double f = -fmax; f <= fmax; f += df) {
    std::complex<double> acc = 0;
    for (std::size_t k = 0; k < n; ++k) acc += z[k] * std::polar(1.0, -angular(f) * (d.times[k] - t0));
    freq.push_back(f);
    power.push_back(std::norm(acc));
  }
  std::vector<std::size_t> peaks;
  for (std::size_t k = 1; k + 1 < power.size(); ++k)
    if (power[k] >= power[k - 1] && power[k] > power[k + 1]) peaks.push_back(k);
  std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return power[a] > power[b]; });
  RamseyParams g;
  g.B = B;
  g.A = amax;
  g.t2 = span / 2;
  g.omega_s = omega_s;
  double center = peaks.empty() ? 0.0 : freq[peaks[0]];
  double nu = 0.0;
  if (peaks.size() >= 2 && power[peaks[1]] > 0.2 * power[peaks[0]]) {
    center = 0.5 * (freq[peaks[0]] + freq[peaks[1]]);
    nu = 0.5 * std::abs(freq[peaks[0]] - freq[peaks[1]]);
  }
  g.delta = center - omega_s;
  g.nu = nu;
  g.phi = detail::wrap_phase(std::arg(z.front()) - angular(center) * t0);
  return g;
}

namespace detail {

inline FitResult finish_ramsey(const RamseyDataset& d, const std::vector<double>& sigma, const FitOptions& opt,
                               RamseyVariant v, const LmResult& lm) {
  FitResult res;
  res.model = to_string(v);
  Eigen::VectorXd th = lm.theta;
  const Eigen::VectorXd sd = lm.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  res.names = {"A", "B", "phi", "t2", "delta", "nu"};
  double nu = th(5), b = v == RamseyVariant::free_b ? th(6) : 0.5, delta = th(4);
  if (const auto fs = uniform_sampling_rate(d.times)) {
    // Report the alias inside the Nyquist band; chi^2 is identical at every alias.
    nu = std::remainder(nu, *fs);
    const double w = delta + opt.omega_s;
    delta = std::remainder(w, *fs) - opt.omega_s;
  }
  // The model is even in nu once b is mirrored to 1 - b.
  if (nu < 0) {
    nu = -nu;
    b = 1 - b;
  }
  res.values = {th(0), th(1), wrap_phase(th(2)), th(3), delta, nu};
  res.sigmas = {sd(0), sd(1), sd(2), sd(3), sd(4), sd(5)};
  if (v == RamseyVariant::free_b) {
    res.names.push_back("b");
    res.values.push_back(b);
    res.sigmas.push_back(sd(6));
  }
  if (v == RamseyVariant::gaussian) {
    const double q = th(6), sq = sd(6);
    const double kappa = std::sqrt(std::max(q, 0.0));
    res.names.insert(res.names.end(), {"kappa_sq", "kappa"});
    res.values.insert(res.values.end(), {q, kappa});
    res.sigmas.insert(res.sigmas.end(), {sq, kappa > 0 ? 0.5 * sq / kappa : std::sqrt(sq)});
  }
  res.chi2 = lm.chi2;
  const std::size_t npts = 2 * d.times.size();
  res.dof = npts - static_cast<std::size_t>(th.size());
  res.reduced_chi2 = lm.chi2 / static_cast<double>(res.dof);
  res.iterations = lm.iterations;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  ramsey_residuals(d, sigma, opt.omega_s, v, lm.theta, r, J);
  res.residuals.assign(r.data(), r.data() + r.size());
  return res;
}

}  // namespace detail

// Weighted Levenberg-Marquardt fit of the Ramsey model. Without an explicit guess the
// spectrum guess seeds a multi-start over nu; free_b and gaussian fits start from the
// best fixed_b solution.
inline FitResult fit_ramsey(const RamseyDataset& d, RamseyVariant v, const FitOptions& opt = {}) {
  validate(d);
  const std::size_t np = detail::ramsey_param_count(v);
  if (2 * d.times.size() < 2 * np)
    throw ValidationError("fit: " + std::to_string(2 * d.times.size()) + " data points are fewer than twice the " +
                          std::to_string(np) + " free parameters");
  std::vector<double> sigma = detail::ramsey_sigmas(d, opt.weighting);

  auto run = [&](RamseyVariant var, const Eigen::VectorXd& theta0) {
    auto fn = [&](const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
      detail::ramsey_residuals(d, sigma, opt.omega_s, var, th, r, J);
    };
    return levenberg_marquardt(fn, theta0, opt.lm);
  };
  auto conclude = [&](RamseyVariant var, LmResult lm) {
    if (opt.weighting == Weighting::model) {
      sigma = detail::ramsey_model_sigmas(d, lm.theta, opt.omega_s, var);
      lm = run(var, lm.theta);
    }
    return detail::finish_ramsey(d, sigma, opt, var, lm);
  };
  auto best_of = [&](RamseyVariant var, const std::vector<RamseyParams>& starts) {
    std::optional<LmResult> best;
    std::string last_error;
    for (const auto& s : starts) {
      try {
        LmResult r = run(var, detail::pack(s, var));
        if (r.theta(3) > 0 && (!best || r.chi2 < best->chi2)) best = std::move(r);
      } catch (const NumericError& e) {
        last_error = e.what();
      }
    }
    if (!best) throw NumericError("fit (" + std::string(to_string(var)) + "): every start failed; last error: " + last_error);
    return *best;
  };

  std::vector<RamseyParams> starts;
  if (opt.initial_guess) {
    starts.push_back(*opt.initial_guess);
  } else {
    const RamseyParams g = ramsey_auto_guess(d, opt.omega_s);
    const double span = d.times.back() - d.times.front();
    const double res_hz = 1e6 / span;
    starts.push_back(g);
    for (double m : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
      RamseyParams s = g;
      s.nu = m * res_hz;
      starts.push_back(s);
    }
  }
  if (v == RamseyVariant::fixed_b || opt.initial_guess) return conclude(v, best_of(v, starts));
  const LmResult base = best_of(RamseyVariant::fixed_b, starts);
  RamseyParams seed;
  seed.A = base.theta(0);
  seed.B = base.theta(1);
  seed.phi = base.theta(2);
  seed.t2 = base.theta(3);
  seed.delta = base.theta(4);
  seed.nu = std::abs(base.theta(5));
  seed.omega_s = opt.omega_s;
  std::vector<RamseyParams> refined;
  if (v == RamseyVariant::free_b) {
    for (double b : {0.5, 0.3, 0.7}) {
      RamseyParams s = seed;
      s.b = b;
      refined.push_back(s);
    }
  } else {
    for (double kappa : {0.0, 1e-3, 1e-2}) {
      RamseyParams s = seed;
      s.kappa = kappa;
      refined.push_back(s);
    }
  }
  return conclude(v, best_of(v, refined));
}

// Fit of p1(t) = A exp(-t/T1) + B; B estimates the heating fraction.
inline FitResult fit_t1(const T1Dataset& d, const FitOptions& opt = {}) {
  validate(d);
  const std::size_t n = d.times.size();
  if (n < 6) throw ValidationError("fit_t1: need at least six points for three parameters");
  std::vector<double> sigma;
  for (std::size_t k = 0; k < n; ++k)
    sigma.push_back(opt.weighting == Weighting::uniform ? 1.0 : binomial_sigma(d.p1[k], d.shots[k]));
  auto fn = [&](const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    r.resize(static_cast<Eigen::Index>(n));
    J.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = d.times[k], e = std::exp(-t / th(2));
      const Eigen::Index i = static_cast<Eigen::Index>(k);
      r(i) = (d.p1[k] - (th(0) * e + th(1))) / sigma[k];
      J(i, 0) = -e / sigma[k];
      J(i, 1) = -1.0 / sigma[k];
      J(i, 2) = -th(0) * e * t / (th(2) * th(2)) / sigma[k];
    }
  };
  const std::size_t tail = std::max<std::size_t>(1, n / 5);
  double B = 0.0;
  for (std::size_t k = n - tail; k < n; ++k) B += d.p1[k];
  B /= static_cast<double>(tail);
  const double span = d.times.back() - d.times.front();
  std::optional<LmResult> best;
  std::string last_error;
  for (double frac : {0.1, 0.3, 1.0}) {
    Eigen::Vector3d th(d.p1.front() - B, B, frac * span);
    try {
      LmResult r = levenberg_marquardt(fn, th, opt.lm);
      if (r.theta(2) > 0 && (!best || r.chi2 < best->chi2)) best = std::move(r);
    } catch (const NumericError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw NumericError("fit_t1: every start failed; last error: " + last_error);
  FitResult res;
  res.model = "t1";
  res.names = {"A", "B", "t1"};
  const Eigen::VectorXd sd = best->covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  res.values = {best->theta(0), best->theta(1), best->theta(2)};
  res.sigmas = {sd(0), sd(1), sd(2)};
  res.chi2 = best->chi2;
  res.dof = n - 3;
  res.reduced_chi2 = best->chi2 / static_cast<double>(res.dof);
  res.iterations = best->iterations;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  fn(best->theta, r, J);
  res.residuals.assign(r.data(), r.data() + r.size());
  return res;
}

// ---------------------------------------------------------------------------------------
// Readout mitigation

struct ConfusionMatrix {
  double p00 = 1.0;  // P(read 0 | prepared 0)
  double p11 = 1.0;  // P(read 1 | prepared 1)
};

inline void validate(const ConfusionMatrix& cm) {
  if (!(cm.p00 >= 0 && cm.p00 <= 1 && cm.p11 >= 0 && cm.p11 <= 1))
    throw ValidationError("confusion matrix: entries must lie in [0, 1]");
  if (!(cm.p00 + cm.p11 > 1)) throw ValidationError("confusion matrix: not invertible (p00 + p11 must exceed 1)");
}

// <Z>_raw = (p00 - p11) + (p00 + p11 - 1) <Z>
inline double apply_confusion(double z, const ConfusionMatrix& cm) {
  validate(cm);
  return (cm.p00 - cm.p11) + (cm.p00 + cm.p11 - 1) * z;
}

inline double mitigate(double raw_z, const ConfusionMatrix& cm) {
  validate(cm);
  return (raw_z - (cm.p00 - cm.p11)) / (cm.p00 + cm.p11 - 1);
}

namespace detail {

// Applies a 2x2 matrix per qubit to a joint distribution indexed with qubit 0 most significant.
inline std::vector<double> apply_per_qubit(std::vector<double> p, const std::vector<Eigen::Matrix2d>& mats) {
  const std::size_t k = mats.size();
  if (p.size() != (std::size_t{1} << k)) throw ValidationError("mitigation: distribution size must be 2^qubits");
  for (std::size_t q = 0; q < k; ++q) {
    const std::size_t m = std::size_t{1} << (k - 1 - q);
    for (std::size_t s = 0; s < p.size(); ++s) {
      if (s & m) continue;
      const double a = p[s], b = p[s | m];
      p[s] = mats[q](0, 0) * a + mats[q](0, 1) * b;
      p[s | m] = mats[q](1, 0) * a + mats[q](1, 1) * b;
    }
  }
  return p;
}

inline Eigen::Matrix2d confusion_matrix(const ConfusionMatrix& cm) {
  validate(cm);
  Eigen::Matrix2d m;
  m << cm.p00, 1 - cm.p11, 1 - cm.p00, cm.p11;
  return m;
}

}  // namespace detail

// Forward readout model on a joint outcome distribution (uncorrelated errors).
inline std::vector<double> apply_confusion(const std::vector<double>& p, const std::vector<ConfusionMatrix>& cms) {
  std::vector<Eigen::Matrix2d> mats;
  for (const auto& c : cms) mats.push_back(detail::confusion_matrix(c));
  return detail::apply_per_qubit(p, mats);
}

// Tensor-product inverse of the per-qubit confusion matrices.
inline std::vector<double> mitigate(const std::vector<double>& raw, const std::vector<ConfusionMatrix>& cms) {
  std::vector<Eigen::Matrix2d> mats;
  for (const auto& c : cms) mats.push_back(detail::confusion_matrix(c).inverse());
  return detail::apply_per_qubit(raw, mats);
}

// Expectation of the parity operator (product of the measured Paulis after basis change)
// from a joint distribution: sum_s (-1)^popcount(s) p(s).
inline double parity_expectation(const std::vector<double>& p) {
  double acc = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) acc += (__builtin_popcountll(s) % 2 ? -1.0 : 1.0) * p[s];
  return acc;
}

// ---------------------------------------------------------------------------------------
// Dataset files

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ": column '" + column + "': cannot parse '" + s + "' as a number");
  return v;
}

inline std::uint64_t parse_count(const std::string& s, std::size_t line, const std::string& column) {
  const double v = parse_number(s, line, column);
  if (v < 1 || v != std::floor(v))
    throw ParseError("line " + std::to_string(line) + ": column '" + column + "': expected a positive integer, got '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

// Rows of a CSV with exactly the given header; blank lines and '#' comments are skipped.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(std::istream& in,
                                                                               const std::vector<std::string>& header) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto cells = split_csv(line);
    if (!have_header) {
      if (cells != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw ParseError("line " + std::to_string(lineno) + ": expected header '" + want + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    rows.emplace_back(lineno, std::move(cells));
  }
  if (!have_header) throw ParseError("line " + std::to_string(lineno) + ": missing header");
  return rows;
}

inline double parse_probability(const std::string& s, std::size_t line, const std::string& column) {
  const double v = parse_number(s, line, column);
  if (v < 0 || v > 1) throw ParseError("line " + std::to_string(line) + ": column '" + column + "': probability outside [0, 1]");
  return v;
}

}  // namespace detail

inline RamseyDataset read_ramsey_csv(std::istream& in) {
  RamseyDataset d;
  for (const auto& [line, c] : detail::read_csv(in, {"time_us", "p_x", "p_y", "shots"})) {
    d.times.push_back(detail::parse_number(c[0], line, "time_us"));
    d.p_x.push_back(detail::parse_probability(c[1], line, "p_x"));
    d.p_y.push_back(detail::parse_probability(c[2], line, "p_y"));
    d.shots.push_back(detail::parse_count(c[3], line, "shots"));
  }
  return d;
}

inline T1Dataset read_t1_csv(std::istream& in) {
  T1Dataset d;
  for (const auto& [line, c] : detail::read_csv(in, {"time_us", "p1", "shots"})) {
    d.times.push_back(detail::parse_number(c[0], line, "time_us"));
    d.p1.push_back(detail::parse_probability(c[1], line, "p1"));
    d.shots.push_back(detail::parse_count(c[2], line, "shots"));
  }
  return d;
}

inline void write_ramsey_csv(std::ostream& out, const RamseyDataset& d) {
  out << "time_us,p_x,p_y,shots\n";
  for (std::size_t k = 0; k < d.times.size(); ++k)
    out << format_double(d.times[k]) << ',' << format_double(d.p_x[k]) << ',' << format_double(d.p_y[k]) << ','
        << d.shots[k] << '\n';
}

inline void write_t1_csv(std::ostream& out, const T1Dataset& d) {
  out << "time_us,p1,shots\n";
  for (std::size_t k = 0; k < d.times.size(); ++k)
    out << format_double(d.times[k]) << ',' << format_double(d.p1[k]) << ',' << d.shots[k] << '\n';
}

}  // namespace qdyn
