#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "qdyn/errors.hpp"

namespace qdyn {

struct LmOptions {
  double lambda0 = 1e-3;
  double factor = 10.0;
  double rel_tol = 1e-10;  // relative chi^2 change of an accepted step
  int max_iterations = 200;  // every trial step counts
};

struct LmResult {
  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  int iterations = 0;
};

// Levenberg-Marquardt on weighted residuals. `fn(theta, r, J)` fills r (already divided by
// the per-point sigma) and J = dr/dtheta. The covariance is (J^T J)^-1 at the optimum.
template <class Fn>
LmResult levenberg_marquardt(Fn&& fn, Eigen::VectorXd theta, const LmOptions& opt = {}) {
  Eigen::VectorXd r, rt;
  Eigen::MatrixXd J, Jt;
  fn(theta, r, J);
  if (!r.allFinite() || !J.allFinite()) throw NumericError("fit: model is not finite at the initial guess");
  double chi2 = r.squaredNorm();
  double lambda = opt.lambda0;
  int it = 0;
  bool converged = false;
  while (!converged) {
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      if (++it > opt.max_iterations)
        throw NumericError("fit: no convergence after " + std::to_string(opt.max_iterations) +
                           " iterations (chi2 = " + std::to_string(chi2) + ", lambda = " + std::to_string(lambda) + ")");
      Eigen::MatrixXd M = A;
      for (Eigen::Index k = 0; k < M.rows(); ++k) M(k, k) += lambda * std::max(A(k, k), 1e-300);
      const Eigen::VectorXd delta = M.ldlt().solve(-g);
      const Eigen::VectorXd trial = theta + delta;
      fn(trial, rt, Jt);
      const double chi2t = rt.squaredNorm();
      if (delta.allFinite() && std::isfinite(chi2t) && Jt.allFinite() && chi2t <= chi2) {
        const double rel = (chi2 - chi2t) / std::max(chi2, std::numeric_limits<double>::min());
        theta = trial;
        r.swap(rt);
        J.swap(Jt);
        chi2 = chi2t;
        lambda = std::max(lambda / opt.factor, 1e-12);
        accepted = true;
        converged = rel < opt.rel_tol;
      } else {
        lambda *= opt.factor;
        // No descent direction left at working precision: the current point is the optimum.
        if (lambda > 1e16) {
          accepted = true;
          converged = true;
        }
      }
    }
  }

  // Rank is judged on the unit-diagonal (correlation) form so parameter scales do not matter.
  const Eigen::MatrixXd A = J.transpose() * J;
  const Eigen::VectorXd d = A.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd C = d.asDiagonal() * A * d.asDiagonal();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
  lu.setThreshold(1e-12);
  if (lu.rank() < C.rows() || (A.diagonal().array() <= 0).any())
    throw NumericError("fit: singular Jacobian at the optimum (parameters not identifiable)");
  LmResult res;
  res.theta = theta;
  res.covariance = d.asDiagonal() * lu.inverse() * d.asDiagonal();
  res.chi2 = chi2;
  res.iterations = it;
  return res;
}

}  // namespace qdyn
