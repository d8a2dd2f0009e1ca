#pragma once

#include <complex>
#include <string>

#include <Eigen/Dense>

#include <lapacke.h>

#include "qdyn/errors.hpp"

namespace qdyn {

struct ThinSvd {
  Eigen::MatrixXcd u;       // m x k
  Eigen::VectorXd s;        // k, descending
  Eigen::MatrixXcd vh;      // k x n
};

// Thin SVD through LAPACK divide-and-conquer, falling back to the QR-iteration driver
// when zgesdd fails to converge.
inline ThinSvd thin_svd(Eigen::MatrixXcd a) {
  const lapack_int m = static_cast<lapack_int>(a.rows());
  const lapack_int n = static_cast<lapack_int>(a.cols());
  const lapack_int k = std::min(m, n);
  ThinSvd r;
  r.u.resize(m, k);
  r.s.resize(k);
  r.vh.resize(k, n);
  if (k == 0) return r;
  const Eigen::MatrixXcd backup = a;
  auto z = [](Eigen::MatrixXcd& x) { return reinterpret_cast<lapack_complex_double*>(x.data()); };
  lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'S', m, n, z(a), m, r.s.data(), z(r.u), m, z(r.vh), k);
  if (info > 0) {
    a = backup;
    Eigen::VectorXd superb(k);
    info = LAPACKE_zgesvd(LAPACK_COL_MAJOR, 'S', 'S', m, n, z(a), m, r.s.data(), z(r.u), m, z(r.vh), k,
                          superb.data());
  }
  if (info != 0) throw NumericError("svd: LAPACK returned info = " + std::to_string(info));
  return r;
}

}  // namespace qdyn
