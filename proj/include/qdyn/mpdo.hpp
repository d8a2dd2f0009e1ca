#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdyn/errors.hpp"
#include "qdyn/linalg.hpp"
#include "qdyn/pauli.hpp"

namespace qdyn {

struct MpdoTruncation {
  std::size_t max_bond = 64;
  double eps = 1e-12;  // relative singular-value cutoff; 0 means strict (no discarding)
};

// Vectorised density operator as a matrix-product state over sites q0, p0, q1, p1, ...
// (qubit i at position 2i, its parity partner at 2i+1). Every site carries the local
// superoperator index a = 2*s + s' of |s><s'|, so each tensor is four Dl x Dr matrices.
// For a parity site a = 0 is the even and a = 3 the odd population.
//
// The chain is kept in mixed-canonical form around `center()`; every non-unitary update
// happens at (or inside a group containing) the centre, so SVD truncation is optimal in
// the Hilbert-Schmidt norm.
class MpdoState {
 public:
  using Block = Eigen::MatrixXcd;
  using Site = std::array<Block, 4>;
  using cplx = std::complex<double>;

  enum class Direction { left, right };

  using Truncation = MpdoTruncation;

  MpdoState() = default;

  // Product operator from one 4-vector per site in chain order.
  static MpdoState product(std::span<const Eigen::Vector4cd> site_vectors, Truncation trunc = {}) {
    if (site_vectors.empty() || site_vectors.size() % 2 != 0)
      throw ValidationError("mpdo: need an even, non-zero number of sites");
    MpdoState s;
    s.trunc_ = trunc;
    for (const auto& v : site_vectors) {
      Site t;
      for (int a = 0; a < 4; ++a) t[a] = Block::Constant(1, 1, v(a));
      s.sites_.push_back(std::move(t));
      s.layout_.push_back(s.layout_.size());
    }
    s.center_ = s.sites_.size() - 1;
    s.move_center(0);
    return s;
  }

  std::size_t num_sites() const { return sites_.size(); }
  std::size_t num_qubits() const { return sites_.size() / 2; }
  std::size_t center() const { return center_; }
  const Site& site(std::size_t k) const { return sites_.at(k); }
  const Truncation& truncation() const { return trunc_; }
  void set_truncation(Truncation t) { trunc_ = t; }

  // Bond between positions k and k+1.
  std::size_t bond(std::size_t k) const { return static_cast<std::size_t>(sites_.at(k)[0].cols()); }

  std::size_t max_bond() const {
    std::size_t m = 1;
    for (std::size_t k = 0; k + 1 < sites_.size(); ++k) m = std::max(m, bond(k));
    return m;
  }
  std::size_t max_bond_reached() const { return std::max(max_bond_reached_, max_bond()); }
  double truncation_weight() const { return trunc_weight_; }

  void move_center(std::size_t k) {
    if (k >= sites_.size()) throw ValidationError("mpdo: centre position out of range");
    while (center_ < k) left_orthonormalize(center_++);
    while (center_ > k) right_orthonormalize(center_--);
  }

  // Local superoperator on one site. Non-unitary maps are applied at the centre.
  void apply_one_site(std::size_t k, const Eigen::Matrix4cd& op, bool unitary = false) {
    if (!unitary) move_center(k);
    apply_one_site_raw(k, op);
  }

  // Diagonal superoperator on positions (k, k+1); phases indexed a_k * 4 + a_{k+1}.
  // The centre ends on the side given by `dir`.
  void apply_two_site_diag(std::size_t k, const std::array<cplx, 16>& phase, Direction dir) {
    check_pair(k);
    gather_center(k, 2);
    std::vector<Block> theta = contract(k, 2);
    for (int a = 0; a < 16; ++a)
      if (phase[a] != cplx(1, 0)) theta[a] *= phase[a];
    split2(k, theta, dir);
  }

  // Diagonal superoperator on positions (k, k+1, k+2); phases indexed a0*16 + a1*4 + a2.
  // `pre` (optional) is applied first to the far site that the centre moves towards
  // (k+2 for a right sweep, k for a left sweep).
  void apply_three_site_diag(std::size_t k, const std::array<cplx, 64>& phase, Direction dir,
                             const Eigen::Matrix4cd* pre = nullptr) {
    if (k + 2 >= sites_.size()) throw ValidationError("mpdo: three-site group out of range");
    gather_center(k, 3);
    if (pre) apply_one_site_raw(dir == Direction::right ? k + 2 : k, *pre);
    std::vector<Block> theta = contract(k, 3);
    for (int a = 0; a < 64; ++a)
      if (phase[a] != cplx(1, 0)) theta[a] *= phase[a];
    const Eigen::Index dl = theta[0].rows(), dr = theta[0].cols();
    if (dir == Direction::right) {
      auto [left, rest] = split(theta, 4, 16, dl, dr, Direction::right);
      sites_[k] = to_site(left);
      auto [mid, right] = split(rest, 4, 4, rest[0].rows(), dr, Direction::right);
      sites_[k + 1] = to_site(mid);
      sites_[k + 2] = to_site(right);
      center_ = k + 2;
    } else {
      auto [rest, right] = split(theta, 16, 4, dl, dr, Direction::left);
      sites_[k + 2] = to_site(right);
      auto [left, mid] = split(rest, 4, 4, dl, rest[0].cols(), Direction::left);
      sites_[k] = to_site(left);
      sites_[k + 1] = to_site(mid);
      center_ = k;
    }
    note_bonds();
  }

  // Exchanges the sites at positions k and k+1.
  void swap(std::size_t k, Direction dir) {
    check_pair(k);
    gather_center(k, 2);
    std::vector<Block> theta = contract(k, 2);
    std::vector<Block> swapped(16);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) swapped[b * 4 + a] = std::move(theta[a * 4 + b]);
    split2(k, swapped, dir);
    std::swap(layout_[k], layout_[k + 1]);
  }

  // Diagonal superoperator between qubits i and j (any distance); phases indexed
  // a_i * 4 + a_j. Adjacent qubits go through a three-site group, distant ones are
  // routed by swaps and restored afterwards.
  void apply_qubit_pair_diag(std::size_t qi, std::size_t qj, std::array<cplx, 16> phase) {
    if (qi == qj || qi >= num_qubits() || qj >= num_qubits()) throw ValidationError("mpdo: invalid qubit pair");
    if (qi > qj) {
      std::array<cplx, 16> t{};
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) t[a * 4 + b] = phase[b * 4 + a];
      phase = t;
      std::swap(qi, qj);
    }
    const std::size_t pi = 2 * qi, pj = 2 * qj;
    if (pj == pi + 2) {
      std::array<cplx, 64> p3{};
      for (int a0 = 0; a0 < 4; ++a0)
        for (int a1 = 0; a1 < 4; ++a1)
          for (int a2 = 0; a2 < 4; ++a2) p3[a0 * 16 + a1 * 4 + a2] = phase[a0 * 4 + a2];
      const Direction dir = center_ <= pi ? Direction::right : Direction::left;
      apply_three_site_diag(pi, p3, dir);
      return;
    }
    route_diag(pi, pj, phase);
  }

  // Brings position pj next to pi (pi < pj) with swaps, applies, and swaps back. The
  // moving site is whichever end is nearer the centre.
  void route_diag(std::size_t pi, std::size_t pj, const std::array<cplx, 16>& phase) {
    if (center_ >= pj || center_ + center_ >= pi + pj) {
      move_center(pj);
      for (std::size_t p = pj; p > pi + 1; --p) swap(p - 1, Direction::left);
      apply_two_site_diag(pi, phase, Direction::right);
      for (std::size_t p = pi + 1; p < pj; ++p) swap(p, Direction::right);
    } else {
      move_center(pi);
      for (std::size_t p = pi; p + 1 < pj; ++p) swap(p, Direction::right);
      apply_two_site_diag(pj - 1, phase, Direction::left);
      for (std::size_t p = pj - 1; p > pi; --p) swap(p - 1, Direction::left);
    }
  }

  // Replaces every parity site's diagonal pair (w_even, w_odd) by (w_even + w_odd) on both
  // entries. For a parity factor diag(b, 1-b) this yields the identity, i.e. the operator
  // becomes (qubit part) (x) I on parity.
  void replace_parity_with_trace() {
    for (std::size_t k = 0; k < sites_.size(); ++k) {
      if (layout_[k] % 2 == 0) continue;
      Block sum = sites_[k][0] + sites_[k][3];
      sites_[k][0] = sum;
      sites_[k][3] = std::move(sum);
      sites_[k][1].setZero();
      sites_[k][2].setZero();
    }
  }

  // Sum over all indices of prod_k v_k[a_k] * A_k[a_k]; vectors given per logical site.
  cplx contract_with(std::span<const Eigen::Vector4cd> vecs) const {
    if (vecs.size() != sites_.size()) throw ValidationError("mpdo: one vector per site required");
    Eigen::RowVectorXcd env = Eigen::RowVectorXcd::Ones(1);
    for (std::size_t k = 0; k < sites_.size(); ++k) {
      const auto& v = vecs[layout_[k]];
      Block m = v(0) * sites_[k][0];
      for (int a = 1; a < 4; ++a)
        if (v(a) != cplx(0, 0)) m += v(a) * sites_[k][a];
      env = env * m;
    }
    return env(0);
  }

  // <this|other> = sum conj(this) * other over the full index space.
  cplx overlap(const MpdoState& other) const {
    if (other.sites_.size() != sites_.size()) throw ValidationError("mpdo: overlap of different lengths");
    Block env = Block::Ones(1, 1);
    for (std::size_t k = 0; k < sites_.size(); ++k) {
      Block next = Block::Zero(sites_[k][0].cols(), other.sites_[k][0].cols());
      for (int a = 0; a < 4; ++a) next.noalias() += sites_[k][a].adjoint() * env * other.sites_[k][a];
      env = std::move(next);
    }
    return env(0, 0);
  }

  // Marginal of one logical site: contracts every other site with the trace vector.
  Eigen::Vector4cd marginal(std::size_t logical_site) const {
    Eigen::Vector4cd out = Eigen::Vector4cd::Zero();
    const Eigen::Vector4cd tr(1, 0, 0, 1);
    for (int a = 0; a < 4; ++a) {
      std::vector<Eigen::Vector4cd> vecs(sites_.size(), tr);
      vecs[logical_site] = Eigen::Vector4cd::Zero();
      vecs[logical_site](a) = 1;
      out(a) = contract_with(vecs);
    }
    return out;
  }

  cplx trace() const {
    std::vector<Eigen::Vector4cd> vecs(sites_.size(), Eigen::Vector4cd(1, 0, 0, 1));
    return contract_with(vecs);
  }

  // tr(rho P) with parity sites traced out.
  cplx expect(const PauliString& p) const {
    if (p.size() != num_qubits()) throw ValidationError("expect: Pauli string length differs from qubit count");
    std::vector<Eigen::Vector4cd> vecs(sites_.size(), Eigen::Vector4cd(1, 0, 0, 1));
    for (std::size_t i = 0; i < p.size(); ++i) vecs[2 * i] = pauli_vector(p[i]);
    return contract_with(vecs);
  }

  // Component vector v with tr(rho P) = sum_a v[a] rho_a for a = 2s+s': v[a] = P[s'][s].
  static Eigen::Vector4cd pauli_vector(Pauli p) {
    switch (p) {
      case Pauli::I: return {1, 0, 0, 1};
      case Pauli::X: return {0, 1, 1, 0};
      case Pauli::Y: return {0, cplx(0, 1), cplx(0, -1), 0};
      case Pauli::Z: return {1, 0, 0, -1};
    }
    return {1, 0, 0, 1};
  }

 private:
  void check_pair(std::size_t k) const {
    if (k + 1 >= sites_.size()) throw ValidationError("mpdo: two-site group out of range");
  }

  void apply_one_site_raw(std::size_t k, const Eigen::Matrix4cd& op) {
    Site& s = sites_.at(k);
    Site out;
    for (int a = 0; a < 4; ++a) {
      out[a] = Block::Zero(s[0].rows(), s[0].cols());
      for (int b = 0; b < 4; ++b)
        if (op(a, b) != cplx(0, 0)) out[a] += op(a, b) * s[b];
    }
    s = std::move(out);
  }

  // Puts the centre inside [k, k+len).
  void gather_center(std::size_t k, std::size_t len) {
    if (center_ < k) move_center(k);
    else if (center_ >= k + len) move_center(k + len - 1);
  }

  // Blocks of the contracted group, indexed by the group's physical indices (row-major).
  std::vector<Block> contract(std::size_t k, std::size_t len) const {
    std::vector<Block> cur(sites_[k].begin(), sites_[k].end());
    for (std::size_t j = 1; j < len; ++j) {
      std::vector<Block> next;
      next.reserve(cur.size() * 4);
      for (const auto& c : cur)
        for (int a = 0; a < 4; ++a) next.push_back(c * sites_[k + j][a]);
      cur = std::move(next);
    }
    return cur;
  }

  static Site to_site(std::vector<Block>& blocks) {
    Site s;
    for (int a = 0; a < 4; ++a) s[a] = std::move(blocks[a]);
    return s;
  }

  void split2(std::size_t k, std::vector<Block>& theta, Direction dir) {
    const Eigen::Index dl = theta[0].rows(), dr = theta[0].cols();
    auto [left, right] = split(theta, 4, 4, dl, dr, dir);
    sites_[k] = to_site(left);
    sites_[k + 1] = to_site(right);
    center_ = dir == Direction::right ? k + 1 : k;
    note_bonds();
  }

  // SVD across the cut between the first `dleft` and last `dright` physical index values.
  std::pair<std::vector<Block>, std::vector<Block>> split(const std::vector<Block>& blocks, int dleft, int dright,
                                                          Eigen::Index dl, Eigen::Index dr, Direction dir) {
    Eigen::MatrixXcd m(dleft * dl, dright * dr);
    for (int i = 0; i < dleft; ++i)
      for (int j = 0; j < dright; ++j) m.block(i * dl, j * dr, dl, dr) = blocks[i * dright + j];

    ThinSvd svd = thin_svd(std::move(m));
    const Eigen::VectorXd& s = svd.s;
    const Eigen::Index keep = truncate(s);

    Eigen::MatrixXcd u = svd.u.leftCols(keep);
    Eigen::MatrixXcd vh = svd.vh.topRows(keep);
    if (dir == Direction::right) vh = s.head(keep).asDiagonal() * vh;
    else u = u * s.head(keep).asDiagonal();

    std::vector<Block> left(dleft), right(dright);
    for (int i = 0; i < dleft; ++i) left[i] = u.middleRows(i * dl, dl);
    for (int j = 0; j < dright; ++j) right[j] = vh.middleCols(j * dr, dr);
    return {std::move(left), std::move(right)};
  }

  Eigen::Index truncate(const Eigen::VectorXd& s) {
    const Eigen::Index n = s.size();
    if (n == 0 || s(0) == 0.0) return 1;
    Eigen::Index keep = 0;
    if (trunc_.eps > 0) {
      while (keep < n && s(keep) > trunc_.eps * s(0)) ++keep;
      keep = std::min<Eigen::Index>(keep, static_cast<Eigen::Index>(trunc_.max_bond));
    } else {
      const double floor = s(0) * 1e-14 * static_cast<double>(n);
      while (keep < n && s(keep) > floor) ++keep;
      if (keep > static_cast<Eigen::Index>(trunc_.max_bond))
        throw NumericError("mpdo: bond dimension " + std::to_string(keep) + " exceeds max_bond " +
                           std::to_string(trunc_.max_bond) + " in strict mode");
    }
    keep = std::max<Eigen::Index>(keep, 1);
    if (keep < n) {
      const double total = s.squaredNorm();
      const double dropped = s.tail(n - keep).squaredNorm();
      if (total > 0) trunc_weight_ += dropped / total;
    }
    return keep;
  }

  void note_bonds() {
    for (std::size_t k = 0; k + 1 < sites_.size(); ++k) max_bond_reached_ = std::max(max_bond_reached_, bond(k));
  }

  void left_orthonormalize(std::size_t k) {
    Site& s = sites_[k];
    const Eigen::Index dl = s[0].rows(), dr = s[0].cols();
    Eigen::MatrixXcd m(4 * dl, dr);
    for (int a = 0; a < 4; ++a) m.middleRows(a * dl, dl) = s[a];
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
    const Eigen::Index r = std::min(4 * dl, dr);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(4 * dl, r);
    Eigen::MatrixXcd rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    for (int a = 0; a < 4; ++a) s[a] = q.middleRows(a * dl, dl);
    for (int a = 0; a < 4; ++a) sites_[k + 1][a] = rr * sites_[k + 1][a];
  }

  void right_orthonormalize(std::size_t k) {
    Site& s = sites_[k];
    const Eigen::Index dl = s[0].rows(), dr = s[0].cols();
    Eigen::MatrixXcd m(dl, 4 * dr);
    for (int a = 0; a < 4; ++a) m.middleCols(a * dr, dr) = s[a];
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m.adjoint());
    const Eigen::Index r = std::min(4 * dr, dl);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(4 * dr, r);
    Eigen::MatrixXcd rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    Eigen::MatrixXcd qh = q.adjoint();
    for (int a = 0; a < 4; ++a) s[a] = qh.middleCols(a * dr, dr);
    const Eigen::MatrixXcd rh = rr.adjoint();
    for (int a = 0; a < 4; ++a) sites_[k - 1][a] = sites_[k - 1][a] * rh;
  }

  std::vector<Site> sites_;
  std::vector<std::size_t> layout_;  // position -> logical site
  std::size_t center_ = 0;
  Truncation trunc_;
  double trunc_weight_ = 0.0;
  std::size_t max_bond_reached_ = 1;
};

}  // namespace qdyn
