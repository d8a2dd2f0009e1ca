#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "qdyn/errors.hpp"

namespace qdyn {

enum class Pauli : unsigned char { I = 0, X = 1, Y = 2, Z = 3 };

inline char to_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

// Single-qubit Paulis anticommute iff both are non-identity and different.
inline bool anticommute(Pauli a, Pauli b) { return a != Pauli::I && b != Pauli::I && a != b; }

class PauliString {
 public:
  PauliString() = default;
  explicit PauliString(std::size_t n) : ops_(n, Pauli::I) {}
  explicit PauliString(std::vector<Pauli> ops) : ops_(std::move(ops)) {}

  // Dense form, one letter per qubit: "ZXZ", "IIX".
  static PauliString from_dense(std::string_view letters) {
    std::vector<Pauli> ops;
    for (char c : letters) ops.push_back(parse_letter(c));
    return PauliString(std::move(ops));
  }

  // Sparse form "Z0X1Z2" (indices may have several digits) on n qubits.
  static PauliString from_sparse(std::string_view text, std::size_t n) {
    PauliString p(n);
    std::size_t k = 0;
    if (text.empty()) throw ParseError("pauli: empty string");
    while (k < text.size()) {
      Pauli op = parse_letter(text[k++]);
      std::size_t start = k;
      while (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) ++k;
      if (start == k) throw ParseError("pauli: missing qubit index in '" + std::string(text) + "'");
      std::size_t idx = std::stoul(std::string(text.substr(start, k - start)));
      if (idx >= n) throw ValidationError("pauli: qubit index " + std::to_string(idx) + " out of range");
      p.ops_[idx] = op;
    }
    return p;
  }

  std::size_t size() const { return ops_.size(); }
  Pauli operator[](std::size_t i) const { return ops_[i]; }
  Pauli& operator[](std::size_t i) { return ops_[i]; }
  const std::vector<Pauli>& ops() const { return ops_; }

  std::vector<std::size_t> support() const {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < ops_.size(); ++i)
      if (ops_[i] != Pauli::I) s.push_back(i);
    return s;
  }

  bool is_identity() const { return support().empty(); }

  bool commutes_with(const PauliString& other) const {
    if (other.size() != size()) throw ValidationError("pauli: size mismatch");
    std::size_t anti = 0;
    for (std::size_t i = 0; i < ops_.size(); ++i) anti += anticommute(ops_[i], other.ops_[i]);
    return anti % 2 == 0;
  }

  std::string dense() const {
    std::string s;
    for (auto p : ops_) s.push_back(to_char(p));
    return s;
  }

  // "Z0X1Z2"; identity prints as "I".
  std::string sparse() const {
    std::string s;
    for (std::size_t i = 0; i < ops_.size(); ++i)
      if (ops_[i] != Pauli::I) s += to_char(ops_[i]) + std::to_string(i);
    return s.empty() ? "I" : s;
  }

  friend bool operator==(const PauliString&, const PauliString&) = default;

 private:
  static Pauli parse_letter(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
      case 'I': return Pauli::I;
      case 'X': return Pauli::X;
      case 'Y': return Pauli::Y;
      case 'Z': return Pauli::Z;
    }
    throw ParseError(std::string("pauli: unknown operator '") + c + "'");
  }

  std::vector<Pauli> ops_;
};

inline PauliString single_pauli(std::size_t n, std::size_t qubit, Pauli op) {
  if (qubit >= n) throw ValidationError("pauli: qubit index out of range");
  PauliString p(n);
  p[qubit] = op;
  return p;
}

}  // namespace qdyn
