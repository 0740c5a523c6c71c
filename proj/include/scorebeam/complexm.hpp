#pragma once

#include <complex>

#include "scorebeam/tape.hpp"
#include "scorebeam/tensor.hpp"

namespace scorebeam {

/// Complex matrix stored as split real/imaginary tensors so the (real)
/// differentiation engine can see through it.
struct ComplexMatrix {
  int64_t n_rows = 0;
  int64_t n_cols = 0;
  Tensor re;
  Tensor im;

  ComplexMatrix() = default;
  ComplexMatrix(int64_t rows, int64_t cols);
  ComplexMatrix(Tensor real, Tensor imag);

  std::complex<double> at(int64_t i, int64_t j) const {
    return {re.at(i, j), im.at(i, j)};
  }
  void set(int64_t i, int64_t j, std::complex<double> v) {
    re.at(i, j) = v.real();
    im.at(i, j) = v.imag();
  }

  double frobenius_norm() const;
  bool all_finite() const { return re.all_finite() && im.all_finite(); }
};

ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b);
bool same_dims(const ComplexMatrix& a, const ComplexMatrix& b);

/// a^H b for two complex matrices (plain, no tape).
ComplexMatrix cmatmul_plain(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix conj_transpose_plain(const ComplexMatrix& a);

/// Complex pair of tape variables.
struct CVar {
  Var re, im;
};

CVar cvar(Tape& t, const ComplexMatrix& m);
ComplexMatrix cval(const CVar& v);

/// Product via four real matmuls.
CVar cmatmul(Tape& t, CVar a, CVar b);
CVar cconj_transpose(Tape& t, CVar a);
CVar cadd(Tape& t, CVar a, CVar b);
CVar csub(Tape& t, CVar a, CVar b);
/// Elementwise complex product, broadcasting via the underlying real ops.
CVar cmul_elem(Tape& t, CVar a, CVar b);
/// Elementwise |z|^2 = re^2 + im^2.
Var cabs2(Tape& t, CVar a);

}  // namespace scorebeam
