#include "scorebeam/complexm.hpp"

#include <cmath>
#include <stdexcept>

namespace scorebeam {

ComplexMatrix::ComplexMatrix(int64_t rows, int64_t cols)
    : n_rows(rows), n_cols(cols),
      re(Tensor::zeros({rows, cols})),
      im(Tensor::zeros({rows, cols})) {}

ComplexMatrix::ComplexMatrix(Tensor real, Tensor imag)
    : re(std::move(real)), im(std::move(imag)) {
  if (!same_shape(re, im) || re.rank() != 2) {
    throw std::invalid_argument("complex matrix needs matching rank-2 re/im parts");
  }
  n_rows = re.shape[0];
  n_cols = re.shape[1];
}

double ComplexMatrix::frobenius_norm() const {
  double s = 0.0;
  for (size_t i = 0; i < re.data.size(); ++i) {
    s += re.data[i] * re.data[i] + im.data[i] * im.data[i];
  }
  return std::sqrt(s);
}

bool same_dims(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a.n_rows == b.n_rows && a.n_cols == b.n_cols;
}

ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (!same_dims(a, b)) throw std::invalid_argument("complex add: shape mismatch");
  ComplexMatrix out = a;
  for (size_t i = 0; i < out.re.data.size(); ++i) {
    out.re.data[i] += b.re.data[i];
    out.im.data[i] += b.im.data[i];
  }
  return out;
}

ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (!same_dims(a, b)) throw std::invalid_argument("complex sub: shape mismatch");
  ComplexMatrix out = a;
  for (size_t i = 0; i < out.re.data.size(); ++i) {
    out.re.data[i] -= b.re.data[i];
    out.im.data[i] -= b.im.data[i];
  }
  return out;
}

ComplexMatrix conj_transpose_plain(const ComplexMatrix& a) {
  ComplexMatrix out(a.n_cols, a.n_rows);
  for (int64_t i = 0; i < a.n_rows; ++i)
    for (int64_t j = 0; j < a.n_cols; ++j) out.set(j, i, std::conj(a.at(i, j)));
  return out;
}

ComplexMatrix cmatmul_plain(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.n_cols != b.n_rows) throw std::invalid_argument("complex matmul: inner dims");
  ComplexMatrix out(a.n_rows, b.n_cols);
  for (int64_t i = 0; i < a.n_rows; ++i) {
    for (int64_t p = 0; p < a.n_cols; ++p) {
      const std::complex<double> av = a.at(i, p);
      if (av == std::complex<double>(0.0, 0.0)) continue;
      for (int64_t j = 0; j < b.n_cols; ++j) {
        out.set(i, j, out.at(i, j) + av * b.at(p, j));
      }
    }
  }
  return out;
}

CVar cvar(Tape& t, const ComplexMatrix& m) {
  return {t.constant(m.re), t.constant(m.im)};
}

ComplexMatrix cval(const CVar& v) { return ComplexMatrix(v.re.val(), v.im.val()); }

CVar cmatmul(Tape& t, CVar a, CVar b) {
  // (ar + i ai)(br + i bi) = (ar br - ai bi) + i (ar bi + ai br)
  Var rr = t.matmul(a.re, b.re);
  Var ii = t.matmul(a.im, b.im);
  Var ri = t.matmul(a.re, b.im);
  Var ir = t.matmul(a.im, b.re);
  return {t.sub(rr, ii), t.add(ri, ir)};
}

CVar cconj_transpose(Tape& t, CVar a) {
  return {t.transpose(a.re), t.neg(t.transpose(a.im))};
}

CVar cadd(Tape& t, CVar a, CVar b) { return {t.add(a.re, b.re), t.add(a.im, b.im)}; }
CVar csub(Tape& t, CVar a, CVar b) { return {t.sub(a.re, b.re), t.sub(a.im, b.im)}; }

CVar cmul_elem(Tape& t, CVar a, CVar b) {
  Var rr = t.mul(a.re, b.re);
  Var ii = t.mul(a.im, b.im);
  Var ri = t.mul(a.re, b.im);
  Var ir = t.mul(a.im, b.re);
  return {t.sub(rr, ii), t.add(ri, ir)};
}

Var cabs2(Tape& t, CVar a) { return t.add(t.square(a.re), t.square(a.im)); }

}  // namespace scorebeam
