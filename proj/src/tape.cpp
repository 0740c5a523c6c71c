#include "scorebeam/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scorebeam {

// ---------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------

std::shared_ptr<Tensor> ParamStore::add(const std::string& name, Tensor t) {
  if (tensors_.count(name)) {
    throw std::invalid_argument("parameter already registered: " + name);
  }
  t.requires_grad = true;
  auto p = std::make_shared<Tensor>(std::move(t));
  tensors_[name] = p;
  return p;
}

std::shared_ptr<Tensor> ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no such parameter: " + name);
  return it->second;
}

void ParamStore::set(const std::string& name, Tensor t) {
  t.requires_grad = true;
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    tensors_[name] = std::make_shared<Tensor>(std::move(t));
  } else {
    *it->second = std::move(t);
  }
}

int64_t ParamStore::total_values() const {
  int64_t n = 0;
  for (const auto& [name, t] : tensors_) n += t->numel();
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) out.add(name, *t);
  return out;
}

void ParamStore::assign_from(const ParamStore& other) {
  for (const auto& [name, t] : other.entries()) set(name, *t);
}

// ---------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------

namespace {

std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a,
                                     const std::vector<int64_t>& b) {
  const size_t r = std::max(a.size(), b.size());
  std::vector<int64_t> out(r);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("shapes not broadcastable: " + shape_str(a) +
                                  " vs " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides padded to `rank`, with stride 0 on broadcast dims.
std::vector<int64_t> broadcast_strides(const std::vector<int64_t>& shape, size_t rank,
                                       const std::vector<int64_t>& out_shape) {
  std::vector<int64_t> strides(rank, 0);
  int64_t s = 1;
  for (size_t i = shape.size(); i-- > 0;) {
    const size_t oi = i + (rank - shape.size());
    strides[oi] = (shape[i] == 1 && out_shape[oi] != 1) ? 0 : s;
    s *= shape[i];
  }
  return strides;
}

Tensor broadcast_apply(const Tensor& A, const Tensor& B, double (*f)(double, double)) {
  if (A.shape == B.shape) {  // fast path
    Tensor out = Tensor::zeros(A.shape);
    const size_t n = A.data.size();
    for (size_t i = 0; i < n; ++i) out.data[i] = f(A.data[i], B.data[i]);
    return out;
  }
  if (B.numel() == 1) {
    Tensor out = Tensor::zeros(A.shape);
    const double b = B.data[0];
    for (size_t i = 0; i < A.data.size(); ++i) out.data[i] = f(A.data[i], b);
    return out;
  }
  if (A.numel() == 1) {
    Tensor out = Tensor::zeros(B.shape);
    const double a = A.data[0];
    for (size_t i = 0; i < B.data.size(); ++i) out.data[i] = f(a, B.data[i]);
    return out;
  }
  const auto oshape = broadcast_shape(A.shape, B.shape);
  const size_t rank = oshape.size();
  const auto sa = broadcast_strides(A.shape, rank, oshape);
  const auto sb = broadcast_strides(B.shape, rank, oshape);
  Tensor out = Tensor::zeros(oshape);
  std::vector<int64_t> idx(rank, 0);
  const int64_t n = out.numel();
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t ia = 0, ib = 0;
    for (size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out.data[flat] = f(A.data[ia], B.data[ib]);
    for (size_t d = rank; d-- > 0;) {
      if (++idx[d] < oshape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

// Sum `g` down to `target` (the inverse of broadcasting in backward).
Tensor reduce_to_shape(const Tensor& g, const std::vector<int64_t>& target) {
  if (g.shape == target) return g;
  Tensor out = Tensor::zeros(target);
  const size_t rank = g.shape.size();
  const auto st = broadcast_strides(target, rank, g.shape);
  std::vector<int64_t> idx(rank, 0);
  const int64_t n = g.numel();
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t it = 0;
    for (size_t d = 0; d < rank; ++d) it += idx[d] * st[d];
    out.data[it] += g.data[flat];
    for (size_t d = rank; d-- > 0;) {
      if (++idx[d] < g.shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

double op_add(double a, double b) { return a + b; }
double op_sub(double a, double b) { return a - b; }
double op_mul(double a, double b) { return a * b; }
double op_div(double a, double b) { return a / b; }

void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(who) + " needs a rank-2 tensor, got " +
                                shape_str(t.shape));
  }
}

}  // namespace

// ---------------------------------------------------------------------
// Var / Tape basics
// ---------------------------------------------------------------------

const Tensor& Var::val() const { return tape->value(id); }

Var Tape::make(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::make_shared<const Tensor>(std::move(value));
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(int32_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value->shape);
  return n.grad;
}

Var Tape::constant(Tensor t) { return make(std::move(t), false); }

Var Tape::param(const ParamStore& store, const std::string& name) {
  for (const auto& [nm, id] : params_) {
    if (nm == name) return Var{this, id};
  }
  auto p = store.get(name);
  Node n;
  n.value = p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<int32_t>(nodes_.size() - 1);
  nodes_[id].param_idx = static_cast<int32_t>(params_.size());
  params_.emplace_back(name, id);
  return Var{this, id};
}

// ---------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------

Var Tape::binary_op(Var a, Var b, double (*f)(double, double), int which) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  Tensor out = broadcast_apply(A, B, f);
  const bool ng = needs(a) || needs(b);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  const int32_t ai = a.id, bi = b.id, oi = o.id;
  switch (which) {
    case 0:  // add
      set_back(o, [this, ai, bi, oi] {
        const Tensor& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) {
          Tensor ra = reduce_to_shape(g, nodes_[ai].value->shape);
          Tensor& da = grad(ai);
          for (size_t i = 0; i < ra.data.size(); ++i) da.data[i] += ra.data[i];
        }
        if (nodes_[bi].needs_grad) {
          Tensor rb = reduce_to_shape(g, nodes_[bi].value->shape);
          Tensor& db = grad(bi);
          for (size_t i = 0; i < rb.data.size(); ++i) db.data[i] += rb.data[i];
        }
      });
      break;
    case 1:  // sub
      set_back(o, [this, ai, bi, oi] {
        const Tensor& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) {
          Tensor ra = reduce_to_shape(g, nodes_[ai].value->shape);
          Tensor& da = grad(ai);
          for (size_t i = 0; i < ra.data.size(); ++i) da.data[i] += ra.data[i];
        }
        if (nodes_[bi].needs_grad) {
          Tensor rb = reduce_to_shape(g, nodes_[bi].value->shape);
          Tensor& db = grad(bi);
          for (size_t i = 0; i < rb.data.size(); ++i) db.data[i] -= rb.data[i];
        }
      });
      break;
    case 2:  // mul
      set_back(o, [this, ai, bi, oi] {
        const Tensor& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) {
          Tensor t = broadcast_apply(g, *nodes_[bi].value, op_mul);
          Tensor ra = reduce_to_shape(t, nodes_[ai].value->shape);
          Tensor& da = grad(ai);
          for (size_t i = 0; i < ra.data.size(); ++i) da.data[i] += ra.data[i];
        }
        if (nodes_[bi].needs_grad) {
          Tensor t = broadcast_apply(g, *nodes_[ai].value, op_mul);
          Tensor rb = reduce_to_shape(t, nodes_[bi].value->shape);
          Tensor& db = grad(bi);
          for (size_t i = 0; i < rb.data.size(); ++i) db.data[i] += rb.data[i];
        }
      });
      break;
    case 3:  // div
      set_back(o, [this, ai, bi, oi] {
        const Tensor& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) {
          Tensor t = broadcast_apply(g, *nodes_[bi].value, op_div);
          Tensor ra = reduce_to_shape(t, nodes_[ai].value->shape);
          Tensor& da = grad(ai);
          for (size_t i = 0; i < ra.data.size(); ++i) da.data[i] += ra.data[i];
        }
        if (nodes_[bi].needs_grad) {
          // d(a/b)/db = -(a/b)/b = -out/b
          Tensor t = broadcast_apply(g, *nodes_[oi].value, op_mul);
          t = broadcast_apply(t, *nodes_[bi].value, op_div);
          Tensor rb = reduce_to_shape(t, nodes_[bi].value->shape);
          Tensor& db = grad(bi);
          for (size_t i = 0; i < rb.data.size(); ++i) db.data[i] -= rb.data[i];
        }
      });
      break;
  }
  return o;
}

Var Tape::add(Var a, Var b) { return binary_op(a, b, op_add, 0); }
Var Tape::sub(Var a, Var b) { return binary_op(a, b, op_sub, 1); }
Var Tape::mul(Var a, Var b) { return binary_op(a, b, op_mul, 2); }
Var Tape::div(Var a, Var b) { return binary_op(a, b, op_div, 3); }

Var Tape::add_scalar(Var a, double s) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v += s;
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
  });
  return o;
}

Var Tape::mul_scalar(Var a, double s) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v *= s;
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, s] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += s * g.data[i];
  });
  return o;
}

// ---------------------------------------------------------------------
// unary maps
// ---------------------------------------------------------------------

Var Tape::leaky_relu(Var a, double slope) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, slope] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& x = *nodes_[ai].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) {
      da.data[i] += g.data[i] * (x.data[i] > 0.0 ? 1.0 : slope);
    }
  });
  return o;
}

Var Tape::sigmoid(Var a) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = *nodes_[oi].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) {
      da.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    }
  });
  return o;
}

Var Tape::gelu(Var a) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& x = *nodes_[ai].value;
    Tensor& da = grad(ai);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (size_t i = 0; i < g.data.size(); ++i) {
      const double xi = x.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * M_SQRT1_2));
      da.data[i] += g.data[i] * (cdf + xi * inv_sqrt_2pi * std::exp(-0.5 * xi * xi));
    }
  });
  return o;
}

Var Tape::exp(Var a) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = std::exp(v);
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = *nodes_[oi].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * y.data[i];
  });
  return o;
}

Var Tape::log(Var a) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = std::log(v);
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& x = *nodes_[ai].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] / x.data[i];
  });
  return o;
}

Var Tape::sqrt(Var a) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = std::sqrt(v);
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = *nodes_[oi].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) {
      da.data[i] += g.data[i] * 0.5 / y.data[i];
    }
  });
  return o;
}

Var Tape::square(Var a) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = v * v;
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& x = *nodes_[ai].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * 2.0 * x.data[i];
  });
  return o;
}

Var Tape::clamp_min(Var a, double floor) {
  const Tensor& A = a.val();
  Tensor out = A;
  for (double& v : out.data) v = std::max(v, floor);
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, floor] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& x = *nodes_[ai].value;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (x.data[i] > floor) da.data[i] += g.data[i];
    }
  });
  return o;
}

// ---------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  require_rank2(A, "matmul lhs");
  require_rank2(B, "matmul rhs");
  const int64_t m = A.shape[0], k = A.shape[1], k2 = B.shape[0], n = B.shape[1];
  if (k != k2) {
    throw std::invalid_argument("matmul inner dims disagree: " + shape_str(A.shape) +
                                " x " + shape_str(B.shape));
  }
  Tensor out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = &A.data[i * k];
    double* orow = &out.data[i * n];
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &B.data[p * n];
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  const bool ng = needs(a) || needs(b);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  const int32_t ai = a.id, bi = b.id, oi = o.id;
  set_back(o, [this, ai, bi, oi, m, k, n] {
    const Tensor& g = nodes_[oi].grad;
    if (nodes_[ai].needs_grad) {
      const Tensor& B2 = *nodes_[bi].value;
      Tensor& da = grad(ai);
      // dA[i,p] += dot(g[i,:], B[p,:])
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = &g.data[i * n];
        double* darow = &da.data[i * k];
        for (int64_t p = 0; p < k; ++p) {
          const double* brow = &B2.data[p * n];
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          darow[p] += acc;
        }
      }
    }
    if (nodes_[bi].needs_grad) {
      const Tensor& A2 = *nodes_[ai].value;
      Tensor& db = grad(bi);
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      for (int64_t i = 0; i < m; ++i) {
        const double* arow = &A2.data[i * k];
        const double* grow = &g.data[i * n];
        for (int64_t p = 0; p < k; ++p) {
          const double av = arow[p];
          if (av == 0.0) continue;
          double* dbrow = &db.data[p * n];
          for (int64_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
      }
    }
  });
  return o;
}

Var Tape::transpose(Var a) {
  const Tensor& A = a.val();
  require_rank2(A, "transpose");
  const int64_t m = A.shape[0], n = A.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data[j * m + i] = A.data[i * n + j];
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, m, n] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (int64_t j = 0; j < n; ++j)
      for (int64_t i = 0; i < m; ++i) da.data[i * n + j] += g.data[j * m + i];
  });
  return o;
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
  const Tensor& A = a.val();
  if (shape_numel(shape) != A.numel()) {
    throw std::invalid_argument("reshape " + shape_str(A.shape) + " -> " +
                                shape_str(shape) + " changes element count");
  }
  Tensor out(shape, A.data);
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
  });
  return o;
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero parts");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat axis must be 0 or 1");
  bool ng = false;
  for (Var p : parts) {
    require_rank2(p.val(), "concat");
    ng = ng || needs(p);
  }
  int64_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts[0].val().shape[1];
    for (Var p : parts) {
      if (p.val().shape[1] != cols) throw std::invalid_argument("concat col mismatch");
      rows += p.val().shape[0];
    }
  } else {
    rows = parts[0].val().shape[0];
    for (Var p : parts) {
      if (p.val().shape[0] != rows) throw std::invalid_argument("concat row mismatch");
      cols += p.val().shape[1];
    }
  }
  Tensor out = Tensor::zeros({rows, cols});
  if (axis == 0) {
    int64_t r0 = 0;
    for (Var p : parts) {
      const Tensor& t = p.val();
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + r0 * cols);
      r0 += t.shape[0];
    }
  } else {
    int64_t c0 = 0;
    for (Var p : parts) {
      const Tensor& t = p.val();
      const int64_t pc = t.shape[1];
      for (int64_t i = 0; i < rows; ++i) {
        std::copy(t.data.begin() + i * pc, t.data.begin() + (i + 1) * pc,
                  out.data.begin() + i * cols + c0);
      }
      c0 += pc;
    }
  }
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  std::vector<int32_t> ids;
  for (Var p : parts) ids.push_back(p.id);
  const int32_t oi = o.id;
  set_back(o, [this, ids, oi, axis, rows, cols] {
    const Tensor& g = nodes_[oi].grad;
    if (axis == 0) {
      int64_t r0 = 0;
      for (int32_t pid : ids) {
        const auto& shp = nodes_[pid].value->shape;
        if (nodes_[pid].needs_grad) {
          Tensor& dp = grad(pid);
          for (size_t i = 0; i < dp.data.size(); ++i) dp.data[i] += g.data[r0 * cols + i];
        }
        r0 += shp[0];
      }
    } else {
      int64_t c0 = 0;
      for (int32_t pid : ids) {
        const auto& shp = nodes_[pid].value->shape;
        const int64_t pc = shp[1];
        if (nodes_[pid].needs_grad) {
          Tensor& dp = grad(pid);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < pc; ++j) dp.data[i * pc + j] += g.data[i * cols + c0 + j];
        }
        c0 += pc;
      }
    }
  });
  return o;
}

Var Tape::gather_rows(Var a, std::vector<int64_t> idx) {
  const Tensor& A = a.val();
  require_rank2(A, "gather_rows");
  const int64_t n = A.shape[1];
  Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), n});
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= A.shape[0]) throw std::out_of_range("gather_rows index");
    std::copy(A.data.begin() + idx[r] * n, A.data.begin() + (idx[r] + 1) * n,
              out.data.begin() + static_cast<int64_t>(r) * n);
  }
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, idx = std::move(idx), n] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (size_t r = 0; r < idx.size(); ++r) {
      const double* grow = &g.data[static_cast<int64_t>(r) * n];
      double* darow = &da.data[idx[r] * n];
      for (int64_t j = 0; j < n; ++j) darow[j] += grow[j];
    }
  });
  return o;
}

Var Tape::slice_cols(Var a, int64_t start, int64_t count) {
  const Tensor& A = a.val();
  require_rank2(A, "slice_cols");
  const int64_t m = A.shape[0], n = A.shape[1];
  if (start < 0 || count < 0 || start + count > n) throw std::out_of_range("slice_cols range");
  Tensor out = Tensor::zeros({m, count});
  for (int64_t i = 0; i < m; ++i)
    std::copy(A.data.begin() + i * n + start, A.data.begin() + i * n + start + count,
              out.data.begin() + i * count);
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, start, count, m, n] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < count; ++j) da.data[i * n + start + j] += g.data[i * count + j];
  });
  return o;
}

Var Tape::slice_flat(Var a, int64_t start, int64_t count) {
  const Tensor& A = a.val();
  if (start < 0 || count < 0 || start + count > A.numel())
    throw std::out_of_range("slice_flat range");
  Tensor out({count}, std::vector<double>(A.data.begin() + start,
                                          A.data.begin() + start + count));
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, start, count] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (int64_t i = 0; i < count; ++i) da.data[start + i] += g.data[i];
  });
  return o;
}

// ---------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------

Var Tape::sum_all(Var a) {
  const Tensor& A = a.val();
  double s = 0.0;
  for (double v : A.data) s += v;
  Var o = make(Tensor::scalar(s), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi] {
    const double g = nodes_[oi].grad.data[0];
    Tensor& da = grad(ai);
    for (double& v : da.data) v += g;
  });
  return o;
}

Var Tape::mean_all(Var a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.val().numel())); }

Var Tape::row_sum(Var a) {
  const Tensor& A = a.val();
  require_rank2(A, "row_sum");
  const int64_t m = A.shape[0], n = A.shape[1];
  Tensor out = Tensor::zeros({m, 1});
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    const double* row = &A.data[i * n];
    for (int64_t j = 0; j < n; ++j) s += row[j];
    out.data[i] = s;
  }
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, m, n] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (int64_t i = 0; i < m; ++i) {
      const double gi = g.data[i];
      double* row = &da.data[i * n];
      for (int64_t j = 0; j < n; ++j) row[j] += gi;
    }
  });
  return o;
}

Var Tape::col_sum(Var a) {
  const Tensor& A = a.val();
  require_rank2(A, "col_sum");
  const int64_t m = A.shape[0], n = A.shape[1];
  Tensor out = Tensor::zeros({1, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* row = &A.data[i * n];
    for (int64_t j = 0; j < n; ++j) out.data[j] += row[j];
  }
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, m, n] {
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad(ai);
    for (int64_t i = 0; i < m; ++i) {
      double* row = &da.data[i * n];
      for (int64_t j = 0; j < n; ++j) row[j] += g.data[j];
    }
  });
  return o;
}

// ---------------------------------------------------------------------
// fused row-wise ops
// ---------------------------------------------------------------------

Var Tape::softmax_rows(Var a) {
  const Tensor& A = a.val();
  if (A.numel() == 0) throw std::invalid_argument("softmax of empty input");
  const bool vector_in = A.rank() == 1;
  const int64_t m = vector_in ? 1 : A.shape[0];
  const int64_t n = vector_in ? A.shape[0] : A.shape[1];
  Tensor out = A;
  for (int64_t i = 0; i < m; ++i) {
    double* row = &out.data[i * n];
    double mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (int64_t j = 0; j < n; ++j) row[j] /= s;
  }
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, m, n] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = *nodes_[oi].value;
    Tensor& da = grad(ai);
    for (int64_t i = 0; i < m; ++i) {
      const double* grow = &g.data[i * n];
      const double* yrow = &y.data[i * n];
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
      double* darow = &da.data[i * n];
      for (int64_t j = 0; j < n; ++j) darow[j] += yrow[j] * (grow[j] - dot);
    }
  });
  return o;
}

Var Tape::layer_norm_rows(Var a, double eps) {
  const Tensor& A = a.val();
  require_rank2(A, "layer_norm_rows");
  const int64_t m = A.shape[0], n = A.shape[1];
  if (n < 2) throw std::invalid_argument("layer_norm needs at least 2 features per row");
  Tensor out = Tensor::zeros({m, n});
  std::vector<double> inv_std(m);
  for (int64_t i = 0; i < m; ++i) {
    const double* row = &A.data[i * n];
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    double* orow = &out.data[i * n];
    for (int64_t j = 0; j < n; ++j) orow[j] = (row[j] - mu) * is;
  }
  Var o = make(std::move(out), needs(a));
  if (!needs(a)) return o;
  const int32_t ai = a.id, oi = o.id;
  set_back(o, [this, ai, oi, m, n, inv_std = std::move(inv_std)] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = *nodes_[oi].value;
    Tensor& da = grad(ai);
    for (int64_t i = 0; i < m; ++i) {
      const double* grow = &g.data[i * n];
      const double* yrow = &y.data[i * n];
      double gmean = 0.0, gymean = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        gmean += grow[j];
        gymean += grow[j] * yrow[j];
      }
      gmean /= static_cast<double>(n);
      gymean /= static_cast<double>(n);
      double* darow = &da.data[i * n];
      for (int64_t j = 0; j < n; ++j) {
        darow[j] += inv_std[i] * (grow[j] - gmean - yrow[j] * gymean);
      }
    }
  });
  return o;
}

// ---------------------------------------------------------------------
// fused attention primitives
// ---------------------------------------------------------------------

Var Tape::block_scores(Var q, Var k, int64_t block) {
  const Tensor& Q = q.val();
  const Tensor& K = k.val();
  require_rank2(Q, "block_scores q");
  require_rank2(K, "block_scores k");
  if (Q.shape != K.shape) throw std::invalid_argument("block_scores shape mismatch");
  const int64_t rows = Q.shape[0], d = Q.shape[1];
  if (block <= 0 || rows % block != 0) throw std::invalid_argument("block_scores bad block");
  Tensor out = Tensor::zeros({rows, block});
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = (r / block) * block;
    const double* qrow = &Q.data[r * d];
    double* orow = &out.data[r * block];
    for (int64_t c = 0; c < block; ++c) {
      const double* krow = &K.data[(base + c) * d];
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j) acc += qrow[j] * krow[j];
      orow[c] = acc;
    }
  }
  const bool ng = needs(q) || needs(k);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  const int32_t qi = q.id, ki = k.id, oi = o.id;
  set_back(o, [this, qi, ki, oi, block, rows, d] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& Q2 = *nodes_[qi].value;
    const Tensor& K2 = *nodes_[ki].value;
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t base = (r / block) * block;
      const double* grow = &g.data[r * block];
      if (nodes_[qi].needs_grad) {
        double* dq = &grad(qi).data[r * d];
        for (int64_t c = 0; c < block; ++c) {
          const double gv = grow[c];
          if (gv == 0.0) continue;
          const double* krow = &K2.data[(base + c) * d];
          for (int64_t j = 0; j < d; ++j) dq[j] += gv * krow[j];
        }
      }
      if (nodes_[ki].needs_grad) {
        const double* qrow = &Q2.data[r * d];
        for (int64_t c = 0; c < block; ++c) {
          const double gv = grow[c];
          if (gv == 0.0) continue;
          double* dk = &grad(ki).data[(base + c) * d];
          for (int64_t j = 0; j < d; ++j) dk[j] += gv * qrow[j];
        }
      }
    }
  });
  return o;
}

Var Tape::attend_rows(Var a, Var v, std::vector<int64_t> groups) {
  const Tensor& A = a.val();
  const Tensor& V = v.val();
  require_rank2(A, "attend_rows weights");
  require_rank2(V, "attend_rows values");
  const int64_t rows = A.shape[0], c = A.shape[1], d = V.shape[1];
  if (static_cast<int64_t>(groups.size()) != rows)
    throw std::invalid_argument("attend_rows groups size mismatch");
  Tensor out = Tensor::zeros({rows, d});
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = groups[r] * c;
    if (base < 0 || base + c > V.shape[0]) throw std::out_of_range("attend_rows group");
    const double* arow = &A.data[r * c];
    double* orow = &out.data[r * d];
    for (int64_t j = 0; j < c; ++j) {
      const double w = arow[j];
      if (w == 0.0) continue;
      const double* vrow = &V.data[(base + j) * d];
      for (int64_t t = 0; t < d; ++t) orow[t] += w * vrow[t];
    }
  }
  const bool ng = needs(a) || needs(v);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  const int32_t ai = a.id, vi = v.id, oi = o.id;
  set_back(o, [this, ai, vi, oi, groups = std::move(groups), c, d] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& A2 = *nodes_[ai].value;
    const Tensor& V2 = *nodes_[vi].value;
    const int64_t rows = A2.shape[0];
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t base = groups[r] * c;
      const double* grow = &g.data[r * d];
      if (nodes_[ai].needs_grad) {
        double* darow = &grad(ai).data[r * c];
        for (int64_t j = 0; j < c; ++j) {
          const double* vrow = &V2.data[(base + j) * d];
          double acc = 0.0;
          for (int64_t t = 0; t < d; ++t) acc += grow[t] * vrow[t];
          darow[j] += acc;
        }
      }
      if (nodes_[vi].needs_grad) {
        const double* arow = &A2.data[r * c];
        for (int64_t j = 0; j < c; ++j) {
          const double w = arow[j];
          if (w == 0.0) continue;
          double* dvrow = &grad(vi).data[(base + j) * d];
          for (int64_t t = 0; t < d; ++t) dvrow[t] += w * grow[t];
        }
      }
    }
  });
  return o;
}

Var Tape::dropout(Var a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Tensor& A = a.val();
  Tensor mask = Tensor::zeros(A.shape);
  const double scale = 1.0 / (1.0 - p);
  for (double& v : mask.data) v = rng.uniform() < p ? 0.0 : scale;
  return mul(a, constant(std::move(mask)));
}

// ---------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------

GradMap Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss from another tape");
  if (loss.val().numel() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got " +
                                shape_str(loss.val().shape));
  }
  grad(loss.id).data[0] = 1.0;
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.data.empty()) continue;
    if (n.back) n.back();
  }
  GradMap out;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[id];
    out[name] = n.grad.data.empty() ? Tensor::zeros(n.value->shape) : n.grad;
  }
  return out;
}

// ---------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------

double finite_diff_check(const std::function<double(const Tensor&)>& f,
                         const Tensor& theta, const Tensor& analytic_grad,
                         double step) {
  if (!same_shape(theta, analytic_grad)) {
    throw std::invalid_argument("finite_diff_check: gradient shape mismatch");
  }
  Tensor t = theta;
  double worst = 0.0;
  for (size_t i = 0; i < t.data.size(); ++i) {
    const double saved = t.data[i];
    t.data[i] = saved + step;
    const double fp = f(t);
    t.data[i] = saved - step;
    const double fm = f(t);
    t.data[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_check: non-finite perturbed value");
    }
    const double central = (fp - fm) / (2.0 * step);
    const double rel = std::abs(analytic_grad.data[i] - central) /
                       std::max(1.0, std::abs(central));
    worst = std::max(worst, rel);
  }
  return worst;
}

double finite_diff_check_params(const std::function<double()>& loss_value,
                                ParamStore& params, const GradMap& analytic,
                                double step) {
  double worst = 0.0;
  for (const auto& [name, tensor] : params.entries()) {
    const auto git = analytic.find(name);
    for (size_t i = 0; i < tensor->data.size(); ++i) {
      const double saved = tensor->data[i];
      tensor->data[i] = saved + step;
      const double fp = loss_value();
      tensor->data[i] = saved - step;
      const double fm = loss_value();
      tensor->data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("finite_diff_check: non-finite perturbed value at " + name);
      }
      const double central = (fp - fm) / (2.0 * step);
      const double a = git == analytic.end() ? 0.0 : git->second.data[i];
      const double rel = std::abs(a - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double gradient_check(const std::function<Var(Tape&)>& build, ParamStore& params,
                      double step) {
  GradMap analytic;
  {
    Tape tape;
    Var loss = build(tape);
    analytic = tape.backward(loss);
  }
  auto value = [&] {
    Tape tape;
    return build(tape).val().item();
  };
  return finite_diff_check_params(value, params, analytic, step);
}

}  // namespace scorebeam
