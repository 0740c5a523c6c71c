#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "scorebeam/rng.hpp"
#include "scorebeam/tensor.hpp"

namespace scorebeam {

class Tape;

/// Named parameter container shared between forward passes, the optimizer
/// and checkpoint I/O. Iteration order is the (deterministic) name order.
class ParamStore {
 public:
  /// Registers a tensor under `name`; requires_grad is forced on.
  std::shared_ptr<Tensor> add(const std::string& name, Tensor t);
  std::shared_ptr<Tensor> get(const std::string& name) const;
  bool has(const std::string& name) const { return tensors_.count(name) > 0; }
  void set(const std::string& name, Tensor t);

  const std::map<std::string, std::shared_ptr<Tensor>>& entries() const { return tensors_; }
  int64_t total_values() const;

  /// Deep copy (checkpointing the best validation state).
  ParamStore clone() const;
  void assign_from(const ParamStore& other);

 private:
  std::map<std::string, std::shared_ptr<Tensor>> tensors_;
};

using GradMap = std::map<std::string, Tensor>;

/// Handle to a node on a Tape; cheap to copy, valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  const Tensor& val() const;
  const std::vector<int64_t>& shape() const { return val().shape; }
};

/// Records one forward pass as a flat list of nodes and replays it in
/// reverse for gradients. A tape lives for a single forward+backward and
/// is then discarded; parameters themselves live in the ParamStore.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves -------------------------------------------------------
  Var constant(Tensor t);
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }
  /// Leaf aliasing a parameter tensor (no copy). Gradients for every
  /// parameter pulled onto the tape appear in the backward() result,
  /// zero-filled when the loss does not depend on it.
  Var param(const ParamStore& store, const std::string& name);

  // ---- elementwise with numpy-style broadcasting --------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var add_scalar(Var a, double s);
  Var mul_scalar(Var a, double s);
  Var neg(Var a) { return mul_scalar(a, -1.0); }

  // ---- unary maps ----------------------------------------------------
  Var leaky_relu(Var a, double slope = 0.01);
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  /// max(a, floor) elementwise; gradient flows only where a > floor.
  Var clamp_min(Var a, double floor);

  // ---- shape ---------------------------------------------------------
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var reshape(Var a, std::vector<int64_t> shape);
  /// 2-D concat along axis (0 = stack rows, 1 = stack cols).
  Var concat(const std::vector<Var>& parts, int axis);
  Var gather_rows(Var a, std::vector<int64_t> idx);
  Var slice_cols(Var a, int64_t start, int64_t count);
  /// Contiguous slice of the flattened data, returned as a rank-1 tensor.
  Var slice_flat(Var a, int64_t start, int64_t count);

  // ---- reductions ----------------------------------------------------
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var row_sum(Var a);  // m x n -> m x 1
  Var col_sum(Var a);  // m x n -> 1 x n

  // ---- fused row-wise ops --------------------------------------------
  /// Row-wise softmax with max-subtraction; rank-1 input treated as one row.
  Var softmax_rows(Var a);
  /// Row standardization (mean 0, variance 1 with eps); no affine.
  Var layer_norm_rows(Var a, double eps = 1e-5);

  // ---- fused attention primitives ------------------------------------
  /// Rows of q/k come in consecutive blocks of `block` rows.
  /// out[r][c] = dot(q[r], k[block_base(r) + c]), out is R x block.
  Var block_scores(Var q, Var k, int64_t block);
  /// out[r] = sum_c a[r][c] * v[groups[r]*C + c]; a is R x C, v is (G*C) x D.
  Var attend_rows(Var a, Var v, std::vector<int64_t> groups);

  /// Inverted dropout; identity when !training or p == 0.
  Var dropout(Var a, double p, Rng& rng, bool training);

  // ---- backward -------------------------------------------------------
  /// Gradients of a scalar loss w.r.t. every parameter pulled onto this
  /// tape. The tape should be discarded afterwards.
  GradMap backward(Var loss);

  const Tensor& value(int32_t id) const { return *nodes_[id].value; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<const Tensor> value;
    Tensor grad;  // allocated lazily during backward
    std::function<void()> back;
    bool needs_grad = false;
    int32_t param_idx = -1;
  };

  Var make(Tensor value, bool needs_grad);
  Tensor& grad(int32_t id);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  void set_back(Var v, std::function<void()> fn) { nodes_[v.id].back = std::move(fn); }

  Var binary_op(Var a, Var b, double (*f)(double, double), int which);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int32_t>> params_;  // name -> node id
};

// ---- gradient checking ------------------------------------------------

/// Max over coordinates of |analytic - central| / max(1, |central|) for a
/// scalar function of one tensor. Throws on non-finite perturbed values.
double finite_diff_check(const std::function<double(const Tensor&)>& f,
                         const Tensor& theta, const Tensor& analytic_grad,
                         double step = 1e-5);

/// Same check across every tensor in `params`. `build` must rebuild the
/// loss from the current parameter values (so it is re-evaluated under
/// perturbation); the analytic side comes from one backward pass.
double finite_diff_check_params(const std::function<double()>& loss_value,
                                ParamStore& params, const GradMap& analytic,
                                double step = 1e-5);

/// Convenience wrapper: runs backward once for the analytic gradients,
/// then the central-difference sweep.
double gradient_check(const std::function<Var(Tape&)>& build, ParamStore& params,
                      double step = 1e-5);

}  // namespace scorebeam
