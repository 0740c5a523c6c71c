#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scorebeam {

/// Dense row-major tensor of 64-bit reals. Rank 0 means a scalar
/// (numel == 1). Shapes are immutable after construction; data may be
/// mutated only through designated optimizer updates.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> values);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // rank-2 accessors
  int64_t rows() const;
  int64_t cols() const;
  double& at(int64_t i, int64_t j) { return data[i * cols() + j]; }
  double at(int64_t i, int64_t j) const { return data[i * cols() + j]; }

  /// Value of a single-element tensor.
  double item() const;

  bool all_finite() const;
  /// Throws std::runtime_error naming `what` if any entry is NaN/Inf.
  void check_finite(const char* what) const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace scorebeam
