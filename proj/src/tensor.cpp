#include "scorebeam/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace scorebeam {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  const int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  const int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vec(std::vector<double> values) {
  const int64_t n = static_cast<int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

int64_t Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("rows() on tensor of rank " + std::to_string(rank()));
  return shape[0];
}

int64_t Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("cols() on tensor of rank " + std::to_string(rank()));
  return shape[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::logic_error("item() on tensor with " + std::to_string(numel()) + " elements");
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::check_finite(const char* what) const {
  if (!all_finite()) {
    throw std::runtime_error(std::string("non-finite values in ") + what);
  }
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace scorebeam
