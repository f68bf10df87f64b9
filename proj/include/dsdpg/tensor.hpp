#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace dsdpg {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, row vectors 1xn,
// column vectors nx1. Everything in the project is f64.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v_[0] = x;
    return t;
  }
  static Tensor row(std::initializer_list<double> xs) {
    Tensor t(1, xs.size());
    std::size_t i = 0;
    for (double x : xs) t.v_[i++] = x;
    return t;
  }
  static Tensor col(std::initializer_list<double> xs) {
    Tensor t(xs.size(), 1);
    std::size_t i = 0;
    for (double x : xs) t.v_[i++] = x;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  double item() const {
    if (v_.size() != 1) throw std::invalid_argument("Tensor::item: not a scalar");
    return v_[0];
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

}  // namespace dsdpg
