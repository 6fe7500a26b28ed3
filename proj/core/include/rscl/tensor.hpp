#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rscl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit floats. The graph ops in autodiff.hpp
// treat every tensor as a matrix (rank 2); rank-1 data is stored as a row.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor scalar(double v);
  static Tensor row(const std::vector<double>& v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  // Matrix view helpers; rank must be 2.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws ShapeError naming the offending shapes/context.
void require_rank2(const Tensor& t, const char* ctx);
void require_same_shape(const Tensor& a, const Tensor& b, const char* ctx);
// Throws NumericError on NaN or Inf entries.
void require_finite(const Tensor& t, const char* ctx);

}  // namespace rscl
