#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "lowshot/common.hpp"

namespace lowshot {

// Dense shape, rank 0..3. Rank 0 is a scalar with one element.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<int> dims) : dims_(dims) { validate(); }

  explicit Shape(std::vector<int> dims) : dims_(std::move(dims)) { validate(); }

  static Shape scalar() { return Shape(); }
  static Shape vec(int n) { return Shape({n}); }
  static Shape mat(int rows, int cols) { return Shape({rows, cols}); }

  int rank() const { return static_cast<int>(dims_.size()); }

  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : dims_) n *= static_cast<std::size_t>(d);
    return n;
  }

  int rows() const { return rank() >= 1 ? dims_[0] : 1; }
  int cols() const { return rank() >= 2 ? dims_[1] : 1; }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i > 0) s += "x";
      s += std::to_string(dims_[i]);
    }
    s += "]";
    return s;
  }

 private:
  void validate() const {
    require(dims_.size() <= 3, "Shape: rank ", dims_.size(), " exceeds 3");
    for (int d : dims_)
      require(d >= 1, "Shape: dimension ", d, " must be >= 1");
  }

  std::vector<int> dims_;
};

// Dense 64-bit real tensor, row-major.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_.numel(), 0.0) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_.numel(), "Tensor: data size ", data_.size(),
            " does not match shape ", shape_.str());
  }

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), {v}); }

  static Tensor vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor(Shape::vec(n), std::move(v));
  }

  static Tensor mat(int rows, int cols, std::vector<double> v) {
    return Tensor(Shape::mat(rows, cols), std::move(v));
  }

  static Tensor zeros(const Shape& s) { return Tensor(s); }

  static Tensor ones(const Shape& s) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), 1.0);
    return t;
  }

  static Tensor full(const Shape& s, double v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor identity(int n) {
    Tensor t(Shape::mat(n, n));
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * shape_.cols() + c];
  }
  double at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * shape_.cols() + c];
  }

  double scalar_value() const {
    require(data_.size() == 1, "Tensor: scalar_value on shape ", shape_.str());
    return data_[0];
  }

  const std::vector<double>& values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  double norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace lowshot
