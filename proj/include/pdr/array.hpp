#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace pdr {

// Dense row-major array of doubles with rank 0 (scalar), 1 (vector) or 2 (matrix).
class Array {
 public:
  Array() : rank_(0), rows_(1), cols_(1), data_(1, 0.0) {}

  static Array scalar(double v) {
    Array a;
    a.data_[0] = v;
    return a;
  }
  static Array vec(std::size_t n, double fill = 0.0) {
    Array a;
    a.rank_ = 1;
    a.rows_ = n;
    a.cols_ = 1;
    a.data_.assign(n, fill);
    return a;
  }
  static Array mat(std::size_t r, std::size_t c, double fill = 0.0) {
    Array a;
    a.rank_ = 2;
    a.rows_ = r;
    a.cols_ = c;
    a.data_.assign(r * c, fill);
    return a;
  }
  static Array vec_of(std::initializer_list<double> xs) {
    Array a = vec(xs.size());
    std::size_t i = 0;
    for (double x : xs) a.data_[i++] = x;
    return a;
  }

  int rank() const { return rank_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Array& o) const {
    return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_;
  }

  Array zeros_like() const {
    Array a = *this;
    a.data_.assign(a.data_.size(), 0.0);
    return a;
  }

 private:
  int rank_;
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

}  // namespace pdr
