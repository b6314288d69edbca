#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cslm/errors.hpp"

namespace cslm {

// Dense row-major 2-D tensor. float is used for training; the same code
// instantiates with double for finite-difference gradient checks.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) { data.assign(data.size(), v); }

  Mat& operator+=(const Mat& o) {
    if (!same_shape(o)) {
      throw DimError("tensor add: shape mismatch " + shape_str() + " vs " + o.shape_str());
    }
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
};

// c += op(a) * op(b), where op transposes when the flag is set.
template <typename T>
void addmm(Mat<T>& c, const Mat<T>& a, bool ta, const Mat<T>& b, bool tb) {
  const std::size_t ar = ta ? a.cols : a.rows;
  const std::size_t ac = ta ? a.rows : a.cols;
  const std::size_t br = tb ? b.cols : b.rows;
  const std::size_t bc = tb ? b.rows : b.cols;
  if (ac != br) {
    throw DimError("matmul: inner dimensions disagree for shapes " + a.shape_str() +
                   (ta ? "^T" : "") + " and " + b.shape_str() + (tb ? "^T" : ""));
  }
  if (c.rows != ar || c.cols != bc) {
    throw DimError("matmul: output shape " + c.shape_str() + " does not match " +
                   std::to_string(ar) + "x" + std::to_string(bc));
  }
  // i-k-j loop order keeps the inner loop contiguous for the non-transposed case.
  for (std::size_t i = 0; i < ar; ++i) {
    for (std::size_t k = 0; k < ac; ++k) {
      const T av = ta ? a.at(k, i) : a.at(i, k);
      if (!tb) {
        const T* brow = b.row(k);
        T* crow = c.row(i);
        for (std::size_t j = 0; j < bc; ++j) crow[j] += av * brow[j];
      } else {
        T* crow = c.row(i);
        for (std::size_t j = 0; j < bc; ++j) crow[j] += av * b.at(j, k);
      }
    }
  }
}

template <typename T>
Mat<T> matmul_vals(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb) {
  Mat<T> c(ta ? a.cols : a.rows, tb ? b.rows : b.cols);
  addmm(c, a, ta, b, tb);
  return c;
}

}  // namespace cslm
