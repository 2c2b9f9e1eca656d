#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "charkb/errors.hpp"

namespace charkb {

/// Dense row-major tensor of real scalars. Rank 1 vectors, rank 2 matrices
/// and rank 3 conv kernels are all we need; no broadcasting.
template <class S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shp) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }
  Tensor(std::vector<int64_t> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size())) {
      throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    }
  }

  static int64_t numel_of(const std::vector<int64_t>& shp) {
    int64_t n = 1;
    for (int64_t d : shp) {
      if (d <= 0) throw ShapeMismatch("non-positive dimension in " + shape_str(shp));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> shp) { return Tensor(std::move(shp)); }

  static Tensor vec(std::initializer_list<S> v) {
    return Tensor({static_cast<int64_t>(v.size())}, std::vector<S>(v));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return shape.at(1); }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  S& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
  S at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

  S* row_ptr(int64_t i) { return data.data() + i * cols(); }
  const S* row_ptr(int64_t i) const { return data.data() + i * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  static std::string shape_str(const std::vector<int64_t>& shp) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shp.size(); ++i) os << (i ? "," : "") << shp[i];
    os << "]";
    return os.str();
  }
};

namespace detail {

// y += a * x over n contiguous scalars.
template <class S>
inline void axpy(int64_t n, S a, const S* x, S* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class S>
inline S dot_n(int64_t n, const S* x, const S* y) {
  S acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

// C[m,n] += A[m,k] * B[k,n], all row-major.
template <class S>
inline void matmul_acc(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const S av = arow[p];
      if (av == S(0)) continue;
      axpy(n, av, b + p * n, crow);
    }
  }
}

}  // namespace detail

}  // namespace charkb
