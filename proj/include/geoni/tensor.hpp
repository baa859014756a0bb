// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cstdint>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "geoni/error.hpp"

namespace geoni {

namespace detail {

// Allocator whose resize() default-initializes, so buffers the caller fully
// overwrites skip the zero fill. Value-constructed fills still work, which
// keeps Tensor(dims) zero-initialized.
template <class T>
struct DefaultInitAlloc {
  using value_type = T;
  DefaultInitAlloc() = default;
  template <class U>
  constexpr DefaultInitAlloc(const DefaultInitAlloc<U>&) noexcept {}
  T* allocate(size_t n) { return std::allocator<T>{}.allocate(n); }
  void deallocate(T* p, size_t n) noexcept { std::allocator<T>{}.deallocate(p, n); }
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  friend bool operator==(const DefaultInitAlloc&, const DefaultInitAlloc&) { return true; }
};

}  // namespace detail

// Dense row-major double tensor, rank 1..5. The last axis varies fastest,
// so loops that keep the final (channel) index innermost touch contiguous
// memory. All math in this project runs in double precision.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
    GEONI_REQUIRE(!dims_.empty() && dims_.size() <= 5, "tensor rank must be 1..5");
    long long n = 1;
    for (int d : dims_) {
      GEONI_REQUIRE(d > 0, "tensor dims must be positive");
      n *= d;
    }
    data_.assign(static_cast<size_t>(n), 0.0);
    init_strides();
  }

  static Tensor full(std::vector<int> dims, double v) {
    Tensor t(std::move(dims));
    t.fill(v);
    return t;
  }
  static Tensor ones(std::vector<int> dims) { return full(std::move(dims), 1.0); }

  // Like Tensor(dims) but with uninitialized contents; for buffers the
  // caller writes in full before reading.
  static Tensor uninit(std::vector<int> dims) {
    Tensor t;
    t.dims_ = std::move(dims);
    GEONI_REQUIRE(!t.dims_.empty() && t.dims_.size() <= 5, "tensor rank must be 1..5");
    long long n = 1;
    for (int d : t.dims_) {
      GEONI_REQUIRE(d > 0, "tensor dims must be positive");
      n *= d;
    }
    t.data_.resize(static_cast<size_t>(n));
    t.init_strides();
    return t;
  }

  bool empty() const { return data_.empty(); }
  int ndim() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }
  long long size() const { return static_cast<long long>(data_.size()); }
  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  double& operator()(int i0) { return data_[idx1(i0)]; }
  double operator()(int i0) const { return data_[idx1(i0)]; }
  double& operator()(int i0, int i1) { return data_[idx2(i0, i1)]; }
  double operator()(int i0, int i1) const { return data_[idx2(i0, i1)]; }
  double& operator()(int i0, int i1, int i2) { return data_[idx3(i0, i1, i2)]; }
  double operator()(int i0, int i1, int i2) const { return data_[idx3(i0, i1, i2)]; }
  double& operator()(int i0, int i1, int i2, int i3) { return data_[idx4(i0, i1, i2, i3)]; }
  double operator()(int i0, int i1, int i2, int i3) const { return data_[idx4(i0, i1, i2, i3)]; }
  double& operator()(int i0, int i1, int i2, int i3, int i4) {
    return data_[idx5(i0, i1, i2, i3, i4)];
  }
  double operator()(int i0, int i1, int i2, int i3, int i4) const {
    return data_[idx5(i0, i1, i2, i3, i4)];
  }

  // Stride (in elements) of axis i.
  long long stride(int i) const { return stride_[i]; }

  Tensor reshaped(std::vector<int> dims) const {
    Tensor t;
    t.dims_ = std::move(dims);
    long long n = 1;
    for (int d : t.dims_) n *= d;
    GEONI_REQUIRE(n == size(), "reshape must preserve element count");
    t.data_ = data_;
    t.init_strides();
    return t;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  void init_strides() {
    long long s = 1;
    for (int i = ndim() - 1; i >= 0; --i) {
      stride_[i] = s;
      s *= dims_[static_cast<size_t>(i)];
    }
  }
  size_t idx1(int i0) const {
    assert(ndim() == 1 && i0 >= 0 && i0 < dims_[0]);
    return static_cast<size_t>(i0);
  }
  size_t idx2(int i0, int i1) const {
    assert(ndim() == 2 && i0 >= 0 && i0 < dims_[0] && i1 >= 0 && i1 < dims_[1]);
    return static_cast<size_t>(i0 * stride_[0] + i1);
  }
  size_t idx3(int i0, int i1, int i2) const {
    assert(ndim() == 3 && i0 >= 0 && i0 < dims_[0] && i1 >= 0 && i1 < dims_[1] && i2 >= 0 &&
           i2 < dims_[2]);
    return static_cast<size_t>(i0 * stride_[0] + i1 * stride_[1] + i2);
  }
  size_t idx4(int i0, int i1, int i2, int i3) const {
    assert(ndim() == 4 && i0 >= 0 && i0 < dims_[0] && i1 >= 0 && i1 < dims_[1] && i2 >= 0 &&
           i2 < dims_[2] && i3 >= 0 && i3 < dims_[3]);
    return static_cast<size_t>(i0 * stride_[0] + i1 * stride_[1] + i2 * stride_[2] + i3);
  }
  size_t idx5(int i0, int i1, int i2, int i3, int i4) const {
    assert(ndim() == 5 && i0 >= 0 && i0 < dims_[0] && i1 >= 0 && i1 < dims_[1] && i2 >= 0 &&
           i2 < dims_[2] && i3 >= 0 && i3 < dims_[3] && i4 >= 0 && i4 < dims_[4]);
    return static_cast<size_t>(i0 * stride_[0] + i1 * stride_[1] + i2 * stride_[2] +
                               i3 * stride_[3] + i4);
  }

  std::vector<int> dims_;
  std::vector<double, detail::DefaultInitAlloc<double>> data_;
  long long stride_[5] = {0, 0, 0, 0, 0};
};

// Masks are tensors with values in {0,1}, shaped like the data they qualify.
using ValidityMask = Tensor;

inline bool is_binary(const Tensor& m) {
  for (long long i = 0; i < m.size(); ++i)
    if (m.data()[i] != 0.0 && m.data()[i] != 1.0) return false;
  return true;
}

}  // namespace geoni
