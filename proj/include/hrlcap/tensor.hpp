/*
 * Copyright 2026 The hrlcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HRLCAP_TENSOR_HPP_
#define HRLCAP_TENSOR_HPP_

#include <cmath>
#include <initializer_list>
#include <vector>

#include "hrlcap/common.hpp"

namespace hrlcap {

// Dense rank-2 tensor of doubles, row-major. Everything in the model is a
// matrix; a vector is a 1xN row and a scalar is 1x1. Double precision
// throughout: the gradient-check tolerances dominate performance at this
// scale.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {
    check(r >= 0 && c >= 0, "tensor extents must be nonnegative, got ", r, "x", c);
  }
  Tensor(int r, int c, std::initializer_list<double> init) : Tensor(r, c) {
    check(static_cast<int>(init.size()) == r * c, "tensor init size mismatch: ",
          init.size(), " values for ", r, "x", c);
    std::size_t i = 0;
    for (double x : init) v[i++] = x;
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double value) {
    Tensor t(r, c);
    for (double& x : t.v) x = value;
    return t;
  }
  static Tensor scalar(double value) { return Tensor(1, 1, {value}); }
  static Tensor row(std::initializer_list<double> init) {
    Tensor t(1, static_cast<int>(init.size()));
    std::size_t i = 0;
    for (double x : init) t.v[i++] = x;
    return t;
  }

  int size() const { return rows * cols; }
  bool empty() const { return v.empty(); }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double value) {
    for (double& x : v) x = value;
  }
};

inline std::string shape_str(const Tensor& t) {
  std::ostringstream oss;
  oss << t.rows << "x" << t.cols;
  return oss.str();
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a.v[i] != b.v[i] || std::signbit(a.v[i]) != std::signbit(b.v[i])) return false;
  return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "max_abs_diff shape mismatch ", shape_str(a), " vs ", shape_str(b));
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace hrlcap

#endif  // HRLCAP_TENSOR_HPP_
