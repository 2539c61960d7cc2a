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

#ifndef HRLCAP_GRAPH_HPP_
#define HRLCAP_GRAPH_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrlcap/common.hpp"
#include "hrlcap/random.hpp"
#include "hrlcap/tensor.hpp"

namespace hrlcap {

// Reverse-mode autodiff over a define-by-run computation record. The record
// is rebuilt per forward pass; nodes are appended in topological order, so
// backward is a single reverse scan that visits each node exactly once.

enum class OpKind : std::uint8_t {
  kConstant,   // leaf, no gradient
  kParameter,  // leaf, gradient reported by backward()
  kMatmul,
  kAdd,        // same shape, or rhs broadcast from (1,cols) or (1,1)
  kMul,        // elementwise; rhs may broadcast from (1,1)
  kConcat,     // n-ary, along axis 0 (rows) or 1 (cols)
  kTanh,
  kSigmoid,
  kSoftmax,    // rowwise over the last axis
  kLog,
  kEmbed,      // row lookup into a (V,d) table
  kSlice,      // half-open row/col ranges
  kSum,        // full reduction to 1x1
  kTranspose,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "elementwise-multiply";
    case OpKind::kConcat: return "concat";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLog: return "log";
    case OpKind::kEmbed: return "embedding-lookup";
    case OpKind::kSlice: return "slice";
    case OpKind::kSum: return "sum";
    case OpKind::kTranspose: return "transpose";
  }
  return "?";
}

struct Node {
  OpKind kind = OpKind::kConstant;
  bool requires_grad = false;
  std::int32_t i0 = -1;
  std::int32_t i1 = -1;
  std::vector<std::int32_t> rest;  // inputs beyond two (concat only)
  // Op attributes: concat axis; embed row index; slice r0,r1,c0,c1.
  std::int32_t a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  Tensor value;
  Tensor grad;
  std::uint32_t grad_epoch = 0;

  int num_inputs() const {
    if (i0 < 0) return 0;
    if (i1 < 0) return 1;
    return 2 + static_cast<int>(rest.size());
  }
  std::int32_t input(int i) const {
    if (i == 0) return i0;
    if (i == 1) return i1;
    return rest[static_cast<std::size_t>(i) - 2];
  }
};

class Tape;

// Lightweight handle to a node on a tape.
struct Value {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

using GradientMap = std::map<std::int32_t, Tensor>;

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor& val(Value v) const { return node(v).value; }
  const Tensor& val(std::int32_t id) const { return nodes_[id].value; }
  bool requires_grad(Value v) const { return node(v).requires_grad; }

  // Gradient of a node from the most recent backward(); zero tensor if the
  // node did not contribute to the loss.
  Tensor grad_of(Value v) const {
    const Node& n = node(v);
    if (n.grad_epoch == epoch_ && !n.grad.empty()) return n.grad;
    return Tensor::zeros(n.value.rows, n.value.cols);
  }

  Value constant(Tensor t) { return leaf(std::move(t), OpKind::kConstant, false); }
  Value scalar(double x) { return constant(Tensor::scalar(x)); }
  Value parameter(const Tensor& t, bool trainable = true) {
    return leaf(t, OpKind::kParameter, trainable);
  }
  // Re-enter an existing value as a constant: gradients stop here.
  Value detach(Value v) { return constant(val(v)); }

  Value matmul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    check(A.cols == B.rows, "matmul inner dimensions differ: lhs ", shape_str(A),
          " vs rhs ", shape_str(B));
    Tensor out(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
      const double* arow = &A.v[static_cast<std::size_t>(i) * A.cols];
      double* orow = &out.v[static_cast<std::size_t>(i) * out.cols];
      for (int k = 0; k < A.cols; ++k) {
        double aik = arow[k];
        if (aik == 0.0) continue;
        const double* brow = &B.v[static_cast<std::size_t>(k) * B.cols];
        for (int j = 0; j < B.cols; ++j) orow[j] += aik * brow[j];
      }
    }
    return emit(OpKind::kMatmul, std::move(out), a, b);
  }

  Value add(Value a, Value b) {
    if (is_scalar(b) || broadcasts_rows(a, b)) {
      // keep broadcast operand second
    } else if (is_scalar(a) || broadcasts_rows(b, a)) {
      std::swap(a, b);
    }
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out = A;
    if (A.same_shape(B)) {
      for (int i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
    } else if (B.rows == 1 && B.cols == 1) {
      for (double& x : out.v) x += B.v[0];
    } else if (B.rows == 1 && B.cols == A.cols) {
      for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) out.at(r, c) += B.v[c];
    } else {
      fail("add shape mismatch: lhs ", shape_str(A), " vs rhs ", shape_str(B));
    }
    return emit(OpKind::kAdd, std::move(out), a, b);
  }

  Value mul(Value a, Value b) {
    if (is_scalar(a) && !is_scalar(b)) std::swap(a, b);
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out = A;
    if (A.same_shape(B)) {
      for (int i = 0; i < out.size(); ++i) out.v[i] *= B.v[i];
    } else if (B.rows == 1 && B.cols == 1) {
      for (double& x : out.v) x *= B.v[0];
    } else {
      fail("elementwise-multiply shape mismatch: lhs ", shape_str(A), " vs rhs ",
           shape_str(B));
    }
    return emit(OpKind::kMul, std::move(out), a, b);
  }

  Value concat(int axis, std::span<const Value> parts) {
    check(axis == 0 || axis == 1, "concat axis must be 0 or 1, got ", axis);
    check(!parts.empty(), "concat requires at least one input");
    const Tensor& first = val(parts[0]);
    int rows = first.rows, cols = first.cols;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const Tensor& t = val(parts[i]);
      if (axis == 0) {
        check(t.cols == cols, "concat axis 0 column mismatch: ", shape_str(first),
              " vs ", shape_str(t));
        rows += t.rows;
      } else {
        check(t.rows == rows, "concat axis 1 row mismatch: ", shape_str(first),
              " vs ", shape_str(t));
        cols += t.cols;
      }
    }
    Tensor out(rows, cols);
    if (axis == 0) {
      int r = 0;
      for (const Value& p : parts) {
        const Tensor& t = val(p);
        std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<std::size_t>(r) * cols);
        r += t.rows;
      }
    } else {
      int c = 0;
      for (const Value& p : parts) {
        const Tensor& t = val(p);
        for (int r = 0; r < rows; ++r)
          std::copy(t.v.begin() + static_cast<std::size_t>(r) * t.cols,
                    t.v.begin() + static_cast<std::size_t>(r + 1) * t.cols,
                    out.v.begin() + static_cast<std::size_t>(r) * cols + c);
        c += t.cols;
      }
    }
    Value v = emit_nary(OpKind::kConcat, std::move(out), parts);
    nodes_[v.id].a0 = axis;
    return v;
  }
  Value concat(int axis, std::initializer_list<Value> parts) {
    return concat(axis, std::span<const Value>(parts.begin(), parts.size()));
  }

  Value tanh(Value a) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::tanh(x);
    return emit(OpKind::kTanh, std::move(out), a);
  }

  Value sigmoid(Value a) {
    Tensor out = val(a);
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    return emit(OpKind::kSigmoid, std::move(out), a);
  }

  Value softmax(Value a) {
    Tensor out = val(a);
    for (int r = 0; r < out.rows; ++r) {
      double* row = &out.v[static_cast<std::size_t>(r) * out.cols];
      double m = row[0];
      for (int c = 1; c < out.cols; ++c) m = std::max(m, row[c]);
      double s = 0.0;
      for (int c = 0; c < out.cols; ++c) {
        row[c] = std::exp(row[c] - m);
        s += row[c];
      }
      for (int c = 0; c < out.cols; ++c) row[c] /= s;
    }
    return emit(OpKind::kSoftmax, std::move(out), a);
  }

  Value log(Value a) {
    Tensor out = val(a);
    for (double& x : out.v) {
      check(x > 0.0, "log domain error: input value ", x);
      x = std::log(x);
    }
    return emit(OpKind::kLog, std::move(out), a);
  }

  Value embed(Value table, int index) {
    const Tensor& T = val(table);
    check(index >= 0 && index < T.rows, "embedding-lookup index ", index,
          " out of range for table ", shape_str(T));
    Tensor out(1, T.cols);
    std::copy(T.v.begin() + static_cast<std::size_t>(index) * T.cols,
              T.v.begin() + static_cast<std::size_t>(index + 1) * T.cols, out.v.begin());
    Value v = emit(OpKind::kEmbed, std::move(out), table);
    nodes_[v.id].a0 = index;
    return v;
  }

  Value slice(Value a, int r0, int r1, int c0, int c1) {
    const Tensor& A = val(a);
    check(0 <= r0 && r0 <= r1 && r1 <= A.rows && 0 <= c0 && c0 <= c1 && c1 <= A.cols,
          "slice range [", r0, ",", r1, ")x[", c0, ",", c1, ") out of bounds for ",
          shape_str(A));
    Tensor out(r1 - r0, c1 - c0);
    for (int r = r0; r < r1; ++r)
      std::copy(A.v.begin() + static_cast<std::size_t>(r) * A.cols + c0,
                A.v.begin() + static_cast<std::size_t>(r) * A.cols + c1,
                out.v.begin() + static_cast<std::size_t>(r - r0) * out.cols);
    Value v = emit(OpKind::kSlice, std::move(out), a);
    Node& n = nodes_[v.id];
    n.a0 = r0; n.a1 = r1; n.a2 = c0; n.a3 = c1;
    return v;
  }

  Value sum(Value a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double x : A.v) s += x;
    return emit(OpKind::kSum, Tensor::scalar(s), a);
  }

  Value transpose(Value a) {
    const Tensor& A = val(a);
    Tensor out(A.cols, A.rows);
    for (int r = 0; r < A.rows; ++r)
      for (int c = 0; c < A.cols; ++c) out.at(c, r) = A.at(r, c);
    return emit(OpKind::kTranspose, std::move(out), a);
  }

  // Convenience composites (no new op kinds).
  Value neg(Value a) { return mul(a, scalar(-1.0)); }
  Value sub(Value a, Value b) { return add(a, neg(b)); }
  Value scale(Value a, double s) { return mul(a, scalar(s)); }

  // Reverse pass from a scalar loss. Returns the gradient for every
  // parameter leaf that contributed; non-parameter leaves are skipped.
  // The record itself is read-only: backward may be called repeatedly.
  GradientMap backward(Value loss) {
    check(loss.tape == this, "backward: loss lives on a different record");
    const Node& ln = node(loss);
    check(ln.value.rows == 1 && ln.value.cols == 1,
          "backward requires a scalar loss, got ", shape_str(ln.value));
    ++epoch_;
    if (ln.requires_grad) {
      grad(loss.id) = Tensor::scalar(1.0);
      for (std::int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad_epoch != epoch_ || !n.requires_grad) continue;
        propagate(n);
      }
    }
    GradientMap out;
    for (std::int32_t id = 0; id <= loss.id; ++id) {
      Node& n = nodes_[id];
      if (n.kind != OpKind::kParameter || !n.requires_grad) continue;
      if (n.grad_epoch == epoch_)
        out.emplace(id, n.grad);
      else
        out.emplace(id, Tensor::zeros(n.value.rows, n.value.cols));
    }
    return out;
  }

 private:
  friend class TapeTestPeer;

  const Node& node(Value v) const {
    check(v.tape == this && v.id >= 0 && v.id < size(), "value handle is not on this record");
    return nodes_[v.id];
  }

  bool is_scalar(Value v) const { return val(v).rows == 1 && val(v).cols == 1; }
  bool broadcasts_rows(Value a, Value b) const {
    return val(b).rows == 1 && val(a).rows > 1 && val(b).cols == val(a).cols;
  }

  Value leaf(Tensor t, OpKind kind, bool trainable) {
    check(t.all_finite(), op_name(kind), " leaf holds non-finite values");
    Node n;
    n.kind = kind;
    n.requires_grad = trainable;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Value emit(OpKind kind, Tensor out, Value a, Value b = Value{}) {
    check(out.all_finite(), op_name(kind), " produced a non-finite value");
    Node n;
    n.kind = kind;
    n.i0 = a.id;
    n.requires_grad = nodes_[a.id].requires_grad;
    if (b.valid()) {
      n.i1 = b.id;
      n.requires_grad = n.requires_grad || nodes_[b.id].requires_grad;
    }
    n.value = std::move(out);
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Value emit_nary(OpKind kind, Tensor out, std::span<const Value> inputs) {
    check(out.all_finite(), op_name(kind), " produced a non-finite value");
    Node n;
    n.kind = kind;
    n.i0 = inputs[0].id;
    n.requires_grad = nodes_[inputs[0].id].requires_grad;
    if (inputs.size() > 1) {
      n.i1 = inputs[1].id;
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        n.requires_grad = n.requires_grad || nodes_[inputs[i].id].requires_grad;
        if (i >= 2) n.rest.push_back(inputs[i].id);
      }
    }
    n.value = std::move(out);
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Lazily reset accumulator for the current backward epoch.
  Tensor& grad(std::int32_t id) {
    Node& n = nodes_[id];
    if (n.grad_epoch != epoch_) {
      if (n.grad.same_shape(n.value))
        n.grad.fill(0.0);
      else
        n.grad = Tensor::zeros(n.value.rows, n.value.cols);
      n.grad_epoch = epoch_;
    }
    return n.grad;
  }

  void add_into(std::int32_t id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor& dst = grad(id);
    for (int i = 0; i < dst.size(); ++i) dst.v[i] += g.v[i];
  }

  void propagate(Node& n) {
    const Tensor& gy = n.grad;
    const Tensor& y = n.value;
    switch (n.kind) {
      case OpKind::kConstant:
      case OpKind::kParameter:
        return;
      case OpKind::kMatmul: {
        const Tensor& A = nodes_[n.i0].value;
        const Tensor& B = nodes_[n.i1].value;
        if (nodes_[n.i0].requires_grad) {
          Tensor& ga = grad(n.i0);  // dA = dC * B^T
          for (int i = 0; i < A.rows; ++i)
            for (int k = 0; k < A.cols; ++k) {
              double s = 0.0;
              const double* gyrow = &gy.v[static_cast<std::size_t>(i) * gy.cols];
              const double* brow = &B.v[static_cast<std::size_t>(k) * B.cols];
              for (int j = 0; j < B.cols; ++j) s += gyrow[j] * brow[j];
              ga.at(i, k) += s;
            }
        }
        if (nodes_[n.i1].requires_grad) {
          Tensor& gb = grad(n.i1);  // dB = A^T * dC
          for (int i = 0; i < A.rows; ++i) {
            const double* arow = &A.v[static_cast<std::size_t>(i) * A.cols];
            const double* gyrow = &gy.v[static_cast<std::size_t>(i) * gy.cols];
            for (int k = 0; k < A.cols; ++k) {
              double aik = arow[k];
              if (aik == 0.0) continue;
              double* grow = &gb.v[static_cast<std::size_t>(k) * gb.cols];
              for (int j = 0; j < gy.cols; ++j) grow[j] += aik * gyrow[j];
            }
          }
        }
        return;
      }
      case OpKind::kAdd: {
        add_into(n.i0, gy);
        const Tensor& B = nodes_[n.i1].value;
        if (!nodes_[n.i1].requires_grad) return;
        if (B.same_shape(y)) {
          add_into(n.i1, gy);
        } else {
          Tensor& gb = grad(n.i1);
          if (B.rows == 1 && B.cols == 1) {
            for (double g : gy.v) gb.v[0] += g;
          } else {  // (1,cols) broadcast over rows
            for (int r = 0; r < gy.rows; ++r)
              for (int c = 0; c < gy.cols; ++c) gb.v[c] += gy.at(r, c);
          }
        }
        return;
      }
      case OpKind::kMul: {
        const Tensor& A = nodes_[n.i0].value;
        const Tensor& B = nodes_[n.i1].value;
        if (B.same_shape(A)) {
          if (nodes_[n.i0].requires_grad) {
            Tensor& ga = grad(n.i0);
            for (int i = 0; i < ga.size(); ++i) ga.v[i] += gy.v[i] * B.v[i];
          }
          if (nodes_[n.i1].requires_grad) {
            Tensor& gb = grad(n.i1);
            for (int i = 0; i < gb.size(); ++i) gb.v[i] += gy.v[i] * A.v[i];
          }
        } else {  // scalar rhs
          if (nodes_[n.i0].requires_grad) {
            Tensor& ga = grad(n.i0);
            for (int i = 0; i < ga.size(); ++i) ga.v[i] += gy.v[i] * B.v[0];
          }
          if (nodes_[n.i1].requires_grad) {
            Tensor& gb = grad(n.i1);
            for (int i = 0; i < A.size(); ++i) gb.v[0] += gy.v[i] * A.v[i];
          }
        }
        return;
      }
      case OpKind::kConcat: {
        int offset = 0;
        for (int i = 0; i < n.num_inputs(); ++i) {
          std::int32_t in = n.input(i);
          const Tensor& t = nodes_[in].value;
          if (nodes_[in].requires_grad) {
            Tensor& gi = grad(in);
            if (n.a0 == 0) {
              for (int r = 0; r < t.rows; ++r)
                for (int c = 0; c < t.cols; ++c) gi.at(r, c) += gy.at(offset + r, c);
            } else {
              for (int r = 0; r < t.rows; ++r)
                for (int c = 0; c < t.cols; ++c) gi.at(r, c) += gy.at(r, offset + c);
            }
          }
          offset += (n.a0 == 0) ? t.rows : t.cols;
        }
        return;
      }
      case OpKind::kTanh: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gx = grad(n.i0);
        for (int i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i] * (1.0 - y.v[i] * y.v[i]);
        return;
      }
      case OpKind::kSigmoid: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gx = grad(n.i0);
        for (int i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i] * y.v[i] * (1.0 - y.v[i]);
        return;
      }
      case OpKind::kSoftmax: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gx = grad(n.i0);
        for (int r = 0; r < y.rows; ++r) {
          double dot = 0.0;
          for (int c = 0; c < y.cols; ++c) dot += gy.at(r, c) * y.at(r, c);
          for (int c = 0; c < y.cols; ++c)
            gx.at(r, c) += y.at(r, c) * (gy.at(r, c) - dot);
        }
        return;
      }
      case OpKind::kLog: {
        if (!nodes_[n.i0].requires_grad) return;
        const Tensor& X = nodes_[n.i0].value;
        Tensor& gx = grad(n.i0);
        for (int i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i] / X.v[i];
        return;
      }
      case OpKind::kEmbed: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gt = grad(n.i0);
        int cols = gt.cols;
        for (int c = 0; c < cols; ++c) gt.at(n.a0, c) += gy.v[c];
        return;
      }
      case OpKind::kSlice: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gx = grad(n.i0);
        for (int r = n.a0; r < n.a1; ++r)
          for (int c = n.a2; c < n.a3; ++c) gx.at(r, c) += gy.at(r - n.a0, c - n.a2);
        return;
      }
      case OpKind::kSum: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gx = grad(n.i0);
        for (double& g : gx.v) g += gy.v[0];
        return;
      }
      case OpKind::kTranspose: {
        if (!nodes_[n.i0].requires_grad) return;
        Tensor& gx = grad(n.i0);
        for (int r = 0; r < gy.rows; ++r)
          for (int c = 0; c < gy.cols; ++c) gx.at(c, r) += gy.at(r, c);
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::uint32_t epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Generic primitive application, the uniform surface the contract tests use.

enum class Primitive : std::uint8_t {
  kMatmul,
  kAdd,
  kElementwiseMultiply,
  kConcat,
  kTanh,
  kSigmoid,
  kSoftmax,
  kLog,
  kEmbeddingLookup,
  kSlice,
  kSum,
};

struct PrimitiveAttrs {
  int axis = 0;                      // concat
  int index = 0;                     // embedding-lookup
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // slice
};

inline Value apply_primitive(Tape& tape, Primitive kind, std::span<const Value> inputs,
                             const PrimitiveAttrs& attrs = {}) {
  auto unary = [&](const char* name) {
    check(inputs.size() == 1, name, " takes exactly one input, got ", inputs.size());
    return inputs[0];
  };
  auto binary = [&](const char* name) {
    check(inputs.size() == 2, name, " takes exactly two inputs, got ", inputs.size());
  };
  switch (kind) {
    case Primitive::kMatmul:
      binary("matmul");
      return tape.matmul(inputs[0], inputs[1]);
    case Primitive::kAdd:
      binary("add");
      return tape.add(inputs[0], inputs[1]);
    case Primitive::kElementwiseMultiply:
      binary("elementwise-multiply");
      return tape.mul(inputs[0], inputs[1]);
    case Primitive::kConcat:
      return tape.concat(attrs.axis, inputs);
    case Primitive::kTanh:
      return tape.tanh(unary("tanh"));
    case Primitive::kSigmoid:
      return tape.sigmoid(unary("sigmoid"));
    case Primitive::kSoftmax:
      return tape.softmax(unary("softmax"));
    case Primitive::kLog:
      return tape.log(unary("log"));
    case Primitive::kEmbeddingLookup:
      return tape.embed(unary("embedding-lookup"), attrs.index);
    case Primitive::kSlice:
      return tape.slice(unary("slice"), attrs.r0, attrs.r1, attrs.c0, attrs.c1);
    case Primitive::kSum:
      return tape.sum(unary("sum"));
  }
  fail("unknown primitive kind");
}

// ---------------------------------------------------------------------------
// Inverted dropout as a graph composite: a reproducible constant mask times
// the input, so evaluation mode is an exact identity.

enum class Mode { kTrain, kEval };

inline Value dropout(Tape& tape, Value x, double rate, Mode mode, Pcg32& rng) {
  check(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1), got ", rate);
  if (mode == Mode::kEval || rate == 0.0) return x;
  const Tensor& X = tape.val(x);
  Tensor mask(X.rows, X.cols);
  double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.v) m = (rng.next_double() >= rate) ? keep_scale : 0.0;
  return tape.mul(x, tape.constant(std::move(mask)));
}

// Plain-tensor variant of the same rule.
inline Tensor dropout(const Tensor& input, double rate, Mode mode, std::uint64_t seed) {
  check(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1), got ", rate);
  if (mode == Mode::kEval || rate == 0.0) return input;
  Pcg32 rng = make_rng(seed);
  Tensor out = input;
  double keep_scale = 1.0 / (1.0 - rate);
  for (double& x : out.v) x *= (rng.next_double() >= rate) ? keep_scale : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle. `build` must deterministically construct a scalar
// loss from leaves bound in the order of `point` (dropout disabled).

using LossBuilder = std::function<Value(Tape&, const std::vector<Value>&)>;

inline double eval_loss(const LossBuilder& build, const std::vector<Tensor>& point) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(tape.parameter(t));
  Value loss = build(tape, leaves);
  const Tensor& lv = tape.val(loss);
  check(lv.rows == 1 && lv.cols == 1, "finite_difference_check: loss must be scalar, got ",
        shape_str(lv));
  check(std::isfinite(lv.v[0]), "finite_difference_check: non-finite function value");
  return lv.v[0];
}

inline double finite_difference_check(const LossBuilder& build, std::vector<Tensor> point,
                                      double step) {
  check(step > 0.0, "finite_difference_check: step must be positive, got ", step);
  // Analytic gradients once.
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Value> leaves;
    for (const Tensor& t : point) leaves.push_back(tape.parameter(t));
    Value loss = build(tape, leaves);
    const Tensor& lv = tape.val(loss);
    check(lv.rows == 1 && lv.cols == 1, "finite_difference_check: loss must be scalar, got ",
          shape_str(lv));
    check(std::isfinite(lv.v[0]), "finite_difference_check: non-finite function value");
    tape.backward(loss);
    for (const Value& leaf : leaves) analytic.push_back(tape.grad_of(leaf));
  }
  // Central differences per coordinate.
  double max_rel = 0.0;
  for (std::size_t t = 0; t < point.size(); ++t) {
    for (int i = 0; i < point[t].size(); ++i) {
      double saved = point[t].v[i];
      point[t].v[i] = saved + step;
      double fp = eval_loss(build, point);
      point[t].v[i] = saved - step;
      double fm = eval_loss(build, point);
      point[t].v[i] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[t].v[i];
      double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hrlcap

#endif  // HRLCAP_GRAPH_HPP_
