// Copyright 2026 The CPT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include "cpt/autodiff/tensor.hpp"

namespace cpt::ad {

namespace detail {

template <typename Scalar>
void require_finite(const Matrix<Scalar>& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

inline Index normalize_axis(Index axis, Index rank, const char* op) {
  Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  return a;
}

// Splits a shape around `axis` into (outer, extent, inner) so that element
// (o, k, i) lives at flat offset (o * extent + k) * inner + i.
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (Index d = axis + 1; d < static_cast<Index>(shape.size()); ++d) s.inner *= shape[d];
  return s;
}

template <typename Scalar>
Eigen::Map<const Eigen::Array<Scalar, 1, Eigen::Dynamic>> as_row(const Matrix<Scalar>& m) {
  return {m.data(), m.size()};
}

template <typename Scalar>
Eigen::Map<Eigen::Array<Scalar, 1, Eigen::Dynamic>> as_row(Matrix<Scalar>& m) {
  return {m.data(), m.size()};
}

template <typename Scalar>
Matrix<Scalar> expand(const Matrix<Scalar>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix<Scalar>::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

template <typename Scalar>
Matrix<Scalar> reduce_to(const Matrix<Scalar>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<Scalar>::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

struct Broadcast {
  Index rows, cols;
  Shape shape;
};

template <typename Scalar>
Broadcast broadcast(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  Index rows = std::max(a.rows(), b.rows());
  Index cols = std::max(a.cols(), b.cols());
  auto fits = [&](const Tensor<Scalar>& t) {
    return (t.rows() == rows || t.rows() == 1) && (t.cols() == cols || t.cols() == 1);
  };
  if (!fits(a) || !fits(b))
    throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " +
                         to_string(b.shape()));
  Shape shape;
  if (a.rows() == rows && a.cols() == cols)
    shape = a.shape();
  else if (b.rows() == rows && b.cols() == cols)
    shape = b.shape();
  else
    shape = {rows, cols};
  return {rows, cols, shape};
}

}  // namespace detail

/// Elementwise sum. Operands broadcast over the matrix view: each side is
/// either full size, a single row, a single column, or a single element.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto bc = detail::broadcast(a, b, "add");
  Matrix<Scalar> out = detail::expand(a.value(), bc.rows, bc.cols) + detail::expand(b.value(), bc.rows, bc.cols);
  return detail::make_result<Scalar>(bc.shape, std::move(out), {&a, &b}, [na = a.node(), nb = b.node()] {
    return [na, nb](const Matrix<Scalar>& g) {
      if (na->requires_grad) detail::accumulate(na, detail::reduce_to(g, na->value.rows(), na->value.cols()));
      if (nb->requires_grad) detail::accumulate(nb, detail::reduce_to(g, nb->value.rows(), nb->value.cols()));
    };
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto bc = detail::broadcast(a, b, "sub");
  Matrix<Scalar> out = detail::expand(a.value(), bc.rows, bc.cols) - detail::expand(b.value(), bc.rows, bc.cols);
  return detail::make_result<Scalar>(bc.shape, std::move(out), {&a, &b}, [na = a.node(), nb = b.node()] {
    return [na, nb](const Matrix<Scalar>& g) {
      if (na->requires_grad) detail::accumulate(na, detail::reduce_to(g, na->value.rows(), na->value.cols()));
      if (nb->requires_grad)
        detail::accumulate(nb, Matrix<Scalar>(-detail::reduce_to(g, nb->value.rows(), nb->value.cols())));
    };
  });
}

/// Elementwise (Hadamard) product with the same broadcasting as `add`.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto bc = detail::broadcast(a, b, "mul");
  Matrix<Scalar> ea = detail::expand(a.value(), bc.rows, bc.cols);
  Matrix<Scalar> eb = detail::expand(b.value(), bc.rows, bc.cols);
  Matrix<Scalar> out = ea.cwiseProduct(eb);
  return detail::make_result<Scalar>(bc.shape, std::move(out), {&a, &b}, [&, na = a.node(), nb = b.node()] {
    return [na, nb, ea = std::move(ea), eb = std::move(eb)](const Matrix<Scalar>& g) {
      if (na->requires_grad)
        detail::accumulate(na, detail::reduce_to<Scalar>(g.cwiseProduct(eb), na->value.rows(), na->value.cols()));
      if (nb->requires_grad)
        detail::accumulate(nb, detail::reduce_to<Scalar>(g.cwiseProduct(ea), nb->value.rows(), nb->value.cols()));
    };
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  return detail::make_result<Scalar>(a.shape(), s * a.value(), {&a}, [na = a.node(), s] {
    return [na, s](const Matrix<Scalar>& g) { detail::accumulate(na, Matrix<Scalar>(s * g)); };
  });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar s) {
  Matrix<Scalar> out = a.value().array() + s;
  return detail::make_result<Scalar>(a.shape(), std::move(out), {&a}, [na = a.node()] {
    return [na](const Matrix<Scalar>& g) { detail::accumulate(na, g); };
  });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) { return scale(a, Scalar(-1)); }
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) { return scale(a, s); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) { return scale(a, s); }
template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, Scalar s) { return add_scalar(a, s); }
template <typename Scalar>
Tensor<Scalar> operator+(Scalar s, const Tensor<Scalar>& a) { return add_scalar(a, s); }

/// Matrix product of the matrix view of `a` ([m x k], leading dimensions
/// flattened) with a rank-2 `b` ([k x n]).
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (b.rank() != 2 || a.rank() < 1 || a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  Shape shape = a.rank() == 1 ? Shape{b.cols()} : a.shape();
  shape.back() = b.cols();
  Matrix<Scalar> out = a.value() * b.value();
  return detail::make_result<Scalar>(std::move(shape), std::move(out), {&a, &b}, [na = a.node(), nb = b.node()] {
    return [na, nb](const Matrix<Scalar>& g) {
      if (na->requires_grad) na->grad_buffer().noalias() += g * nb->value.transpose();
      if (nb->requires_grad) nb->grad_buffer().noalias() += na->value.transpose() * g;
    };
  });
}

/// Affine map `x W + b` with `b` broadcast across rows.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  return add(matmul(x, weight), bias);
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + to_string(a.shape()));
  Matrix<Scalar> out = a.value().transpose();
  return detail::make_result<Scalar>(Shape{a.dim(1), a.dim(0)}, std::move(out), {&a}, [na = a.node()] {
    return [na](const Matrix<Scalar>& g) { detail::accumulate(na, Matrix<Scalar>(g.transpose())); };
  });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  auto [r, c] = matrix_view(shape);
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(a.value().data(), r, c);
  return detail::make_result<Scalar>(std::move(shape), std::move(out), {&a}, [na = a.node()] {
    return [na](const Matrix<Scalar>& g) {
      detail::accumulate(na, Matrix<Scalar>(Eigen::Map<const Matrix<Scalar>>(g.data(), na->value.rows(),
                                                                              na->value.cols())));
    };
  });
}

/// Exact (erf-based) Gaussian error linear unit.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
  Matrix<Scalar> out = x.value().unaryExpr(
      [&](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * inv_sqrt2)); });
  return detail::make_result<Scalar>(x.shape(), std::move(out), {&x}, [nx = x.node(), inv_sqrt2] {
    return [nx, inv_sqrt2](const Matrix<Scalar>& g) {
      const Scalar inv_sqrt2pi = inv_sqrt2 / std::sqrt(std::numbers::pi_v<Scalar>);
      Matrix<Scalar> d = nx->value.unaryExpr([&](Scalar v) {
        return Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-Scalar(0.5) * v * v);
      });
      detail::accumulate(nx, Matrix<Scalar>(g.cwiseProduct(d)));
    };
  });
}

/// Normalizes each row (last axis) to zero mean and unit variance, then
/// applies a per-column gain and bias.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          Scalar eps = Scalar(1e-5)) {
  const Index n = x.cols();
  if (gain.size() != n || bias.size() != n)
    throw DimensionError("layer_norm: gain/bias " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                         " do not match " + to_string(x.shape()));
  Matrix<Scalar> centered = x.value().colwise() - x.value().rowwise().mean();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / Scalar(n)) + eps).rsqrt();
  Matrix<Scalar> xhat = centered.array().colwise() * inv_std.array();
  Matrix<Scalar> out = (xhat.array().rowwise() * detail::as_row(gain.value())).rowwise() +
                       detail::as_row(bias.value());
  return detail::make_result<Scalar>(x.shape(), std::move(out), {&x, &gain, &bias},
                                     [&, nx = x.node(), ng = gain.node(), nb = bias.node()] {
    return [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix<Scalar>& g) {
      if (nb->requires_grad) detail::as_row(nb->grad_buffer()) += g.colwise().sum().array();
      if (ng->requires_grad) detail::as_row(ng->grad_buffer()) += g.cwiseProduct(xhat).colwise().sum().array();
      if (nx->requires_grad) {
        Matrix<Scalar> dxhat = g.array().rowwise() * detail::as_row(ng->value);
        auto mean_d = dxhat.rowwise().mean();
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix<Scalar> dx = (dxhat.colwise() - mean_d) - (xhat.array().colwise() * mean_dx.array()).matrix();
        dx = dx.array().colwise() * inv_std.array();
        detail::accumulate(nx, dx);
      }
    };
  });
}

/// Scales each row (last axis) by the reciprocal of its root mean square,
/// then applies a per-column gain. No centering.
template <typename Scalar>
Tensor<Scalar> rms_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, Scalar eps = Scalar(1e-5)) {
  const Index n = x.cols();
  if (gain.size() != n)
    throw DimensionError("rms_norm: gain " + to_string(gain.shape()) + " does not match " + to_string(x.shape()));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_rms =
      ((x.value().array().square().rowwise().sum() / Scalar(n)) + eps).rsqrt();
  Matrix<Scalar> xhat = x.value().array().colwise() * inv_rms.array();
  Matrix<Scalar> out = xhat.array().rowwise() * detail::as_row(gain.value());
  return detail::make_result<Scalar>(x.shape(), std::move(out), {&x, &gain},
                                     [&, nx = x.node(), ng = gain.node()] {
    return [nx, ng, xhat = std::move(xhat), inv_rms = std::move(inv_rms)](const Matrix<Scalar>& g) {
      if (ng->requires_grad) detail::as_row(ng->grad_buffer()) += g.cwiseProduct(xhat).colwise().sum().array();
      if (nx->requires_grad) {
        Matrix<Scalar> dxhat = g.array().rowwise() * detail::as_row(ng->value);
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix<Scalar> dx = dxhat - (xhat.array().colwise() * mean_dx.array()).matrix();
        dx = dx.array().colwise() * inv_rms.array();
        detail::accumulate(nx, dx);
      }
    };
  });
}

/// Softmax along `axis`, computed with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis = -1) {
  Index ax = detail::normalize_axis(axis, std::max<Index>(x.rank(), 1), "softmax");
  detail::require_finite(x.value(), "softmax");
  Shape shape = x.shape().empty() ? Shape{1} : x.shape();
  auto s = detail::split_axis(shape, ax);
  Matrix<Scalar> out(x.rows(), x.cols());
  const Scalar* in = x.value().data();
  Scalar* y = out.data();
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.inner; ++i) {
      Index base = o * s.extent * s.inner + i;
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (Index k = 0; k < s.extent; ++k) mx = std::max(mx, in[base + k * s.inner]);
      Scalar total = 0;
      for (Index k = 0; k < s.extent; ++k) total += (y[base + k * s.inner] = std::exp(in[base + k * s.inner] - mx));
      for (Index k = 0; k < s.extent; ++k) y[base + k * s.inner] /= total;
    }
  return detail::make_result<Scalar>(x.shape(), out, {&x}, [nx = x.node(), s, out] {
    return [nx, s, y = out](const Matrix<Scalar>& g) {
      Matrix<Scalar> dx(y.rows(), y.cols());
      for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.inner; ++i) {
          Index base = o * s.extent * s.inner + i;
          Scalar dot = 0;
          for (Index k = 0; k < s.extent; ++k) dot += g.data()[base + k * s.inner] * y.data()[base + k * s.inner];
          for (Index k = 0; k < s.extent; ++k) {
            Index at = base + k * s.inner;
            dx.data()[at] = y.data()[at] * (g.data()[at] - dot);
          }
        }
      detail::accumulate(nx, dx);
    };
  });
}

/// Mean along `axis`; the axis is removed from the result shape.
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x, Index axis) {
  Index ax = detail::normalize_axis(axis, x.rank(), "mean");
  auto s = detail::split_axis(x.shape(), ax);
  Shape shape = x.shape();
  shape.erase(shape.begin() + ax);
  Matrix<Scalar> flat = Matrix<Scalar>::Zero(1, s.outer * s.inner);
  const Scalar* in = x.value().data();
  for (Index o = 0; o < s.outer; ++o)
    for (Index k = 0; k < s.extent; ++k)
      for (Index i = 0; i < s.inner; ++i) flat(0, o * s.inner + i) += in[(o * s.extent + k) * s.inner + i];
  flat /= Scalar(s.extent);
  auto [r, c] = matrix_view(shape);
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(flat.data(), r, c);
  return detail::make_result<Scalar>(std::move(shape), std::move(out), {&x}, [nx = x.node(), s] {
    return [nx, s](const Matrix<Scalar>& g) {
      Matrix<Scalar> dx(nx->value.rows(), nx->value.cols());
      const Scalar inv = Scalar(1) / Scalar(s.extent);
      for (Index o = 0; o < s.outer; ++o)
        for (Index k = 0; k < s.extent; ++k)
          for (Index i = 0; i < s.inner; ++i) dx.data()[(o * s.extent + k) * s.inner + i] = g.data()[o * s.inner + i] * inv;
      detail::accumulate(nx, dx);
    };
  });
}

/// Sum of all elements, as a rank-0 tensor.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(Shape{}, Matrix<Scalar>::Constant(1, 1, x.value().sum()), {&x},
                                     [nx = x.node()] {
    return [nx](const Matrix<Scalar>& g) {
      detail::accumulate(nx, Matrix<Scalar>(Matrix<Scalar>::Constant(nx->value.rows(), nx->value.cols(), g(0, 0))));
    };
  });
}

/// Concatenation along `axis`; all other dimensions must agree.
template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  Index ax = detail::normalize_axis(axis, static_cast<Index>(ref.size()), "concat");
  Shape shape = ref;
  shape[ax] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == static_cast<Index>(ref.size());
    for (Index d = 0; ok && d < p.rank(); ++d) ok = d == ax || p.dim(d) == ref[d];
    if (!ok) throw DimensionError("concat: " + to_string(p.shape()) + " incompatible with " + to_string(ref));
    shape[ax] += p.dim(ax);
  }
  auto total = detail::split_axis(shape, ax);
  auto [r, c] = matrix_view(shape);
  Matrix<Scalar> out(r, c);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    Index width = p.dim(ax) * total.inner;
    for (Index o = 0; o < total.outer; ++o)
      std::copy_n(p.value().data() + o * width, width, out.data() + o * total.extent * total.inner + offset);
    offset += width;
  }
  std::vector<std::shared_ptr<detail::Node<Scalar>>> nodes;
  bool track = false;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    track = track || p.requires_grad();
  }
  Tensor<Scalar> result(shape, std::move(out));
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (!tape || !track) return result;
  result.node()->requires_grad = true;
  result.node()->backward = [nodes, offsets, total, ax](const Matrix<Scalar>& g) {
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      auto& n = nodes[j];
      if (!n->requires_grad) continue;
      Index width = n->shape[ax] * total.inner;
      Matrix<Scalar>& dst = n->grad_buffer();
      for (Index o = 0; o < total.outer; ++o) {
        const Scalar* src = g.data() + o * total.extent * total.inner + offsets[j];
        Scalar* d = dst.data() + o * width;
        for (Index i = 0; i < width; ++i) d[i] += src[i];
      }
    }
  };
  tape->record(result.node());
  return result;
}

template <typename Scalar>
Tensor<Scalar> concat(std::initializer_list<Tensor<Scalar>> parts, Index axis) {
  return concat(std::span<const Tensor<Scalar>>(parts.begin(), parts.size()), axis);
}

/// Contiguous slice [begin, begin + count) along `axis`.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index begin, Index count) {
  Index ax = detail::normalize_axis(axis, x.rank(), "slice");
  if (begin < 0 || count <= 0 || begin + count > x.dim(ax))
    throw IndexError("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside axis of extent " + std::to_string(x.dim(ax)));
  auto s = detail::split_axis(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = count;
  auto [r, c] = matrix_view(shape);
  Matrix<Scalar> out(r, c);
  const Index width = count * s.inner;
  for (Index o = 0; o < s.outer; ++o)
    std::copy_n(x.value().data() + (o * s.extent + begin) * s.inner, width, out.data() + o * width);
  return detail::make_result<Scalar>(std::move(shape), std::move(out), {&x}, [nx = x.node(), s, begin, width] {
    return [nx, s, begin, width](const Matrix<Scalar>& g) {
      Matrix<Scalar>& dst = nx->grad_buffer();
      for (Index o = 0; o < s.outer; ++o) {
        Scalar* d = dst.data() + (o * s.extent + begin) * s.inner;
        const Scalar* src = g.data() + o * width;
        for (Index i = 0; i < width; ++i) d[i] += src[i];
      }
    };
  });
}

/// Row gather from an embedding table [V x D]; result is [n x D].
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + to_string(table.shape()));
  if (ids.empty()) throw ContractError("embedding: empty id sequence");
  Matrix<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(table.rows()));
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return detail::make_result<Scalar>(Shape{static_cast<Index>(ids.size()), table.cols()}, std::move(out), {&table},
                                     [nt = table.node(), idx = std::move(idx)] {
    return [nt, idx](const Matrix<Scalar>& g) {
      Matrix<Scalar>& dst = nt->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) dst.row(idx[i]) += g.row(static_cast<Index>(i));
    };
  });
}

/// Mean over masked rows of -log softmax(logits[i])[targets[i]].
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets,
                             const std::vector<bool>& mask) {
  const Index t = logits.rows(), vocab = logits.cols();
  if (static_cast<Index>(targets.size()) != t || static_cast<Index>(mask.size()) != t)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(mask.size()) + " mask entries for logits " + to_string(logits.shape()));
  Index active = std::count(mask.begin(), mask.end(), true);
  if (active == 0) throw ContractError("cross_entropy: mask selects no positions");
  Matrix<Scalar> probs = Matrix<Scalar>::Zero(t, vocab);
  Scalar total = 0;
  for (Index i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    int y = targets[i];
    if (y < 0 || y >= vocab)
      throw IndexError("cross_entropy: target " + std::to_string(y) + " outside vocabulary of " +
                       std::to_string(vocab));
    auto row = logits.value().row(i);
    if (!row.allFinite()) throw NumericError("cross_entropy: non-finite logits");
    Scalar mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    Scalar z = e.sum();
    probs.row(i) = e / z;
    total += (mx + std::log(z)) - row(y);
  }
  std::vector<int> ys(targets.begin(), targets.end());
  return detail::make_result<Scalar>(Shape{}, Matrix<Scalar>::Constant(1, 1, total / Scalar(active)), {&logits},
                                     [&, nl = logits.node()] {
    return [nl, probs = std::move(probs), ys = std::move(ys), mask, active](const Matrix<Scalar>& g) {
      Matrix<Scalar> d = probs;
      for (Index i = 0; i < d.rows(); ++i)
        if (mask[i]) d(i, ys[i]) -= Scalar(1);
      detail::accumulate(nl, Matrix<Scalar>(d * (g(0, 0) / Scalar(active))));
    };
  });
}

/// Multi-head causal self-attention over a packed [K x 3D] query/key/value
/// block; returns the concatenated head outputs [K x D]. Row i attends to
/// rows 0..i only.
template <typename Scalar>
Tensor<Scalar> causal_self_attention(const Tensor<Scalar>& qkv, Index heads) {
  const Index k = qkv.rows();
  if (qkv.rank() != 2 || qkv.cols() % 3 != 0 || (qkv.cols() / 3) % heads != 0)
    throw DimensionError("causal_self_attention: packed input " + to_string(qkv.shape()) +
                         " incompatible with " + std::to_string(heads) + " heads");
  const Index d = qkv.cols() / 3, hd = d / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(hd));
  const Matrix<Scalar>& in = qkv.value();
  Matrix<Scalar> out(k, d);
  std::vector<Matrix<Scalar>> attn(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    auto q = in.middleCols(h * hd, hd);
    auto key = in.middleCols(d + h * hd, hd);
    auto v = in.middleCols(2 * d + h * hd, hd);
    Matrix<Scalar> s = (q * key.transpose()) * inv_sqrt;
    for (Index i = 0; i < k; ++i) {
      Scalar mx = s.row(i).head(i + 1).maxCoeff();
      Scalar z = 0;
      for (Index j = 0; j <= i; ++j) z += (s(i, j) = std::exp(s(i, j) - mx));
      for (Index j = 0; j <= i; ++j) s(i, j) /= z;
      for (Index j = i + 1; j < k; ++j) s(i, j) = Scalar(0);
    }
    out.middleCols(h * hd, hd).noalias() = s * v;
    attn[static_cast<std::size_t>(h)] = std::move(s);
  }
  return detail::make_result<Scalar>(Shape{k, d}, std::move(out), {&qkv}, [&, nq = qkv.node()] {
    return [nq, attn = std::move(attn), heads, d, hd, inv_sqrt](const Matrix<Scalar>& g) {
      const Matrix<Scalar>& in = nq->value;
      Matrix<Scalar> dqkv = Matrix<Scalar>::Zero(in.rows(), in.cols());
      for (Index h = 0; h < heads; ++h) {
        const Matrix<Scalar>& a = attn[static_cast<std::size_t>(h)];
        auto q = in.middleCols(h * hd, hd);
        auto key = in.middleCols(d + h * hd, hd);
        auto v = in.middleCols(2 * d + h * hd, hd);
        auto go = g.middleCols(h * hd, hd);
        Matrix<Scalar> da = go * v.transpose();
        dqkv.middleCols(2 * d + h * hd, hd).noalias() += a.transpose() * go;
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = a.cwiseProduct(da).rowwise().sum();
        Matrix<Scalar> ds = a.cwiseProduct(Matrix<Scalar>(da.colwise() - rowdot)) * inv_sqrt;
        dqkv.middleCols(h * hd, hd).noalias() += ds * key;
        dqkv.middleCols(d + h * hd, hd).noalias() += ds.transpose() * q;
      }
      detail::accumulate(nq, dqkv);
    };
  });
}

/// Sliding-window patch extraction for a [H x W x C] input with zero
/// padding. Produces [Ho x Wo x (kernel * kernel * C)], patch entries ordered
/// (ky, kx, c). A convolution is `matmul(patches(...), weight) + bias`.
template <typename Scalar>
Tensor<Scalar> patches(const Tensor<Scalar>& x, Index kernel, Index stride, Index pad) {
  if (x.rank() != 3) throw DimensionError("patches: expected [H x W x C], got " + to_string(x.shape()));
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const Index ho = (h + 2 * pad - kernel) / stride + 1, wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) throw DimensionError("patches: kernel larger than padded input " + to_string(x.shape()));
  const Index width = kernel * kernel * c;
  // Source flat offset for every output entry, -1 for padding.
  std::vector<Index> source(static_cast<std::size_t>(ho * wo * width), -1);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(ho * wo, width);
  const Scalar* in = x.value().data();
  for (Index oy = 0; oy < ho; ++oy)
    for (Index ox = 0; ox < wo; ++ox)
      for (Index ky = 0; ky < kernel; ++ky)
        for (Index kx = 0; kx < kernel; ++kx) {
          Index iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
          for (Index ch = 0; ch < c; ++ch) {
            Index dst = (oy * wo + ox) * width + (ky * kernel + kx) * c + ch;
            Index src = (iy * w + ix) * c + ch;
            source[static_cast<std::size_t>(dst)] = src;
            out.data()[dst] = in[src];
          }
        }
  return detail::make_result<Scalar>(Shape{ho, wo, width}, std::move(out), {&x},
                                     [nx = x.node(), source = std::move(source)] {
    return [nx, source](const Matrix<Scalar>& g) {
      Matrix<Scalar>& dst = nx->grad_buffer();
      for (std::size_t i = 0; i < source.size(); ++i)
        if (source[i] >= 0) dst.data()[source[i]] += g.data()[i];
    };
  });
}

}  // namespace cpt::ad
