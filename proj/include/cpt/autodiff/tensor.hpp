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

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cpt::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::domain_error {
  using std::domain_error::domain_error;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Every tensor is stored as a row-major matrix: leading dimensions are
/// flattened into rows and the last dimension is the column count. Rank-0
/// and rank-1 tensors are a single row.
inline std::pair<Index, Index> matrix_view(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  Index cols = shape.back();
  return {numel(shape) / std::max<Index>(cols, 1), cols};
}

template <typename Scalar>
class Tape;

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool requires_grad = false;
  const Tape<Scalar>* tape = nullptr;
  // Reads this node's grad and accumulates into the operands' grads.
  std::function<void(const Matrix<Scalar>&)> backward;

  Matrix<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
    return grad;
  }
};

}  // namespace detail

/// Handle to a dense tensor and, when gradients are tracked, its tape node.
/// Copies share storage.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;
  using Node = detail::Node<Scalar>;

  Tensor() = default;

  Tensor(Shape shape, Matrix<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (Index d : shape)
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    auto [rows, cols] = matrix_view(shape);
    if (value.rows() != rows || value.cols() != cols) {
      if (value.size() != rows * cols)
        throw DimensionError("data of size " + std::to_string(value.size()) +
                             " does not fill shape " + to_string(shape));
      value = Eigen::Map<const Matrix<Scalar>>(value.data(), rows, cols).eval();
    }
    node_->shape = std::move(shape);
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto [r, c] = matrix_view(shape);
    return Tensor(std::move(shape), Matrix<Scalar>::Zero(r, c), requires_grad);
  }
  static Tensor filled(Shape shape, Scalar v, bool requires_grad = false) {
    auto [r, c] = matrix_view(shape);
    return Tensor(std::move(shape), Matrix<Scalar>::Constant(r, c, v), requires_grad);
  }
  static Tensor scalar(Scalar v, bool requires_grad = false) {
    return Tensor(Shape{}, Matrix<Scalar>::Constant(1, 1, v), requires_grad);
  }
  static Tensor from_values(Shape shape, const std::vector<Scalar>& values, bool requires_grad = false) {
    if (static_cast<Index>(values.size()) != numel(shape))
      throw DimensionError("data of size " + std::to_string(values.size()) + " does not fill shape " +
                           to_string(shape));
    auto [r, c] = matrix_view(shape);
    return Tensor(std::move(shape), Eigen::Map<const Matrix<Scalar>>(values.data(), r, c), requires_grad);
  }
  static Tensor from_matrix(const Matrix<Scalar>& m, bool requires_grad = false) {
    return Tensor(Shape{m.rows(), m.cols()}, m, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const { return node_->shape.at(axis < 0 ? rank() + axis : axis); }
  Index size() const { return node_->value.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }

  const Matrix<Scalar>& value() const { return node_->value; }
  /// In-place access for optimizers and checkpoint loading on leaf tensors.
  Matrix<Scalar>& mutable_value() { return node_->value; }
  Scalar item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return node_->value(0, 0);
  }
  std::vector<Scalar> values() const {
    return std::vector<Scalar>(node_->value.data(), node_->value.data() + node_->value.size());
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (node_->tape) throw ContractError("cannot toggle gradient tracking on a recorded tensor");
    node_->requires_grad = on;
    if (!on) node_->grad.resize(0, 0);
  }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix<Scalar>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

  /// Fresh leaf with a copy of this tensor's value and no tape history.
  Tensor detach() const { return Tensor(shape(), value(), false); }

 private:
  std::shared_ptr<Node> node_;
};

/// Append-only record of differentiable operations. Nodes are appended in
/// creation order, so operands always precede their results.
template <typename Scalar>
class Tape {
 public:
  using Node = detail::Node<Scalar>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() { clear(); }

  static Tape* active() { return active_; }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

  void record(const std::shared_ptr<Node>& node) {
    node->tape = this;
    nodes_.push_back(node);
  }

  void clear() {
    for (auto& n : nodes_) {
      n->tape = nullptr;
      n->backward = nullptr;
    }
    nodes_.clear();
  }

  /// Reverse sweep from a scalar loss. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed on every call.
  void backward(const Tensor<Scalar>& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw ContractError("backward requires a scalar loss, got shape " +
                          (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    if (loss.node()->tape != this) throw ContractError("loss was not produced on this tape");
    for (auto& n : nodes_) n->grad.resize(0, 0);
    loss.node()->grad_buffer()(0, 0) = Scalar(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.grad.size() != 0 && n.backward) n.backward(n.grad);
    }
  }

 private:
  template <typename>
  friend class TapeScope;
  template <typename>
  friend class NoGradScope;
  static inline thread_local Tape* active_ = nullptr;
  std::vector<std::shared_ptr<Node>> nodes_;
};

/// Makes a tape the recording target for the current thread while in scope.
template <typename Scalar>
class TapeScope {
 public:
  explicit TapeScope(Tape<Scalar>& tape) : previous_(Tape<Scalar>::active_) { Tape<Scalar>::active_ = &tape; }
  ~TapeScope() { Tape<Scalar>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Scalar>* previous_;
};

/// Disables recording for the current thread while in scope.
template <typename Scalar>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<Scalar>::active_) { Tape<Scalar>::active_ = nullptr; }
  ~NoGradScope() { Tape<Scalar>::active_ = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<Scalar>* previous_;
};

/// Backward over the thread's active tape.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (!tape) throw ContractError("backward called without an active tape");
  tape->backward(loss);
}

namespace detail {

template <typename Scalar>
void accumulate(const std::shared_ptr<Node<Scalar>>& node, const Matrix<Scalar>& delta) {
  if (!node->requires_grad) return;
  node->grad_buffer() += delta;
}

/// Builds an op result, recording it when a tape is active and any operand
/// tracks gradients. `make_backward` is only invoked when recording.
template <typename Scalar, typename MakeBackward>
Tensor<Scalar> make_result(Shape shape, Matrix<Scalar> value, std::initializer_list<const Tensor<Scalar>*> inputs,
                           MakeBackward&& make_backward) {
  Tensor<Scalar> out(std::move(shape), std::move(value), false);
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (!tape) return out;
  bool track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<Scalar>* t) { return t->requires_grad(); });
  if (!track) return out;
  out.node()->requires_grad = true;
  out.node()->backward = make_backward();
  tape->record(out.node());
  return out;
}

}  // namespace detail

}  // namespace cpt::ad
