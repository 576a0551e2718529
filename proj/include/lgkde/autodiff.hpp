#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "lgkde/matrix.hpp"

namespace lgkde::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives dLoss/dOutput and pushes contributions into the parents through
// Tape::accumulate / Tape::grad_buffer.
using BackwardFn = std::function<void(const Matrix& out_grad, Tape& tape)>;

struct Node {
  Matrix value;
  Matrix grad;  // allocated on first accumulation
  std::vector<std::size_t> parents;
  std::string_view op;
  bool requires_grad = false;
  BackwardFn backward;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so parents
/// always carry smaller ids than their children and the recorded graph is
/// acyclic by construction.
///
/// Gradients accumulate: calling backward twice without zero_grad() sums
/// both passes into the leaves. This is what lets a single embedding feed
/// many kernel terms.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf; receives a gradient.
  Var leaf(Matrix value);
  /// Constant input; never receives a gradient.
  Var constant(Matrix value);
  /// Records a derived node. The node requires a gradient if any parent does.
  Var record(Matrix value, std::span<const Var> parents, std::string_view op,
             BackwardFn backward);

  void backward(Var loss);
  void zero_grad();

  const Matrix& value(Var v) const;
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward pass(es); zeros if nothing reached the node.
  Matrix grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(Var v) const;

  void accumulate(std::size_t id, const Matrix& g);
  /// Zero-initialized gradient storage for in-place accumulation.
  Matrix& grad_buffer(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Piecewise ops (relu masks, argmax choices) fold their branch decisions
  /// in here. Two evaluations with equal signatures took the same branches,
  /// which is what the finite-difference checker uses to skip kinks.
  void note_branch(std::uint64_t value) noexcept;
  std::uint64_t branch_signature() const noexcept { return branch_hash_; }

 private:
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ULL;
};

enum class UnaryOp { exp, relu, square, sqrt };
enum class BinaryOp { add, sub, mul, div };

Var apply(UnaryOp op, Var a);
Var apply(BinaryOp op, Var a, Var b);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var exp(Var a);
// relu'(0) = 0.
Var relu(Var a);
Var square(Var a);
// d sqrt(x)/dx at x = 0 is taken as 0.
Var sqrt(Var a);
Var sum(Var a);
Var transpose(Var a);
// Softmax over every entry of a row or column vector, max-subtracted.
Var softmax(Var logits);
Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> rows);
// Column-wise standardization (x - mean) / sqrt(var + eps) with batch
// statistics; the normalization core of batch norm.
Var standardize_columns(Var a, double eps);

// Plain (tape-free) softmax for reporting mixture weights.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace lgkde::ad
