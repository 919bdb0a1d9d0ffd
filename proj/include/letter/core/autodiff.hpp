#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "letter/core/tensor.hpp"

// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tape records every operation applied to Vars. Parameters enter the tape
// by reference; their gradients accumulate in place into Parameter::grad, so
// several forward/backward passes can be summed before an optimizer step.

namespace letter::ad {

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  // AdamW moments.
  Tensor first_moment;
  Tensor second_moment;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using RowMask = std::vector<std::uint8_t>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every Parameter on the tape.
  /// Throws ContractError when `loss` is not a single element.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return *nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);
  /// Gradient of an intermediate node after backward(); empty if none reached it.
  const Tensor* grad_if_any(std::size_t id) const { return nodes_[id].grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by the operation implementations.
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);

 private:
  struct Node {
    Tensor owned;
    const Tensor* value = nullptr;
    Tensor grad_owned;
    Tensor* grad = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

// Linear algebra
Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T

// Elementwise / broadcasting
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_bias(Var a, Var bias);  // [m,n] + [n]
Var tanh(Var a);
Var gelu(Var a);
Var relu(Var a);
Var stop_gradient(Var a);
/// Forward value of `output`; the incoming gradient is passed unchanged to
/// both `input` and `output`. With output = stop_gradient(q) this is the
/// straight-through estimator z + sg[q - z], evaluated without rounding.
Var straight_through(Var input, Var output);

// Reductions
Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);

// Indexing
Var gather_rows(Var a, std::span<const std::uint32_t> rows);
/// out[i] = a[i, cols[i]]
Var pick(Var a, std::span<const std::uint32_t> cols);

// Softmax family. `mask` (optional, row-major like `a`) marks allowed entries
// with 1; masked entries produce 0 and receive no gradient.
Var softmax_rows(Var a, double tau = 1.0, const RowMask* mask = nullptr);
Var log_softmax_rows(Var a, double tau = 1.0, const RowMask* mask = nullptr);
/// sum_i -log softmax(a_i / tau)[targets[i]]
Var cross_entropy_rows(Var logits, std::span<const std::uint32_t> targets, double tau = 1.0);

/// Each row divided by its Euclidean norm (floored at eps).
Var normalize_rows(Var a, double eps = 1e-12);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Multi-head causal self-attention. qkv is [T, 3D] laid out as [Q | K | V];
/// returns [T, D]. With `segment_starts` (ascending row indices) the rows
/// form independent sequences: a row attends only within its own segment.
Var causal_attention(Var qkv, std::size_t heads, std::span<const std::size_t> segment_starts = {});

/// Plain evaluation of softmax(logits / tau) with max subtraction.
Tensor softmax_with_temperature(const Tensor& logits, double tau);

}  // namespace letter::ad
