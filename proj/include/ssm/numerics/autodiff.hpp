#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssm/numerics/param_store.hpp"
#include "ssm/numerics/tensor.hpp"

namespace ssm::num {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape for one forward/backward pass. Nodes are appended in
// evaluation order, so a reverse sweep is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a named parameter; its gradient is reported by gradients().
  Var param(const ParamStore& store, std::string_view name);

  // Appends an op result. Throws NumericError when the value is not finite.
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer for a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  void backward(Var loss);
  // Accumulated gradients keyed like `like`; parameters absent from the
  // tape get zero gradients.
  ParamStore gradients(const ParamStore& like) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    std::string param_name;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// Adds a row vector (1 x m or rank-1 m) to every row of an n x m matrix.
Var add_row(Var a, Var row);
Var matmul(Var a, Var b);
// a * b^T.
Var matmul_nt(Var a, Var b);
// x * W^T + b, with W stored out x in.
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);

Var sigmoid(Var a);
Var relu(Var a);
Var tanh(Var a);
// log(max(a, floor)); gradient is zero where the floor is active.
Var log_floor(Var a, double floor);

// Row-wise softmax with max subtraction. Columns whose mask entry is 0 get
// probability 0 and are excluded from normalisation.
Var softmax_rows(Var a, std::span<const std::uint8_t> column_mask = {});

Var sum(Var a);
// n x m -> n x 1.
Var row_sums(Var a);
// Multiplies row r of `a` by s(r, 0) for an n x 1 column `s`.
Var scale_rows(Var a, Var s);
Var mean_rows(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var row(Var a, std::size_t r);
// Rows of `a` picked by index; repeats allowed (gradients scatter-add).
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var element(Var a, std::size_t r, std::size_t c);
// Per-row normalisation over the feature axis followed by gain and bias.
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
// Value copy with no gradient path.
Var stop_gradient(Var a);

}  // namespace ops

}  // namespace ssm::num
