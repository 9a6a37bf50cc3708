#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dispa/ad/matrix.hpp"
#include "dispa/util/error.hpp"

namespace dispa::ad {

// An op produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  std::size_t rows() const;
  std::size_t cols() const;
  const Matrix& value() const;
  bool requires_grad() const;
  std::size_t node_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of a scalar loss with respect to every requires_grad leaf.
class Gradients {
 public:
  // Gradient for a leaf; zero-filled if the loss never touched it.
  const Matrix& operator[](const Tensor& leaf) const;
  Matrix take(const Tensor& leaf);

 private:
  friend class Tape;
  std::vector<Matrix> by_node_;
};

class Tape {
 public:
  // Receives the gradient flowing into a node; accumulates into parents.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);

  // Records an op node. `parents` decide whether the node requires grad;
  // `backward` runs only if it does.
  Tensor record(Matrix value, std::initializer_list<Tensor> parents, BackwardFn backward);
  Tensor record(Matrix value, std::span<const Tensor> parents, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node during backward, zero-initialised on first use.
  Matrix& grad_buffer(std::size_t id);

  // Reverse sweep from a 1x1 loss; visits each node once in reverse recording order.
  Gradients backward(const Tensor& loss);

  // Set by ops evaluated exactly at a non-differentiable point (ReLU at 0, clamp boundary).
  void note_nonsmooth() { nonsmooth_ = true; }
  bool hit_nonsmooth() const { return nonsmooth_; }

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    bool leaf = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  bool nonsmooth_ = false;
};

// ---- differentiable ops -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Adds a 1 x n row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double s);
// a scaled by a 1x1 tensor.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor transpose(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor mean_rows(const Tensor& a);  // 1 x cols
Tensor sum(const Tensor& a);        // 1 x 1
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax_rows(const Tensor& a);
// Per-row standardisation (no affine parameters).
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);
Tensor mse(const Tensor& pred, const Tensor& target);

// ---- verification --------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool skipped = false;  // evaluated at a kink; no comparison made
};

using ScalarFunction = std::function<Tensor(Tape&, std::span<const Tensor>)>;

// Compares reverse-mode gradients of `f` at `point` with central differences.
// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Matrix>& point, double eps = 1e-5);

}  // namespace dispa::ad
