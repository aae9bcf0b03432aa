#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdr/array.hpp"
#include "pdr/errors.hpp"

namespace pdr::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; invalidated by Tape::reset().
class Var {
 public:
  Var() = default;
  Var(Tape* t, std::int32_t i) : tape_(t), idx_(i) {}
  const Array& value() const;
  // Gradient accumulated by the last backward() call; zeros if the node was
  // not reached from the root.
  const Array& grad() const;
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return idx_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::int32_t idx_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Const,
  Add,
  Sub,
  Mul,
  MatVec,
  MatMul,
  Transpose,
  Relu,
  Abs,
  Sqrt,
  Exp,
  Log,
  Sum,
  Mean,
  Square,
  Scale,
  Gather,      // elements of a vector or rows of a matrix
  GatherCols,  // columns of a matrix
  Concat,      // join two vectors
  StackRows,   // matrices {k_i, n} -> {sum k_i, n}
  StackCols,   // vectors {d} or one-column matrices -> {d, n}
  PairSqDist,  // {d,n} x {d,m} -> {n,m} of squared column distances
  RbfKsum,     // elementwise sum_k exp(-x / (2 h_k^2))
  MatchedSqCost,  // (1/m) sum_s || pred(:, cols[s]) - ref(:, s) ||^2
};

// Reverse-mode tape over dense arrays. Nodes are appended in topological
// order; backward() sweeps once from the root and accumulates gradients
// additively across fan-out. Purely sequential, so replays are bit-identical.
class Tape {
 public:
  Var leaf(Array v);
  Var constant(Array v);
  Var constant_scalar(double v) { return constant(Array::scalar(v)); }

  // Root must be rank 0. Clears gradients from any previous backward pass.
  void backward(const Var& root);

  void reset();
  std::size_t size() const { return nodes_.size(); }

  const Array& value(const Var& v) const { return nodes_[v.index()].value; }
  const Array& grad(const Var& v) const;

  // Node construction; used by the op builders below.
  Var push(Op op, Array value, std::int32_t a, std::int32_t b, bool needs_grad,
           double scalar = 0.0, std::vector<std::int32_t> aux = {},
           std::vector<double> payload = {});
  bool needs_grad_of(std::int32_t i) const { return nodes_[i].needs_grad; }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::int32_t a = -1, b = -1;
    double scalar = 0.0;
    bool needs_grad = false;
    bool grad_live = false;
    Array value;
    Array grad;
    std::vector<std::int32_t> aux;   // gather indices / stack operands
    std::vector<double> payload;     // rbf bandwidths / matched-cost reference
  };

  Array& ensure_grad(std::int32_t i);

  std::vector<Node> nodes_;
  mutable std::vector<Array> zero_cache_;
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var matvec(const Var& w, const Var& x);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var relu(const Var& a);
Var abs(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var square(const Var& a);
Var scale(const Var& a, double c);
Var gather(const Var& a, const std::vector<int>& idx);
Var gather_cols(const Var& a, const std::vector<int>& idx);
Var concat(const Var& a, const Var& b);
Var stack_rows(std::span<const Var> parts);
Var stack_cols(std::span<const Var> parts);
// out(i, j) = || a(:, i) - b(:, j) ||^2; a and b may be the same node
Var pair_sqdist(const Var& a, const Var& b);
// kernel sum over squared distances; bands are the bandwidths h_k
Var rbf_ksum(const Var& sqdist, const std::vector<double>& bands);
// pred: {d, n} with points as columns; ref: {d, m} fixed points; cols[s] is
// the pred column matched to ref point s. Value is the mean squared matched
// distance, the building block of the transport losses.
Var matched_sq_cost(const Var& pred, const std::vector<int>& cols, const Array& ref);

}  // namespace pdr::ad
