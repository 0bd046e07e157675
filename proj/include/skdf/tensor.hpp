#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace skdf::ad {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

/// Immutable dense tensor of 64-bit reals, row-major. A tensor may be a
/// plain constant or a value recorded on a Tape, in which case gradients
/// can be queried after Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return numel(shape_); }
  const std::vector<double>& values() const { return *data_; }
  const std::shared_ptr<const std::vector<double>>& data() const { return data_; }

  /// Value of a one-element tensor.
  double value() const;

  bool recorded() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  bool defined() const { return data_ != nullptr; }

 private:
  friend class Tape;
  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Reverse-mode tape. Nodes are stored in creation order, which is a
/// topological order by construction; backward is a single reverse sweep
/// that visits each reachable node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a differentiable leaf (a model parameter or watched input).
  Tensor leaf(Shape shape, std::vector<double> values);

  /// Computes gradients of a scalar root w.r.t. every reachable node.
  void backward(const Tensor& root);

  /// Gradient of a recorded tensor after backward; zeros if unreachable.
  std::vector<double> grad(const Tensor& t) const;

  std::size_t num_nodes() const { return nodes_.size(); }

  // Internal: used by the op implementations.
  using BackwardFn = std::function<void(const double* gout, const std::vector<double*>& parent_grads)>;
  Tensor record(Shape shape, std::vector<double> values, std::vector<int> parents, BackwardFn fn);

 private:
  struct Node {
    Shape shape;
    std::vector<int> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool ran_backward_ = false;
};

// ---------------------------------------------------------------------------
// Primitive operations. Elementwise binary ops broadcast only over leading
// size-1 axes: after left-padding the smaller-rank shape with 1s, the axes
// where the shapes differ must form a prefix and be size 1 on one operand.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // 2-D only

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x);     // along the last axis
Tensor layer_norm(const Tensor& x, double eps = 1e-5);  // along the last axis

Tensor sum(const Tensor& x);   // all elements -> scalar
Tensor mean(const Tensor& x);  // all elements -> scalar
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int from, int to);  // [from, to)
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);

/// Constant copy of x; cuts the tape connection.
Tensor detach(const Tensor& x);

/// maximum(minimum(x, hi), lo) with scalar bounds.
Tensor clamp(const Tensor& x, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace skdf::ad
