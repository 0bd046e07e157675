#include "skdf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace skdf::ad {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape must have positive extents, got " + shape_to_string(shape));
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " vs " + shape_to_string(b));
}

struct BroadcastPlan {
  Shape out;
  std::int64_t a_n = 0;
  std::int64_t b_n = 0;
  std::int64_t out_n = 0;
};

// Broadcasting is restricted to leading size-1 axes: after left-padding the
// smaller rank with 1s, all mismatched axes must sit in a prefix where the
// smaller operand has extent 1. The smaller operand then tiles contiguously,
// so indexing reduces to `i % small_n`.
BroadcastPlan plan_broadcast(const char* op, const Shape& sa, const Shape& sb) {
  const int rank = static_cast<int>(std::max(sa.size(), sb.size()));
  Shape pa(static_cast<std::size_t>(rank), 1), pb(static_cast<std::size_t>(rank), 1);
  std::copy(sa.begin(), sa.end(), pa.end() - static_cast<std::ptrdiff_t>(sa.size()));
  std::copy(sb.begin(), sb.end(), pb.end() - static_cast<std::ptrdiff_t>(sb.size()));

  int last_mismatch = -1;
  bool a_small = false, b_small = false;
  for (int i = 0; i < rank; ++i) {
    if (pa[i] == pb[i]) continue;
    if (pa[i] == 1)
      a_small = true;
    else if (pb[i] == 1)
      b_small = true;
    else
      shape_error(op, sa, sb);
    last_mismatch = i;
  }
  if (a_small && b_small) shape_error(op, sa, sb);

  BroadcastPlan plan;
  plan.out.resize(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) plan.out[i] = std::max(pa[i], pb[i]);
  if (last_mismatch >= 0) {
    const Shape& small = a_small ? pa : pb;
    for (int i = 0; i <= last_mismatch; ++i) {
      if (small[i] != 1) shape_error(op, sa, sb);
    }
  }
  plan.a_n = numel(sa);
  plan.b_n = numel(sb);
  plan.out_n = numel(plan.out);
  return plan;
}

Tape* common_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.recorded() && b.recorded() && a.tape() != b.tape())
    throw std::invalid_argument(std::string(op) + ": operands recorded on different tapes");
  return a.recorded() ? a.tape() : b.tape();
}

Tensor make_result(Tape* tape, Shape shape, std::vector<double> values, std::vector<int> parents,
                   Tape::BackwardFn fn) {
  if (tape == nullptr) return Tensor::constant(std::move(shape), std::move(values));
  return tape->record(std::move(shape), std::move(values), std::move(parents), std::move(fn));
}

using DataPtr = std::shared_ptr<const std::vector<double>>;

// Tiled elementwise apply: the smaller operand repeats as contiguous
// blocks, so the hot full-size case runs without index arithmetic. At
// most one operand can be smaller than the output (prefix rule).
template <typename F>
void for_each_broadcast(std::int64_t out_n, std::int64_t a_n, std::int64_t b_n, F f) {
  if (a_n == out_n && b_n == out_n) {
    for (std::int64_t i = 0; i < out_n; ++i) f(i, i, i);
  } else if (a_n == out_n) {
    for (std::int64_t t = 0, i = 0; t < out_n / b_n; ++t)
      for (std::int64_t j = 0; j < b_n; ++j, ++i) f(i, i, j);
  } else {
    for (std::int64_t t = 0, i = 0; t < out_n / a_n; ++t)
      for (std::int64_t j = 0; j < a_n; ++j, ++i) f(i, j, i);
  }
}

// Generic elementwise binary op with leading-axis broadcasting.
// da/db compute the local gradient contribution for one element.
template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  if (!a.defined() || !b.defined()) throw std::invalid_argument(std::string(op) + ": undefined operand");
  BroadcastPlan plan = plan_broadcast(op, a.shape(), b.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(plan.out_n));
  for_each_broadcast(plan.out_n, plan.a_n, plan.b_n, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
    out[static_cast<std::size_t>(i)] = fwd(av[static_cast<std::size_t>(ia)], bv[static_cast<std::size_t>(ib)]);
  });

  Tape* tape = common_tape(op, a, b);
  if (tape == nullptr) return Tensor::constant(std::move(plan.out), std::move(out));

  std::vector<int> parents;
  const bool a_rec = a.recorded();
  const bool b_rec = b.recorded();
  if (a_rec) parents.push_back(a.node());
  if (b_rec) parents.push_back(b.node());
  DataPtr ad = a.data(), bd = b.data();
  const std::int64_t an = plan.a_n, bn = plan.b_n, on = plan.out_n;
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    int slot = 0;
    const auto& ar = *ad;
    const auto& br = *bd;
    if (a_rec) {
      double* ga = pg[static_cast<std::size_t>(slot++)];
      for_each_broadcast(on, an, bn, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        ga[ia] += da(g[i], ar[static_cast<std::size_t>(ia)], br[static_cast<std::size_t>(ib)]);
      });
    }
    if (b_rec) {
      double* gb = pg[static_cast<std::size_t>(slot)];
      for_each_broadcast(on, an, bn, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        gb[ib] += db(g[i], ar[static_cast<std::size_t>(ia)], br[static_cast<std::size_t>(ib)]);
      });
    }
  };
  return make_result(tape, std::move(plan.out), std::move(out), std::move(parents), std::move(fn));
}

// Generic elementwise unary op. dx computes the local derivative given
// (gout, x, y) for one element.
template <typename Fwd, typename Dx>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Dx dx) {
  if (!x.defined()) throw std::invalid_argument(std::string(op) + ": undefined operand");
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);

  if (!x.recorded()) return Tensor::constant(x.shape(), std::move(out));
  DataPtr xd = x.data();
  auto yd = std::make_shared<std::vector<double>>(out);
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    const auto& xr = *xd;
    const auto& yr = *yd;
    for (std::size_t i = 0; i < xr.size(); ++i) gx[i] += dx(g[i], xr[i], yr[i]);
  };
  return x.tape()->record(x.shape(), std::move(out), {x.node()}, std::move(fn));
}

// C[ar x bc] += A[ar x ac] * B[ac x bc]
void mm_nn(const double* __restrict A, int ar, int ac, const double* __restrict B, int bc, double* __restrict C) {
  for (int i = 0; i < ar; ++i) {
    const double* arow = A + static_cast<std::size_t>(i) * ac;
    double* crow = C + static_cast<std::size_t>(i) * bc;
    for (int p = 0; p < ac; ++p) {
      const double aval = arow[p];
      const double* brow = B + static_cast<std::size_t>(p) * bc;
      for (int j = 0; j < bc; ++j) crow[j] += aval * brow[j];
    }
  }
}

// C[ar x br] += A[ar x ac] * B[br x ac]^T
void mm_nt(const double* __restrict A, int ar, int ac, const double* __restrict B, int br, double* __restrict C) {
  for (int i = 0; i < ar; ++i) {
    const double* arow = A + static_cast<std::size_t>(i) * ac;
    double* crow = C + static_cast<std::size_t>(i) * br;
    for (int j = 0; j < br; ++j) {
      const double* brow = B + static_cast<std::size_t>(j) * ac;
      double acc = 0.0;
      for (int p = 0; p < ac; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[ac x bc] += A[ar x ac]^T * B[ar x bc]
void mm_tn(const double* __restrict A, int ar, int ac, const double* __restrict B, int bc, double* __restrict C) {
  for (int p = 0; p < ar; ++p) {
    const double* arow = A + static_cast<std::size_t>(p) * ac;
    const double* brow = B + static_cast<std::size_t>(p) * bc;
    for (int i = 0; i < ac; ++i) {
      const double aval = arow[i];
      double* crow = C + static_cast<std::size_t>(i) * bc;
      for (int j = 0; j < bc; ++j) crow[j] += aval * brow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                                shape_to_string(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::zeros(Shape shape) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

double Tensor::value() const {
  if (!defined() || size() != 1) throw std::invalid_argument("Tensor::value: tensor is not a single element");
  return (*data_)[0];
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  return record(std::move(shape), std::move(values), {}, nullptr);
}

Tensor Tape::record(Shape shape, std::vector<double> values, std::vector<int> parents, BackwardFn fn) {
  check_shape(shape);
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("tape record: data length does not match shape " + shape_to_string(shape));
  for (int p : parents) {
    if (p < 0 || p >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("tape record: parent index out of range");
  }
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::move(shape), std::move(parents), std::move(fn)});
  return t;
}

void Tape::backward(const Tensor& root) {
  if (!root.recorded() || root.tape() != this)
    throw std::invalid_argument("backward: root is not recorded on this tape");
  if (root.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got shape " + shape_to_string(root.shape()));

  const int root_id = root.node();
  std::vector<char> reachable(nodes_.size(), 0);
  std::vector<int> stack{root_id};
  reachable[static_cast<std::size_t>(root_id)] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int p : nodes_[static_cast<std::size_t>(id)].parents) {
      if (!reachable[static_cast<std::size_t>(p)]) {
        reachable[static_cast<std::size_t>(p)] = 1;
        stack.push_back(p);
      }
    }
  }

  grads_.assign(nodes_.size(), {});
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (reachable[id]) grads_[id].assign(static_cast<std::size_t>(numel(nodes_[id].shape)), 0.0);
  }
  grads_[static_cast<std::size_t>(root_id)][0] = 1.0;

  std::vector<double*> parent_grads;
  for (int id = root_id; id >= 0; --id) {
    const auto uid = static_cast<std::size_t>(id);
    if (!reachable[uid] || !nodes_[uid].backward) continue;
    parent_grads.clear();
    for (int p : nodes_[uid].parents) parent_grads.push_back(grads_[static_cast<std::size_t>(p)].data());
    nodes_[uid].backward(grads_[uid].data(), parent_grads);
  }
  ran_backward_ = true;
}

std::vector<double> Tape::grad(const Tensor& t) const {
  if (!t.recorded() || t.tape() != this)
    throw std::invalid_argument("grad: tensor is not recorded on this tape");
  if (!ran_backward_) throw std::logic_error("grad: backward has not been run");
  const auto& g = grads_[static_cast<std::size_t>(t.node())];
  if (g.empty()) return std::vector<double>(static_cast<std::size_t>(t.size()), 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; }, [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; }, [](double g, double, double) { return -g; });
}

// Ties route the gradient to the first argument.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double g, double x, double y) { return x <= y ? g : 0.0; },
      [](double g, double x, double y) { return y < x ? g : 0.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double g, double x, double y) { return x >= y ? g : 0.0; },
      [](double g, double x, double y) { return y > x ? g : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  auto stable = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary_op(
      "sigmoid", x, stable, [](double g, double, double y) { return g * y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double g, double v, double) { return v > 0.0 ? g : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double g, double v, double) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double g, double v, double) { return g / v; });
}

Tensor pow(const Tensor& x, double exponent) {
  const double c = exponent;
  return unary_op(
      "pow", x, [c](double v) { return std::pow(v, c); },
      [c](double g, double v, double) { return c == 0.0 ? 0.0 : g * c * std::pow(v, c - 1.0); });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  mm_nn(a.values().data(), m, k, b.values().data(), n, out.data());

  Tape* tape = common_tape("matmul", a, b);
  if (tape == nullptr) return Tensor::constant({m, n}, std::move(out));

  std::vector<int> parents;
  const bool a_rec = a.recorded(), b_rec = b.recorded();
  if (a_rec) parents.push_back(a.node());
  if (b_rec) parents.push_back(b.node());
  DataPtr ad = a.data(), bd = b.data();
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    int slot = 0;
    if (a_rec) mm_nt(g, m, n, bd->data(), k, pg[static_cast<std::size_t>(slot++)]);
    if (b_rec) mm_tn(ad->data(), m, k, g, n, pg[static_cast<std::size_t>(slot)]);
  };
  return make_result(tape, {m, n}, std::move(out), std::move(parents), std::move(fn));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: expected rank-2 tensor, got " + shape_to_string(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  if (!a.recorded()) return Tensor::constant({n, m}, std::move(out));
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    double* ga = pg[0];
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  };
  return a.tape()->record({n, m}, std::move(out), {a.node()}, std::move(fn));
}

// ---------------------------------------------------------------------------
// Row-structured ops (softmax / layer_norm act on the last axis)
// ---------------------------------------------------------------------------

namespace {

std::int64_t last_axis_rows(const Tensor& x, int& width) {
  width = x.dim(x.rank() - 1);
  return x.size() / width;
}

}  // namespace

Tensor softmax(const Tensor& x) {
  if (!x.defined() || x.rank() < 1) throw std::invalid_argument("softmax: undefined or rank-0 operand");
  int w = 0;
  const std::int64_t rows = last_axis_rows(x, w);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * w;
    double* orow = out.data() + r * w;
    double mx = row[0];
    for (int j = 1; j < w; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < w; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int j = 0; j < w; ++j) orow[j] /= denom;
  }
  if (!x.recorded()) return Tensor::constant(x.shape(), std::move(out));
  auto yd = std::make_shared<std::vector<double>>(out);
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    const auto& y = *yd;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * w;
      const double* gr = g + r * w;
      double dot = 0.0;
      for (int j = 0; j < w; ++j) dot += gr[j] * yr[j];
      double* gxr = gx + r * w;
      for (int j = 0; j < w; ++j) gxr[j] += yr[j] * (gr[j] - dot);
    }
  };
  return x.tape()->record(x.shape(), std::move(out), {x.node()}, std::move(fn));
}

Tensor layer_norm(const Tensor& x, double eps) {
  if (!x.defined() || x.rank() < 1) throw std::invalid_argument("layer_norm: undefined or rank-0 operand");
  int w = 0;
  const std::int64_t rows = last_axis_rows(x, w);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * w;
    double mu = 0.0;
    for (int j = 0; j < w; ++j) mu += row[j];
    mu /= w;
    double var = 0.0;
    for (int j = 0; j < w; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= w;
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = s;
    double* orow = out.data() + r * w;
    for (int j = 0; j < w; ++j) orow[j] = (row[j] - mu) * s;
  }
  if (!x.recorded()) return Tensor::constant(x.shape(), std::move(out));
  auto yd = std::make_shared<std::vector<double>>(out);
  auto sd = std::make_shared<std::vector<double>>(std::move(inv_std));
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    const auto& y = *yd;
    const auto& s = *sd;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * w;
      const double* gr = g + r * w;
      double mean_g = 0.0, mean_gy = 0.0;
      for (int j = 0; j < w; ++j) {
        mean_g += gr[j];
        mean_gy += gr[j] * yr[j];
      }
      mean_g /= w;
      mean_gy /= w;
      double* gxr = gx + r * w;
      const double sr = s[static_cast<std::size_t>(r)];
      for (int j = 0; j < w; ++j) gxr[j] += sr * (gr[j] - mean_g - yr[j] * mean_gy);
    }
  };
  return x.tape()->record(x.shape(), std::move(out), {x.node()}, std::move(fn));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  if (!x.defined()) throw std::invalid_argument("sum: undefined operand");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  if (!x.recorded()) return Tensor::scalar(acc);
  const std::int64_t n = x.size();
  auto fn = [n](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    for (std::int64_t i = 0; i < n; ++i) gx[i] += g[0];
  };
  return x.tape()->record({1}, {acc}, {x.node()}, std::move(fn));
}

Tensor mean(const Tensor& x) {
  if (!x.defined()) throw std::invalid_argument("mean: undefined operand");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const std::int64_t n = x.size();
  acc /= static_cast<double>(n);
  if (!x.recorded()) return Tensor::scalar(acc);
  auto fn = [n](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    const double share = g[0] / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) gx[i] += share;
  };
  return x.tape()->record({1}, {acc}, {x.node()}, std::move(fn));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

namespace {

void axis_strides(const Shape& shape, int axis, std::int64_t& outer, std::int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty part list");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = parts[0].shape();
  int total_axis = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (p.rank() != rank) shape_error("concat", parts[0].shape(), p.shape());
    for (int i = 0; i < rank; ++i) {
      if (i != axis && p.dim(i) != parts[0].dim(i)) shape_error("concat", parts[0].shape(), p.shape());
    }
    total_axis += p.dim(axis);
    if (p.recorded()) {
      if (tape != nullptr && tape != p.tape()) throw std::invalid_argument("concat: operands on different tapes");
      tape = p.tape();
    }
  }
  out_shape[static_cast<std::size_t>(axis)] = total_axis;

  std::int64_t outer = 0, inner = 0;
  axis_strides(out_shape, axis, outer, inner);
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<int> lens;
  lens.reserve(parts.size());
  for (const auto& p : parts) lens.push_back(p.dim(axis));
  {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& pv = parts[k].values();
      const std::int64_t block = lens[k] * inner;
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(pv.data() + o * block, block, out.data() + o * (static_cast<std::int64_t>(total_axis) * inner) + offset);
      }
      offset += block;
    }
  }
  if (tape == nullptr) return Tensor::constant(std::move(out_shape), std::move(out));

  std::vector<int> parents;
  std::vector<int> slot_of_part(parts.size(), -1);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].recorded()) {
      slot_of_part[k] = static_cast<int>(parents.size());
      parents.push_back(parts[k].node());
    }
  }
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      const std::int64_t block = static_cast<std::int64_t>(lens[k]) * inner;
      if (slot_of_part[k] >= 0) {
        double* gp = pg[static_cast<std::size_t>(slot_of_part[k])];
        for (std::int64_t o = 0; o < outer; ++o) {
          const double* src = g + o * (static_cast<std::int64_t>(total_axis) * inner) + offset;
          double* dst = gp + o * block;
          for (std::int64_t t = 0; t < block; ++t) dst[t] += src[t];
        }
      }
      offset += block;
    }
  };
  return tape->record(std::move(out_shape), std::move(out), std::move(parents), std::move(fn));
}

Tensor slice(const Tensor& x, int axis, int from, int to) {
  if (!x.defined()) throw std::invalid_argument("slice: undefined operand");
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("slice: axis out of range");
  const int extent = x.dim(axis);
  if (from < 0 || to > extent || from >= to)
    throw std::invalid_argument("slice: invalid range [" + std::to_string(from) + ", " + std::to_string(to) +
                                ") for axis extent " + std::to_string(extent));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = to - from;
  std::int64_t outer = 0, inner = 0;
  axis_strides(x.shape(), axis, outer, inner);
  const std::int64_t in_block = static_cast<std::int64_t>(extent) * inner;
  const std::int64_t out_block = static_cast<std::int64_t>(to - from) * inner;
  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(outer * out_block));
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(xv.data() + o * in_block + from * inner, out_block, out.data() + o * out_block);
  if (!x.recorded()) return Tensor::constant(std::move(out_shape), std::move(out));
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = g + o * out_block;
      double* dst = gx + o * in_block + from * inner;
      for (std::int64_t t = 0; t < out_block; ++t) dst[t] += src[t];
    }
  };
  return x.tape()->record(std::move(out_shape), std::move(out), {x.node()}, std::move(fn));
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
  if (!x.defined() || x.rank() < 1) throw std::invalid_argument("gather_rows: undefined or rank-0 operand");
  const int rows = x.dim(0);
  const std::int64_t inner = x.size() / rows;
  for (int idx : indices) {
    if (idx < 0 || idx >= rows)
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) + " out of range for " +
                                  std::to_string(rows) + " rows");
  }
  if (indices.empty()) throw std::invalid_argument("gather_rows: empty index list");
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<int>(indices.size());
  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(inner) * indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy_n(xv.data() + static_cast<std::int64_t>(indices[k]) * inner, inner,
                out.data() + static_cast<std::int64_t>(k) * inner);
  if (!x.recorded()) return Tensor::constant(std::move(out_shape), std::move(out));
  auto idx = indices;
  auto fn = [=](const double* g, const std::vector<double*>& pg) {
    double* gx = pg[0];
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double* src = g + static_cast<std::int64_t>(k) * inner;
      double* dst = gx + static_cast<std::int64_t>(idx[k]) * inner;
      for (std::int64_t t = 0; t < inner; ++t) dst[t] += src[t];
    }
  };
  return x.tape()->record(std::move(out_shape), std::move(out), {x.node()}, std::move(fn));
}

Tensor detach(const Tensor& x) {
  if (!x.defined()) throw std::invalid_argument("detach: undefined operand");
  return Tensor::constant(x.shape(), x.values());
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return maximum(minimum(x, Tensor::scalar(hi)), Tensor::scalar(lo));
}

}  // namespace skdf::ad
