#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "infogan/error.hpp"
#include "infogan/tensor.hpp"

namespace infogan {

// Fixed operation catalogue. Backward rules are selected by this id.
enum class Op {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scale,
  relu,
  leaky_relu,
  tanh,
  sigmoid,
  exp,
  log,
  softplus,
  clamp,
  softmax,
  log_softmax,
  reduce_sum,
  reduce_mean,
  reshape,
  concat,
  batchnorm_train,
  batchnorm_eval,
  gaussian_reparam,
};

inline constexpr std::array<std::pair<Op, std::string_view>, 23> kOpNames{{
    {Op::leaf, "leaf"},
    {Op::matmul, "matmul"},
    {Op::add, "add"},
    {Op::sub, "sub"},
    {Op::mul, "mul"},
    {Op::scale, "scale"},
    {Op::relu, "relu"},
    {Op::leaky_relu, "lrelu"},
    {Op::tanh, "tanh"},
    {Op::sigmoid, "sigmoid"},
    {Op::exp, "exp"},
    {Op::log, "log"},
    {Op::softplus, "softplus"},
    {Op::clamp, "clamp"},
    {Op::softmax, "softmax"},
    {Op::log_softmax, "log_softmax"},
    {Op::reduce_sum, "reduce_sum"},
    {Op::reduce_mean, "reduce_mean"},
    {Op::reshape, "reshape"},
    {Op::concat, "concat"},
    {Op::batchnorm_train, "batchnorm_train"},
    {Op::batchnorm_eval, "batchnorm_eval"},
    {Op::gaussian_reparam, "gaussian_reparam"},
}};

inline std::string_view op_name(Op op) {
  for (const auto& [id, name] : kOpNames) {
    if (id == op) return name;
  }
  return "?";
}

inline std::optional<Op> op_from_name(std::string_view name) {
  for (const auto& [id, n] : kOpNames) {
    if (n == name) return id;
  }
  return std::nullopt;
}

// Per-op constants. Only the fields relevant to an op are read.
struct Attrs {
  double rate = 0.1;     // lrelu
  double factor = 1.0;   // scale
  double lo = 0.0;       // clamp
  double hi = 0.0;       // clamp
  int axis = -1;         // reduce: -1 = all, 1 = per row; concat axis
  Shape shape;           // reshape target
  double eps = 1e-5;     // batchnorm
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Tape* tape = nullptr;
  std::size_t id = npos;

  bool valid() const { return tape != nullptr && id != npos; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<std::optional<Tensor>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  // Zero tensor of the node's shape when no path reached it.
  Tensor operator[](Var v) const {
    if (v.id < grads_.size() && grads_[v.id]) return *grads_[v.id];
    return Tensor(shapes_.at(v.id), 0.0);
  }

  bool reached(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }

 private:
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Shape> shapes_;
};

namespace detail {

[[noreturn]] inline void shape_fail(Op op, std::span<const Tensor* const> inputs, std::string_view what = {}) {
  std::string msg(op_name(op));
  msg += ": incompatible shapes";
  for (const Tensor* t : inputs) msg += " " + shape_string(t->shape());
  if (!what.empty()) {
    msg += " (";
    msg += what;
    msg += ")";
  }
  throw StructuralError(msg);
}

// Same shape, or a length-F vector broadcast across a B x F batch.
inline bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() == b.shape()) return false;
  const std::size_t f = a.dim(1);
  return (b.rank() == 1 && b.dim(0) == f) || (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == f);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Sums a B x F gradient down to the shape of a broadcast vector operand.
inline Tensor sum_rows(const Tensor& g, const Shape& target) {
  Tensor out(target, 0.0);
  const std::size_t f = g.cols();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < f; ++c) out[c] += g[r * f + c];
  }
  return out;
}

}  // namespace detail

/// Records operations and replays them backwards.
///
/// Nodes are appended in execution order, so inputs always precede their
/// consumers. A Var keeps a raw pointer to its tape; tapes are therefore
/// pinned in memory (neither copyable nor movable).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false) {
    Node node;
    node.op = Op::leaf;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    return push(std::move(node));
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var parameter(Tensor value) { return leaf(std::move(value), true); }

  // Generic entry point; the named helpers in `ops` forward here.
  Var apply(Op op, std::span<const Var> inputs, const Attrs& attrs = {}) {
    if (op == Op::leaf) throw UsageError("apply: use leaf() to create leaves");
    Node node;
    node.op = op;
    node.attrs = attrs;
    std::vector<const Tensor*> in;
    in.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (v.tape != this || v.id >= nodes_.size()) {
        throw UsageError(std::string(op_name(op)) + ": input belongs to a different tape");
      }
      node.inputs.push_back(v.id);
      node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
      in.push_back(&nodes_[v.id].value);
    }
    node.value = forward(op, in, attrs, node.saved);
    return push(std::move(node));
  }

  Var apply(Op op, std::initializer_list<Var> inputs, const Attrs& attrs = {}) {
    return apply(op, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::span<const std::size_t> inputs(Var v) const { return nodes_.at(v.id).inputs; }
  // Auxiliary forward results (batchnorm: per-feature mean then variance).
  std::span<const double> saved(Var v) const { return nodes_.at(v.id).saved; }

  std::size_t size() const { return nodes_.size(); }

  std::size_t count(Op op) const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
  }

  /// Reverse sweep from a single-element root.
  ///
  /// When `wrt` is empty, gradients flow to every leaf created with
  /// requires_grad. Otherwise only nodes with a path to a `wrt` leaf are
  /// visited, which prunes e.g. the generator subgraph when only the
  /// discriminator needs gradients.
  Gradients backward(Var root, std::span<const Var> wrt = {}) const {
    if (root.tape != this || root.id >= nodes_.size()) throw UsageError("backward: root not on this tape");
    if (nodes_[root.id].value.size() != 1) {
      throw UsageError("backward: root must be scalar, got shape " + shape_string(nodes_[root.id].value.shape()));
    }
    const std::size_t n = root.id + 1;
    std::vector<char> reach(n, 0);
    std::vector<char> target(n, 0);
    if (wrt.empty()) {
      for (std::size_t i = 0; i < n; ++i) target[i] = nodes_[i].op == Op::leaf && nodes_[i].requires_grad;
    } else {
      for (const Var& v : wrt) {
        if (v.tape != this) throw UsageError("backward: wrt variable from a different tape");
        if (v.id < n) target[v.id] = 1;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      reach[i] = target[i];
      for (std::size_t in : nodes_[i].inputs) reach[i] = reach[i] || reach[in];
    }

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    if (reach[root.id]) grads[root.id] = Tensor(nodes_[root.id].value.shape(), 1.0);
    for (std::size_t i = n; i-- > 0;) {
      const Node& node = nodes_[i];
      if (!reach[i] || !grads[i] || node.op == Op::leaf) continue;
      std::vector<char> need(node.inputs.size());
      for (std::size_t k = 0; k < need.size(); ++k) need[k] = reach[node.inputs[k]];
      std::vector<std::optional<Tensor>> in_grads = backward_node(node, *grads[i], need);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (!need[k] || !in_grads[k]) continue;
        auto& slot = grads[node.inputs[k]];
        if (!slot) {
          slot = std::move(*in_grads[k]);
        } else {
          auto dst = slot->data();
          auto src = in_grads[k]->data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      if (!target[i]) grads[i].reset();
    }
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (const Node& node : nodes_) shapes.push_back(node.value.shape());
    return Gradients(std::move(grads), std::move(shapes));
  }

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Attrs attrs;
    Tensor value;
    std::vector<double> saved;
    bool requires_grad = false;
  };

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& in(const Node& node, std::size_t k) const { return nodes_[node.inputs[k]].value; }

  static void expect_arity(Op op, std::span<const Tensor* const> in, std::size_t n) {
    if (in.size() != n) {
      throw StructuralError(std::string(op_name(op)) + ": expected " + std::to_string(n) + " inputs, got " +
                            std::to_string(in.size()));
    }
  }

  template <class F>
  static Tensor map(const Tensor& x, F f) {
    Tensor out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
  }

  template <class F>
  static Tensor zip(Op op, std::span<const Tensor* const> in, F f) {
    expect_arity(op, in, 2);
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    Tensor out(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto po = out.data();
    if (a.shape() == b.shape()) {
      for (std::size_t i = 0; i < pa.size(); ++i) po[i] = f(pa[i], pb[i]);
    } else if (detail::is_row_broadcast(a, b)) {
      const std::size_t f_dim = a.dim(1);
      for (std::size_t i = 0; i < pa.size(); ++i) po[i] = f(pa[i], pb[i % f_dim]);
    } else {
      detail::shape_fail(op, in);
    }
    return out;
  }

  static Tensor forward(Op op, std::span<const Tensor* const> in, const Attrs& attrs, std::vector<double>& saved) {
    switch (op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        expect_arity(op, in, 2);
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) detail::shape_fail(op, in);
        const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
        Tensor out({rows, cols}, 0.0);
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        double* po = out.data().data();
        for (std::size_t i = 0; i < rows; ++i) {
          double* orow = po + i * cols;
          for (std::size_t k = 0; k < inner; ++k) {
            const double aik = pa[i * inner + k];
            const double* brow = pb + k * cols;
            for (std::size_t j = 0; j < cols; ++j) orow[j] += aik * brow[j];
          }
        }
        return out;
      }
      case Op::add:
        return zip(op, in, [](double x, double y) { return x + y; });
      case Op::sub:
        return zip(op, in, [](double x, double y) { return x - y; });
      case Op::mul:
        return zip(op, in, [](double x, double y) { return x * y; });
      case Op::scale: {
        expect_arity(op, in, 1);
        const double k = attrs.factor;
        return map(*in[0], [k](double x) { return k * x; });
      }
      case Op::relu:
        expect_arity(op, in, 1);
        return map(*in[0], [](double x) { return x > 0 ? x : 0.0; });
      case Op::leaky_relu: {
        expect_arity(op, in, 1);
        const double rate = attrs.rate;
        return map(*in[0], [rate](double x) { return x > 0 ? x : rate * x; });
      }
      case Op::tanh:
        expect_arity(op, in, 1);
        return map(*in[0], [](double x) { return std::tanh(x); });
      case Op::sigmoid:
        expect_arity(op, in, 1);
        return map(*in[0], detail::sigmoid);
      case Op::exp: {
        expect_arity(op, in, 1);
        Tensor out = map(*in[0], [](double x) { return std::exp(x); });
        for (std::size_t i = 0; i < out.size(); ++i) {
          if (!std::isfinite(out[i])) {
            throw DomainError("exp: overflow for input " + std::to_string((*in[0])[i]) + " at index " +
                              std::to_string(i));
          }
        }
        return out;
      }
      case Op::log: {
        expect_arity(op, in, 1);
        const Tensor& x = *in[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (!(x[i] > 0)) {
            throw DomainError("log: non-positive input " + std::to_string(x[i]) + " at index " + std::to_string(i));
          }
        }
        return map(x, [](double v) { return std::log(v); });
      }
      case Op::softplus:
        expect_arity(op, in, 1);
        return map(*in[0], detail::softplus);
      case Op::clamp: {
        expect_arity(op, in, 1);
        if (!(attrs.lo < attrs.hi)) throw UsageError("clamp: lo must be below hi");
        const double lo = attrs.lo, hi = attrs.hi;
        return map(*in[0], [lo, hi](double x) { return std::clamp(x, lo, hi); });
      }
      case Op::softmax:
      case Op::log_softmax: {
        expect_arity(op, in, 1);
        const Tensor& x = *in[0];
        const std::size_t width = x.shape().back();
        const std::size_t rows = x.size() / width;
        Tensor out(x.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = x.data().data() + r * width;
          double* yr = out.data().data() + r * width;
          const double mx = *std::max_element(xr, xr + width);
          double total = 0.0;
          for (std::size_t j = 0; j < width; ++j) total += std::exp(xr[j] - mx);
          if (op == Op::softmax) {
            for (std::size_t j = 0; j < width; ++j) yr[j] = std::exp(xr[j] - mx) / total;
          } else {
            const double log_total = std::log(total);
            for (std::size_t j = 0; j < width; ++j) yr[j] = xr[j] - mx - log_total;
          }
        }
        return out;
      }
      case Op::reduce_sum:
      case Op::reduce_mean: {
        expect_arity(op, in, 1);
        const Tensor& x = *in[0];
        if (attrs.axis == -1) {
          double total = 0.0;
          for (double v : x.data()) total += v;
          if (op == Op::reduce_mean) total /= static_cast<double>(x.size());
          return Tensor::scalar(total);
        }
        if (attrs.axis != 1 || x.rank() != 2) detail::shape_fail(op, in, "axis must be -1, or 1 on a matrix");
        const std::size_t rows = x.dim(0), cols = x.dim(1);
        Tensor out({rows, 1}, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          double total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) total += x[r * cols + c];
          out[r] = op == Op::reduce_mean ? total / static_cast<double>(cols) : total;
        }
        return out;
      }
      case Op::reshape: {
        expect_arity(op, in, 1);
        if (attrs.shape.empty() || shape_size(attrs.shape) != in[0]->size()) {
          detail::shape_fail(op, in, "target " + shape_string(attrs.shape));
        }
        Tensor out = *in[0];
        out.reshape_inplace(attrs.shape);
        return out;
      }
      case Op::concat: {
        if (in.empty()) throw StructuralError("concat: no inputs");
        const std::size_t rank = in[0]->rank();
        if (attrs.axis < 0 || static_cast<std::size_t>(attrs.axis) >= rank) detail::shape_fail(op, in, "bad axis");
        const auto axis = static_cast<std::size_t>(attrs.axis);
        Shape out_shape = in[0]->shape();
        out_shape[axis] = 0;
        for (const Tensor* t : in) {
          if (t->rank() != rank) detail::shape_fail(op, in);
          for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && t->dim(d) != in[0]->dim(d)) detail::shape_fail(op, in);
          }
          out_shape[axis] += t->dim(axis);
        }
        std::size_t outer = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
        Tensor out(out_shape);
        double* dst = out.data().data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (const Tensor* t : in) {
            const std::size_t chunk = t->size() / outer;
            const double* src = t->data().data() + o * chunk;
            dst = std::copy(src, src + chunk, dst);
          }
        }
        return out;
      }
      case Op::batchnorm_train:
      case Op::batchnorm_eval: {
        expect_arity(op, in, op == Op::batchnorm_train ? 3 : 5);
        const Tensor& x = *in[0];
        if (x.rank() != 2) detail::shape_fail(op, in, "input must be a matrix");
        const std::size_t rows = x.dim(0), f = x.dim(1);
        for (std::size_t k = 1; k < in.size(); ++k) {
          if (in[k]->size() != f) detail::shape_fail(op, in, "per-feature parameters must have length F");
        }
        std::vector<double> mean(f, 0.0), var(f, 0.0);
        if (op == Op::batchnorm_train) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < f; ++c) mean[c] += x[r * f + c];
          }
          for (double& m : mean) m /= static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < f; ++c) {
              const double d = x[r * f + c] - mean[c];
              var[c] += d * d;
            }
          }
          for (double& v : var) v /= static_cast<double>(rows);
        } else {
          for (std::size_t c = 0; c < f; ++c) {
            mean[c] = (*in[3])[c];
            var[c] = (*in[4])[c];
            if (!(var[c] >= 0)) throw DomainError("batchnorm_eval: negative running variance");
          }
        }
        const Tensor& gamma = *in[1];
        const Tensor& beta = *in[2];
        Tensor out(x.shape());
        for (std::size_t c = 0; c < f; ++c) {
          const double inv_std = 1.0 / std::sqrt(var[c] + attrs.eps);
          for (std::size_t r = 0; r < rows; ++r) {
            out[r * f + c] = gamma[c] * ((x[r * f + c] - mean[c]) * inv_std) + beta[c];
          }
        }
        saved = std::move(mean);
        saved.insert(saved.end(), var.begin(), var.end());
        return out;
      }
      case Op::gaussian_reparam: {
        expect_arity(op, in, 3);
        const Tensor& mu = *in[0];
        const Tensor& log_sigma = *in[1];
        const Tensor& eps = *in[2];
        if (mu.shape() != log_sigma.shape() || mu.shape() != eps.shape()) detail::shape_fail(op, in);
        Tensor out(mu.shape());
        for (std::size_t i = 0; i < mu.size(); ++i) out[i] = mu[i] + std::exp(log_sigma[i]) * eps[i];
        if (!out.all_finite()) throw DomainError("gaussian_reparam: non-finite sample (log_sigma too large)");
        return out;
      }
    }
    throw UsageError("unknown op");
  }

  std::vector<std::optional<Tensor>> backward_node(const Node& node, const Tensor& g,
                                                   const std::vector<char>& need) const {
    std::vector<std::optional<Tensor>> out(node.inputs.size());
    const Tensor& y = node.value;
    auto elementwise = [&](auto deriv) {
      const Tensor& x = in(node, 0);
      Tensor dx(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * deriv(x[i], y[i]);
      out[0] = std::move(dx);
    };

    switch (node.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const Tensor& a = in(node, 0);
        const Tensor& b = in(node, 1);
        const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
        if (need[0]) {
          // dA = g * B^T
          Tensor da({rows, inner}, 0.0);
          for (std::size_t i = 0; i < rows; ++i) {
            const double* grow = g.data().data() + i * cols;
            for (std::size_t k = 0; k < inner; ++k) {
              const double* brow = b.data().data() + k * cols;
              double acc = 0.0;
              for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
              da[i * inner + k] = acc;
            }
          }
          out[0] = std::move(da);
        }
        if (need[1]) {
          // dB = A^T * g
          Tensor db({inner, cols}, 0.0);
          double* pdb = db.data().data();
          for (std::size_t i = 0; i < rows; ++i) {
            const double* grow = g.data().data() + i * cols;
            for (std::size_t k = 0; k < inner; ++k) {
              const double aik = a[i * inner + k];
              double* drow = pdb + k * cols;
              for (std::size_t j = 0; j < cols; ++j) drow[j] += aik * grow[j];
            }
          }
          out[1] = std::move(db);
        }
        break;
      }
      case Op::add:
      case Op::sub:
      case Op::mul: {
        const Tensor& a = in(node, 0);
        const Tensor& b = in(node, 1);
        const bool bcast = a.shape() != b.shape();
        const std::size_t fdim = bcast ? a.dim(1) : 0;
        auto bval = [&](std::size_t i) { return bcast ? b[i % fdim] : b[i]; };
        if (need[0]) {
          Tensor da = g;
          if (node.op == Op::mul) {
            for (std::size_t i = 0; i < da.size(); ++i) da[i] *= bval(i);
          }
          out[0] = std::move(da);
        }
        if (need[1]) {
          Tensor db = g;
          if (node.op == Op::sub) {
            for (double& v : db.data()) v = -v;
          } else if (node.op == Op::mul) {
            for (std::size_t i = 0; i < db.size(); ++i) db[i] *= a[i];
          }
          out[1] = bcast ? detail::sum_rows(db, b.shape()) : std::move(db);
        }
        break;
      }
      case Op::scale: {
        const double k = node.attrs.factor;
        elementwise([k](double, double) { return k; });
        break;
      }
      case Op::relu:
        elementwise([](double x, double) { return x > 0 ? 1.0 : 0.0; });
        break;
      case Op::leaky_relu: {
        const double rate = node.attrs.rate;
        elementwise([rate](double x, double) { return x > 0 ? 1.0 : rate; });
        break;
      }
      case Op::tanh:
        elementwise([](double, double t) { return 1.0 - t * t; });
        break;
      case Op::sigmoid:
        elementwise([](double, double s) { return s * (1.0 - s); });
        break;
      case Op::exp:
        elementwise([](double, double e) { return e; });
        break;
      case Op::log:
        elementwise([](double x, double) { return 1.0 / x; });
        break;
      case Op::softplus:
        elementwise([](double x, double) { return detail::sigmoid(x); });
        break;
      case Op::clamp: {
        const double lo = node.attrs.lo, hi = node.attrs.hi;
        elementwise([lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
        break;
      }
      case Op::softmax:
      case Op::log_softmax: {
        const std::size_t width = y.shape().back();
        const std::size_t rows = y.size() / width;
        Tensor dx(y.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * width;
          if (node.op == Op::softmax) {
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j) dot += g[base + j] * y[base + j];
            for (std::size_t j = 0; j < width; ++j) dx[base + j] = y[base + j] * (g[base + j] - dot);
          } else {
            double gsum = 0.0;
            for (std::size_t j = 0; j < width; ++j) gsum += g[base + j];
            for (std::size_t j = 0; j < width; ++j) dx[base + j] = g[base + j] - std::exp(y[base + j]) * gsum;
          }
        }
        out[0] = std::move(dx);
        break;
      }
      case Op::reduce_sum:
      case Op::reduce_mean: {
        const Tensor& x = in(node, 0);
        Tensor dx(x.shape());
        if (node.attrs.axis == -1) {
          const double v = node.op == Op::reduce_mean ? g[0] / static_cast<double>(x.size()) : g[0];
          for (double& d : dx.data()) d = v;
        } else {
          const std::size_t rows = x.dim(0), cols = x.dim(1);
          const double k = node.op == Op::reduce_mean ? 1.0 / static_cast<double>(cols) : 1.0;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] = g[r] * k;
          }
        }
        out[0] = std::move(dx);
        break;
      }
      case Op::reshape: {
        Tensor dx = g;
        dx.reshape_inplace(in(node, 0).shape());
        out[0] = std::move(dx);
        break;
      }
      case Op::concat: {
        const auto axis = static_cast<std::size_t>(node.attrs.axis);
        std::size_t outer = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= y.dim(d);
        std::vector<Tensor> parts;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) parts.emplace_back(in(node, k).shape());
        const double* src = g.data().data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (Tensor& part : parts) {
            const std::size_t chunk = part.size() / outer;
            std::copy(src, src + chunk, part.data().data() + o * chunk);
            src += chunk;
          }
        }
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (need[k]) out[k] = std::move(parts[k]);
        }
        break;
      }
      case Op::batchnorm_train:
      case Op::batchnorm_eval: {
        const Tensor& x = in(node, 0);
        const Tensor& gamma = in(node, 1);
        const std::size_t rows = x.dim(0), f = x.dim(1);
        const double eps = node.attrs.eps;
        const double n = static_cast<double>(rows);
        Tensor dx(x.shape()), dgamma(gamma.shape(), 0.0), dbeta(gamma.shape(), 0.0);
        Tensor dmean(gamma.shape(), 0.0), dvar(gamma.shape(), 0.0);
        for (std::size_t c = 0; c < f; ++c) {
          const double mean = node.saved[c];
          const double var = node.saved[f + c];
          const double inv_std = 1.0 / std::sqrt(var + eps);
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            const double xhat = (x[r * f + c] - mean) * inv_std;
            sum_g += g[r * f + c];
            sum_gx += g[r * f + c] * xhat;
          }
          dgamma[c] = sum_gx;
          dbeta[c] = sum_g;
          for (std::size_t r = 0; r < rows; ++r) {
            const double xhat = (x[r * f + c] - mean) * inv_std;
            if (node.op == Op::batchnorm_train) {
              dx[r * f + c] = gamma[c] * inv_std / n * (n * g[r * f + c] - sum_g - xhat * sum_gx);
            } else {
              dx[r * f + c] = g[r * f + c] * gamma[c] * inv_std;
            }
          }
          if (node.op == Op::batchnorm_eval) {
            dmean[c] = -gamma[c] * inv_std * sum_g;
            dvar[c] = -0.5 * gamma[c] * inv_std * inv_std * sum_gx;
          }
        }
        out[0] = std::move(dx);
        out[1] = std::move(dgamma);
        out[2] = std::move(dbeta);
        if (node.op == Op::batchnorm_eval) {
          dmean.reshape_inplace(in(node, 3).shape());
          dvar.reshape_inplace(in(node, 4).shape());
          out[3] = std::move(dmean);
          out[4] = std::move(dvar);
        }
        for (std::size_t k = 1; k < 3; ++k) out[k]->reshape_inplace(in(node, k).shape());
        break;
      }
      case Op::gaussian_reparam: {
        const Tensor& log_sigma = in(node, 1);
        const Tensor& eps = in(node, 2);
        Tensor dmu = g, dls(g.shape()), deps(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double sigma = std::exp(log_sigma[i]);
          dls[i] = g[i] * sigma * eps[i];
          deps[i] = g[i] * sigma;
        }
        out[0] = std::move(dmu);
        out[1] = std::move(dls);
        out[2] = std::move(deps);
        break;
      }
    }
    return out;
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const {
  if (!valid()) throw UsageError("var: not bound to a tape");
  return tape->value(*this);
}

// Named wrappers over Tape::apply.
namespace ops {

inline Tape& tape_of(Var a) {
  if (!a.valid()) throw UsageError("op on an unbound var");
  return *a.tape;
}

inline Var matmul(Var a, Var b) { return tape_of(a).apply(Op::matmul, {a, b}); }
inline Var add(Var a, Var b) { return tape_of(a).apply(Op::add, {a, b}); }
inline Var sub(Var a, Var b) { return tape_of(a).apply(Op::sub, {a, b}); }
inline Var mul(Var a, Var b) { return tape_of(a).apply(Op::mul, {a, b}); }

inline Var scale(Var a, double factor) {
  Attrs attrs;
  attrs.factor = factor;
  return tape_of(a).apply(Op::scale, {a}, attrs);
}

inline Var relu(Var a) { return tape_of(a).apply(Op::relu, {a}); }

inline Var leaky_relu(Var a, double rate = 0.1) {
  Attrs attrs;
  attrs.rate = rate;
  return tape_of(a).apply(Op::leaky_relu, {a}, attrs);
}

inline Var tanh(Var a) { return tape_of(a).apply(Op::tanh, {a}); }
inline Var sigmoid(Var a) { return tape_of(a).apply(Op::sigmoid, {a}); }
inline Var exp(Var a) { return tape_of(a).apply(Op::exp, {a}); }
inline Var log(Var a) { return tape_of(a).apply(Op::log, {a}); }
inline Var softplus(Var a) { return tape_of(a).apply(Op::softplus, {a}); }

inline Var clamp(Var a, double lo, double hi) {
  Attrs attrs;
  attrs.lo = lo;
  attrs.hi = hi;
  return tape_of(a).apply(Op::clamp, {a}, attrs);
}

inline Var softmax(Var a) { return tape_of(a).apply(Op::softmax, {a}); }
inline Var log_softmax(Var a) { return tape_of(a).apply(Op::log_softmax, {a}); }

inline Var reduce_sum(Var a, int axis = -1) {
  Attrs attrs;
  attrs.axis = axis;
  return tape_of(a).apply(Op::reduce_sum, {a}, attrs);
}

inline Var reduce_mean(Var a, int axis = -1) {
  Attrs attrs;
  attrs.axis = axis;
  return tape_of(a).apply(Op::reduce_mean, {a}, attrs);
}

inline Var reshape(Var a, Shape shape) {
  Attrs attrs;
  attrs.shape = std::move(shape);
  return tape_of(a).apply(Op::reshape, {a}, attrs);
}

inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw StructuralError("concat: no inputs");
  Attrs attrs;
  attrs.axis = axis;
  return tape_of(parts[0]).apply(Op::concat, parts, attrs);
}

inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

inline Var batchnorm_train(Var x, Var gamma, Var beta, double eps = 1e-5) {
  Attrs attrs;
  attrs.eps = eps;
  return tape_of(x).apply(Op::batchnorm_train, {x, gamma, beta}, attrs);
}

inline Var batchnorm_eval(Var x, Var gamma, Var beta, Var running_mean, Var running_var, double eps = 1e-5) {
  Attrs attrs;
  attrs.eps = eps;
  return tape_of(x).apply(Op::batchnorm_eval, {x, gamma, beta, running_mean, running_var}, attrs);
}

inline Var gaussian_reparam(Var mu, Var log_sigma, Var eps) {
  return tape_of(mu).apply(Op::gaussian_reparam, {mu, log_sigma, eps});
}

}  // namespace ops

}  // namespace infogan
