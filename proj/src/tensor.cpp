#include "mvs/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "mvs/errors.h"

namespace mvs {

namespace {

std::atomic<uint64_t> g_seq{1};

uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

void check_shape_nonempty(const Shape& shape) {
  for (size_t d : shape) {
    if (d == 0) throw DataError("tensor shape has a zero extent");
  }
}

// Row-major strides of `shape` aligned into the dims of `out`, with stride 0
// on broadcast dims. Throws if the shapes are not broadcast-compatible.
std::vector<size_t> broadcast_strides(const Shape& shape, const Shape& out) {
  std::vector<size_t> strides(out.size(), 0);
  size_t stride = 1;
  size_t off = out.size() - shape.size();
  for (size_t d = shape.size(); d-- > 0;) {
    size_t od = off + d;
    if (shape[d] == out[od]) {
      strides[od] = stride;
    } else if (shape[d] == 1) {
      strides[od] = 0;
    } else {
      throw DataError("shape mismatch: tensors are not broadcast-compatible");
    }
    stride *= shape[d];
  }
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (size_t d = 0; d < nd; ++d) {
    size_t ad = d + a.size() >= nd ? a[d + a.size() - nd] : 1;
    size_t bd = d + b.size() >= nd ? b[d + b.size() - nd] : 1;
    if (ad != bd && ad != 1 && bd != 1) {
      throw DataError("shape mismatch: tensors are not broadcast-compatible");
    }
    out[d] = std::max(ad, bd);
  }
  return out;
}

// Iterate the elements of `out`, producing for each the linear offsets into
// two broadcast inputs. f(i_out, i_a, i_b).
template <class F>
void for_each_bcast2(const Shape& out, const std::vector<size_t>& sa,
                     const std::vector<size_t>& sb, F&& f) {
  size_t n = shape_numel(out);
  size_t nd = out.size();
  if (nd == 0) {
    f(size_t{0}, size_t{0}, size_t{0});
    return;
  }
  std::vector<size_t> idx(nd, 0);
  size_t ia = 0, ib = 0;
  for (size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (size_t d = nd; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Generic broadcasting binary op. FwdF: double(double,double);
// DaF/DbF: local partials double(av, bv) wrt a and b.
template <class FwdF, class DaF, class DbF>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdF fwd, DaF da, DbF db) {
  if (!a.defined() || !b.defined()) throw DataError("undefined tensor operand");
  const auto& an = a.node();
  const auto& bn = b.node();
  const auto& av = an->value;
  const auto& bv = bn->value;

  if (an->shape == bn->shape) {
    size_t n = av.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return Tensor::make_op(
        an->shape, std::move(out), {an, bn}, [fwd, da, db](Tensor::Node& self) {
          auto& pa = self.parents[0];
          auto& pb = self.parents[1];
          const auto& x = pa->value;
          const auto& y = pb->value;
          size_t n = self.grad.size();
          if (pa->requires_grad) {
            for (size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i] * da(x[i], y[i]);
          }
          if (pb->requires_grad) {
            for (size_t i = 0; i < n; ++i) pb->grad[i] += self.grad[i] * db(x[i], y[i]);
          }
        });
  }

  Shape out_shape = broadcast_shape(an->shape, bn->shape);
  auto sa = broadcast_strides(an->shape, out_shape);
  auto sb = broadcast_strides(bn->shape, out_shape);
  std::vector<double> out(shape_numel(out_shape));
  for_each_bcast2(out_shape, sa, sb,
                  [&](size_t i, size_t ia, size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
  return Tensor::make_op(
      out_shape, std::move(out), {an, bn},
      [fwd, da, db, out_shape, sa, sb](Tensor::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const auto& x = pa->value;
        const auto& y = pb->value;
        bool ga = pa->requires_grad;
        bool gb = pb->requires_grad;
        for_each_bcast2(out_shape, sa, sb, [&](size_t i, size_t ia, size_t ib) {
          double g = self.grad[i];
          if (ga) pa->grad[ia] += g * da(x[ia], y[ib]);
          if (gb) pb->grad[ib] += g * db(x[ia], y[ib]);
        });
      });
}

template <class FwdF, class DFwd>
Tensor unary_op(const Tensor& a, FwdF fwd, DFwd dfwd) {
  if (!a.defined()) throw DataError("undefined tensor operand");
  const auto& an = a.node();
  const auto& av = an->value;
  size_t n = av.size();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  return Tensor::make_op(an->shape, std::move(out), {an}, [dfwd](Tensor::Node& self) {
    auto& pa = self.parents[0];
    if (!pa->requires_grad) return;
    const auto& x = pa->value;
    size_t n = self.grad.size();
    for (size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i] * dfwd(x[i]);
  });
}

// Map every input element of `in_shape` to its reduced output offset when
// summing over `axes`. f(i_in, i_out).
template <class F>
void for_each_reduce(const Shape& in_shape, const std::vector<bool>& reduced,
                     F&& f) {
  size_t nd = in_shape.size();
  std::vector<size_t> out_stride(nd, 0);
  size_t stride = 1;
  for (size_t d = nd; d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= in_shape[d];
    }
  }
  std::vector<size_t> idx(nd, 0);
  size_t n = shape_numel(in_shape);
  size_t io = 0;
  for (size_t i = 0; i < n; ++i) {
    f(i, io);
    for (size_t d = nd; d-- > 0;) {
      ++idx[d];
      io += out_stride[d];
      if (idx[d] < in_shape[d]) break;
      io -= out_stride[d] * in_shape[d];
      idx[d] = 0;
    }
  }
}

Tensor reduce_sum_impl(const Tensor& a, const std::vector<size_t>& axes,
                       bool keepdims, bool take_mean) {
  if (!a.defined()) throw DataError("undefined tensor operand");
  const auto& an = a.node();
  size_t nd = an->shape.size();
  if (axes.empty()) throw DataError("reduce: no axes given");
  std::vector<bool> reduced(nd, false);
  size_t count = 1;
  for (size_t ax : axes) {
    if (ax >= nd) throw DataError("reduce: axis out of range");
    if (reduced[ax]) throw DataError("reduce: duplicate axis");
    reduced[ax] = true;
    count *= an->shape[ax];
  }
  if (count == 0) throw DataError("reduce: empty reduction extent");

  Shape out_shape;
  for (size_t d = 0; d < nd; ++d) {
    if (!reduced[d]) {
      out_shape.push_back(an->shape[d]);
    } else if (keepdims) {
      out_shape.push_back(1);
    }
  }
  if (out_shape.empty()) out_shape = {1};

  double scale = take_mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto& av = an->value;
  for_each_reduce(an->shape, reduced, [&](size_t i, size_t io) { out[io] += av[i]; });
  if (take_mean) {
    for (double& v : out) v *= scale;
  }
  Shape in_shape = an->shape;
  return Tensor::make_op(out_shape, std::move(out), {an},
                         [in_shape, reduced, scale](Tensor::Node& self) {
                           auto& pa = self.parents[0];
                           if (!pa->requires_grad) return;
                           for_each_reduce(in_shape, reduced, [&](size_t i, size_t io) {
                             pa->grad[i] += self.grad[io] * scale;
                           });
                         });
}

void axis_split(const Shape& shape, size_t axis, size_t& outer, size_t& extent,
                size_t& inner) {
  if (axis >= shape.size()) throw DataError("axis out of range");
  outer = 1;
  inner = 1;
  extent = shape[axis];
  for (size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
}

}  // namespace

size_t shape_numel(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::make_op(Shape shape, std::vector<double> value,
                       std::vector<std::shared_ptr<Node>> parents,
                       std::function<void(Node&)> backprop) {
  if (shape_numel(shape) != value.size()) {
    throw DataError("make_op: shape does not match value size");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p && p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  n->seq = next_seq();
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
  check_shape_nonempty(shape);
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(shape_numel(shape), v);
  n->requires_grad = requires_grad;
  n->seq = next_seq();
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  check_shape_nonempty(shape);
  if (shape_numel(shape) != data.size()) {
    throw DataError("from_data: shape does not match data size");
  }
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  n->seq = next_seq();
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::uniform(const Shape& shape, double lo, double hi,
                       std::mt19937_64& rng, bool requires_grad) {
  check_shape_nonempty(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = dist(rng);
  return from_data(shape, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!defined()) throw DataError("undefined tensor");
  return node_->shape;
}

size_t Tensor::dim(size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DataError("dim: axis out of range");
  return s[axis];
}

size_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
  if (!defined()) throw DataError("undefined tensor");
  return node_->value;
}

double Tensor::scalar_value() const {
  if (numel() != 1) throw DataError("scalar_value: tensor is not a scalar");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<size_t> idx) const {
  const auto& s = shape();
  if (idx.size() != s.size()) throw DataError("at: wrong index rank");
  size_t off = 0;
  size_t d = 0;
  for (size_t i : idx) {
    if (i >= s[d]) throw DataError("at: index out of range");
    off = off * s[d] + i;
    ++d;
  }
  return node_->value[off];
}

bool Tensor::has_grad() const {
  return defined() && node_->grad.size() == node_->value.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw DataError("grad: no gradient populated; call backward first");
  return node_->grad;
}

void Tensor::backward() const {
  if (!defined()) throw DataError("backward: undefined tensor");
  if (numel() != 1) throw DataError("backward: result must be scalar");
  if (!node_->requires_grad) {
    throw DataError("backward: result does not depend on any differentiable input");
  }

  // Collect every node gradient can reach, then replay in reverse creation
  // order; that visits each recorded op exactly once.
  std::vector<Node*> visited;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    visited.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  for (Node* n : visited) n->grad.assign(n->value.size(), 0.0);
  node_->grad[0] = 1.0;

  std::sort(visited.begin(), visited.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });
  for (Node* n : visited) {
    if (n->backprop) n->backprop(*n);
  }
}

Tensor Tensor::detach(bool requires_grad) const {
  if (!defined()) throw DataError("detach: undefined tensor");
  return from_data(node_->shape, node_->value, requires_grad);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw NumericError("log: input must be strictly positive");
  }
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double x) { return std::exp(x); });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; },
                  [](double x) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw DataError("clamp: lo must not exceed hi");
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x * s; }, [s](double) { return s; });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  std::vector<size_t> axes(a.ndim());
  for (size_t d = 0; d < axes.size(); ++d) axes[d] = d;
  return reduce_sum_impl(a, axes, false, false);
}

Tensor sum(const Tensor& a, const std::vector<size_t>& axes, bool keepdims) {
  return reduce_sum_impl(a, axes, keepdims, false);
}

Tensor mean(const Tensor& a) {
  std::vector<size_t> axes(a.ndim());
  for (size_t d = 0; d < axes.size(); ++d) axes[d] = d;
  return reduce_sum_impl(a, axes, false, true);
}

Tensor mean(const Tensor& a, const std::vector<size_t>& axes, bool keepdims) {
  return reduce_sum_impl(a, axes, keepdims, true);
}

MaxResult max_along(const Tensor& a, size_t axis) {
  const auto& an = a.node();
  size_t outer, extent, inner;
  axis_split(an->shape, axis, outer, extent, inner);

  Shape out_shape;
  for (size_t d = 0; d < an->shape.size(); ++d) {
    if (d != axis) out_shape.push_back(an->shape[d]);
  }
  if (out_shape.empty()) out_shape = {1};

  std::vector<double> values(outer * inner);
  std::vector<size_t> argmax(outer * inner);
  const auto& av = an->value;
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      size_t best = 0;
      double bv = av[(o * extent) * inner + in];
      for (size_t e = 1; e < extent; ++e) {
        double v = av[(o * extent + e) * inner + in];
        if (v > bv) {
          bv = v;
          best = e;
        }
      }
      values[o * inner + in] = bv;
      argmax[o * inner + in] = best;
    }
  }
  Tensor vt = Tensor::make_op(
      out_shape, std::move(values), {an},
      [outer, extent, inner, argmax](Tensor::Node& self) {
        auto& pa = self.parents[0];
        if (!pa->requires_grad) return;
        for (size_t o = 0; o < outer; ++o) {
          for (size_t in = 0; in < inner; ++in) {
            size_t e = argmax[o * inner + in];
            pa->grad[(o * extent + e) * inner + in] += self.grad[o * inner + in];
          }
        }
      });
  return MaxResult{vt, argmax};
}

// ---- structural ----

Tensor reshape(const Tensor& a, const Shape& shape) {
  check_shape_nonempty(shape);
  if (shape_numel(shape) != a.numel()) throw DataError("reshape: numel mismatch");
  const auto& an = a.node();
  std::vector<double> out = an->value;
  return Tensor::make_op(shape, std::move(out), {an}, [](Tensor::Node& self) {
    auto& pa = self.parents[0];
    if (!pa->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  const auto& an = a.node();
  auto sa = broadcast_strides(an->shape, shape);
  std::vector<double> out(shape_numel(shape));
  const auto& av = an->value;
  for_each_bcast2(shape, sa, sa, [&](size_t i, size_t ia, size_t) { out[i] = av[ia]; });
  Shape out_shape = shape;
  return Tensor::make_op(out_shape, std::move(out), {an},
                         [out_shape, sa](Tensor::Node& self) {
                           auto& pa = self.parents[0];
                           if (!pa->requires_grad) return;
                           for_each_bcast2(out_shape, sa, sa,
                                           [&](size_t i, size_t ia, size_t) {
                                             pa->grad[ia] += self.grad[i];
                                           });
                         });
}

Tensor gather_along0(const Tensor& a, const std::vector<size_t>& idx) {
  const auto& an = a.node();
  if (an->shape.empty()) throw DataError("gather_along0: rank-0 input");
  size_t depth = an->shape[0];
  size_t rest = a.numel() / depth;
  if (idx.size() != rest) throw DataError("gather_along0: index size mismatch");
  Shape out_shape(an->shape.begin() + 1, an->shape.end());
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(rest);
  const auto& av = an->value;
  for (size_t r = 0; r < rest; ++r) {
    if (idx[r] >= depth) throw DataError("gather_along0: index out of range");
    out[r] = av[idx[r] * rest + r];
  }
  return Tensor::make_op(out_shape, std::move(out), {an},
                         [rest, idx](Tensor::Node& self) {
                           auto& pa = self.parents[0];
                           if (!pa->requires_grad) return;
                           for (size_t r = 0; r < rest; ++r) {
                             pa->grad[idx[r] * rest + r] += self.grad[r];
                           }
                         });
}

Tensor window_sum_along0(const Tensor& a, const std::vector<size_t>& start,
                         size_t window) {
  const auto& an = a.node();
  if (an->shape.empty()) throw DataError("window_sum_along0: rank-0 input");
  size_t depth = an->shape[0];
  size_t rest = a.numel() / depth;
  if (start.size() != rest) throw DataError("window_sum_along0: start size mismatch");
  if (window == 0 || window > depth) throw DataError("window_sum_along0: bad window");
  Shape out_shape(an->shape.begin() + 1, an->shape.end());
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(rest, 0.0);
  const auto& av = an->value;
  for (size_t r = 0; r < rest; ++r) {
    if (start[r] + window > depth) throw DataError("window_sum_along0: window out of range");
    for (size_t j = 0; j < window; ++j) out[r] += av[(start[r] + j) * rest + r];
  }
  return Tensor::make_op(out_shape, std::move(out), {an},
                         [rest, start, window](Tensor::Node& self) {
                           auto& pa = self.parents[0];
                           if (!pa->requires_grad) return;
                           for (size_t r = 0; r < rest; ++r) {
                             for (size_t j = 0; j < window; ++j) {
                               pa->grad[(start[r] + j) * rest + r] += self.grad[r];
                             }
                           }
                         });
}

// ---- nn ----

Tensor softmax(const Tensor& a, size_t axis) {
  const auto& an = a.node();
  for (double v : an->value) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  size_t outer, extent, inner;
  axis_split(an->shape, axis, outer, extent, inner);
  std::vector<double> out(a.numel());
  const auto& av = an->value;
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      double mx = av[o * extent * inner + in];
      for (size_t e = 1; e < extent; ++e) {
        mx = std::max(mx, av[(o * extent + e) * inner + in]);
      }
      double denom = 0.0;
      for (size_t e = 0; e < extent; ++e) {
        size_t k = (o * extent + e) * inner + in;
        out[k] = std::exp(av[k] - mx);
        denom += out[k];
      }
      for (size_t e = 0; e < extent; ++e) out[(o * extent + e) * inner + in] /= denom;
    }
  }
  return Tensor::make_op(
      an->shape, std::move(out), {an}, [outer, extent, inner](Tensor::Node& self) {
        auto& pa = self.parents[0];
        if (!pa->requires_grad) return;
        const auto& p = self.value;
        for (size_t o = 0; o < outer; ++o) {
          for (size_t in = 0; in < inner; ++in) {
            double dot = 0.0;
            for (size_t e = 0; e < extent; ++e) {
              size_t k = (o * extent + e) * inner + in;
              dot += self.grad[k] * p[k];
            }
            for (size_t e = 0; e < extent; ++e) {
              size_t k = (o * extent + e) * inner + in;
              pa->grad[k] += p[k] * (self.grad[k] - dot);
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              size_t stride, size_t padding) {
  const auto& in_n = input.node();
  const auto& k_n = kernels.node();
  const auto& b_n = bias.node();
  if (in_n->shape.size() != 3) throw DataError("conv2d: input must be [C,H,W]");
  if (k_n->shape.size() != 4) throw DataError("conv2d: kernels must be [O,C,kh,kw]");
  size_t C = in_n->shape[0], H = in_n->shape[1], W = in_n->shape[2];
  size_t O = k_n->shape[0], kh = k_n->shape[2], kw = k_n->shape[3];
  if (k_n->shape[1] != C) throw DataError("conv2d: channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw DataError("conv2d: kernel extents must be odd");
  if (b_n->shape != Shape{O}) throw DataError("conv2d: bias must be [O]");
  if (stride == 0) throw DataError("conv2d: stride must be positive");
  long oh = (static_cast<long>(H) + 2 * static_cast<long>(padding) -
             static_cast<long>(kh)) / static_cast<long>(stride) + 1;
  long ow = (static_cast<long>(W) + 2 * static_cast<long>(padding) -
             static_cast<long>(kw)) / static_cast<long>(stride) + 1;
  if (oh < 1 || ow < 1) throw DataError("conv2d: output extent < 1");
  size_t OH = static_cast<size_t>(oh), OW = static_cast<size_t>(ow);

  std::vector<double> out(O * OH * OW);
  {
    const double* in = in_n->value.data();
    const double* w = k_n->value.data();
    const double* b = b_n->value.data();
    for (size_t o = 0; o < O; ++o) {
      double* op = out.data() + o * OH * OW;
      std::fill(op, op + OH * OW, b[o]);
      for (size_t c = 0; c < C; ++c) {
        const double* ip = in + c * H * W;
        for (size_t ky = 0; ky < kh; ++ky) {
          for (size_t kx = 0; kx < kw; ++kx) {
            double wv = w[((o * C + c) * kh + ky) * kw + kx];
            if (wv == 0.0) continue;
            for (size_t y = 0; y < OH; ++y) {
              long iy = static_cast<long>(y * stride + ky) - static_cast<long>(padding);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              const double* row = ip + iy * W;
              double* orow = op + y * OW;
              for (size_t x = 0; x < OW; ++x) {
                long ix = static_cast<long>(x * stride + kx) - static_cast<long>(padding);
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                orow[x] += wv * row[ix];
              }
            }
          }
        }
      }
    }
  }

  return Tensor::make_op(
      {O, OH, OW}, std::move(out), {in_n, k_n, b_n},
      [C, H, W, O, kh, kw, OH, OW, stride, padding](Tensor::Node& self) {
        auto& pi = self.parents[0];
        auto& pk = self.parents[1];
        auto& pb = self.parents[2];
        const double* go = self.grad.data();
        const double* in = pi->value.data();
        const double* w = pk->value.data();
        if (pb->requires_grad) {
          for (size_t o = 0; o < O; ++o) {
            double acc = 0.0;
            const double* gp = go + o * OH * OW;
            for (size_t i = 0; i < OH * OW; ++i) acc += gp[i];
            pb->grad[o] += acc;
          }
        }
        for (size_t o = 0; o < O; ++o) {
          const double* gp = go + o * OH * OW;
          for (size_t c = 0; c < C; ++c) {
            const double* ip = in + c * H * W;
            double* gip = pi->requires_grad ? pi->grad.data() + c * H * W : nullptr;
            for (size_t ky = 0; ky < kh; ++ky) {
              for (size_t kx = 0; kx < kw; ++kx) {
                size_t widx = ((o * C + c) * kh + ky) * kw + kx;
                double wv = w[widx];
                double wg = 0.0;
                for (size_t y = 0; y < OH; ++y) {
                  long iy = static_cast<long>(y * stride + ky) - static_cast<long>(padding);
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  const double* row = ip + iy * W;
                  double* grow = gip ? gip + iy * W : nullptr;
                  const double* gorow = gp + y * OW;
                  for (size_t x = 0; x < OW; ++x) {
                    long ix = static_cast<long>(x * stride + kx) - static_cast<long>(padding);
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    double g = gorow[x];
                    wg += g * row[ix];
                    if (grow) grow[ix] += g * wv;
                  }
                }
                if (pk->requires_grad) pk->grad[widx] += wg;
              }
            }
          }
        }
      });
}

Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              size_t padding) {
  const auto& in_n = input.node();
  const auto& k_n = kernels.node();
  const auto& b_n = bias.node();
  if (in_n->shape.size() != 4) throw DataError("conv3d: input must be [C,D,H,W]");
  if (k_n->shape.size() != 5) throw DataError("conv3d: kernels must be [O,C,kd,kh,kw]");
  size_t C = in_n->shape[0], D = in_n->shape[1], H = in_n->shape[2], W = in_n->shape[3];
  size_t O = k_n->shape[0], kd = k_n->shape[2], kh = k_n->shape[3], kw = k_n->shape[4];
  if (k_n->shape[1] != C) throw DataError("conv3d: channel mismatch");
  if (kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0) {
    throw DataError("conv3d: kernel extents must be odd");
  }
  if (b_n->shape != Shape{O}) throw DataError("conv3d: bias must be [O]");
  long od = static_cast<long>(D) + 2 * static_cast<long>(padding) - static_cast<long>(kd) + 1;
  long ohh = static_cast<long>(H) + 2 * static_cast<long>(padding) - static_cast<long>(kh) + 1;
  long oww = static_cast<long>(W) + 2 * static_cast<long>(padding) - static_cast<long>(kw) + 1;
  if (od < 1 || ohh < 1 || oww < 1) throw DataError("conv3d: output extent < 1");
  size_t OD = static_cast<size_t>(od), OH = static_cast<size_t>(ohh), OW = static_cast<size_t>(oww);

  std::vector<double> out(O * OD * OH * OW);
  {
    const double* in = in_n->value.data();
    const double* w = k_n->value.data();
    const double* b = b_n->value.data();
    long p = static_cast<long>(padding);
    for (size_t o = 0; o < O; ++o) {
      double* op = out.data() + o * OD * OH * OW;
      std::fill(op, op + OD * OH * OW, b[o]);
      for (size_t c = 0; c < C; ++c) {
        const double* ip = in + c * D * H * W;
        for (size_t zk = 0; zk < kd; ++zk) {
          for (size_t ky = 0; ky < kh; ++ky) {
            for (size_t kx = 0; kx < kw; ++kx) {
              double wv = w[(((o * C + c) * kd + zk) * kh + ky) * kw + kx];
              if (wv == 0.0) continue;
              for (size_t z = 0; z < OD; ++z) {
                long iz = static_cast<long>(z + zk) - p;
                if (iz < 0 || iz >= static_cast<long>(D)) continue;
                for (size_t y = 0; y < OH; ++y) {
                  long iy = static_cast<long>(y + ky) - p;
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  const double* row = ip + (iz * H + iy) * W;
                  double* orow = op + (z * OH + y) * OW;
                  long x0 = std::max<long>(0, p - static_cast<long>(kx));
                  long x1 = std::min<long>(static_cast<long>(OW),
                                           static_cast<long>(W) + p - static_cast<long>(kx));
                  const double* rsh = row + kx - p;
                  for (long x = x0; x < x1; ++x) orow[x] += wv * rsh[x];
                }
              }
            }
          }
        }
      }
    }
  }

  return Tensor::make_op(
      {O, OD, OH, OW}, std::move(out), {in_n, k_n, b_n},
      [C, D, H, W, O, kd, kh, kw, OD, OH, OW, padding](Tensor::Node& self) {
        auto& pi = self.parents[0];
        auto& pk = self.parents[1];
        auto& pb = self.parents[2];
        const double* go = self.grad.data();
        const double* in = pi->value.data();
        const double* w = pk->value.data();
        long p = static_cast<long>(padding);
        if (pb->requires_grad) {
          for (size_t o = 0; o < O; ++o) {
            double acc = 0.0;
            const double* gp = go + o * OD * OH * OW;
            for (size_t i = 0; i < OD * OH * OW; ++i) acc += gp[i];
            pb->grad[o] += acc;
          }
        }
        for (size_t o = 0; o < O; ++o) {
          const double* gp = go + o * OD * OH * OW;
          for (size_t c = 0; c < C; ++c) {
            const double* ip = in + c * D * H * W;
            double* gip = pi->requires_grad ? pi->grad.data() + c * D * H * W : nullptr;
            for (size_t zk = 0; zk < kd; ++zk) {
              for (size_t ky = 0; ky < kh; ++ky) {
                for (size_t kx = 0; kx < kw; ++kx) {
                  size_t widx = (((o * C + c) * kd + zk) * kh + ky) * kw + kx;
                  double wv = w[widx];
                  double wg = 0.0;
                  for (size_t z = 0; z < OD; ++z) {
                    long iz = static_cast<long>(z + zk) - p;
                    if (iz < 0 || iz >= static_cast<long>(D)) continue;
                    for (size_t y = 0; y < OH; ++y) {
                      long iy = static_cast<long>(y + ky) - p;
                      if (iy < 0 || iy >= static_cast<long>(H)) continue;
                      const double* row = ip + (iz * H + iy) * W;
                      double* grow = gip ? gip + (iz * H + iy) * W : nullptr;
                      const double* gorow = gp + (z * OH + y) * OW;
                      long x0 = std::max<long>(0, p - static_cast<long>(kx));
                      long x1 = std::min<long>(static_cast<long>(OW),
                                               static_cast<long>(W) + p - static_cast<long>(kx));
                      long sh = static_cast<long>(kx) - p;
                      for (long x = x0; x < x1; ++x) {
                        double g = gorow[x];
                        wg += g * row[x + sh];
                        if (grow) grow[x + sh] += g * wv;
                      }
                    }
                  }
                  if (pk->requires_grad) pk->grad[widx] += wg;
                }
              }
            }
          }
        }
      });
}

Tensor upsample_nearest2x(const Tensor& a) {
  const auto& an = a.node();
  if (an->shape.size() != 3) throw DataError("upsample_nearest2x: input must be [C,H,W]");
  size_t C = an->shape[0], H = an->shape[1], W = an->shape[2];
  size_t OH = 2 * H, OW = 2 * W;
  std::vector<double> out(C * OH * OW);
  const auto& av = an->value;
  for (size_t c = 0; c < C; ++c) {
    for (size_t y = 0; y < OH; ++y) {
      const double* row = av.data() + (c * H + y / 2) * W;
      double* orow = out.data() + (c * OH + y) * OW;
      for (size_t x = 0; x < OW; ++x) orow[x] = row[x / 2];
    }
  }
  return Tensor::make_op({C, OH, OW}, std::move(out), {an},
                         [C, H, W, OH, OW](Tensor::Node& self) {
                           auto& pa = self.parents[0];
                           if (!pa->requires_grad) return;
                           for (size_t c = 0; c < C; ++c) {
                             for (size_t y = 0; y < OH; ++y) {
                               double* grow = pa->grad.data() + (c * H + y / 2) * W;
                               const double* gorow = self.grad.data() + (c * OH + y) * OW;
                               for (size_t x = 0; x < OW; ++x) grow[x / 2] += gorow[x];
                             }
                           }
                         });
}

Tensor upsample_bilinear(const Tensor& a, size_t out_h, size_t out_w) {
  const auto& an = a.node();
  bool has_c = an->shape.size() == 3;
  if (!has_c && an->shape.size() != 2) {
    throw DataError("upsample_bilinear: input must be [H,W] or [C,H,W]");
  }
  size_t C = has_c ? an->shape[0] : 1;
  size_t H = has_c ? an->shape[1] : an->shape[0];
  size_t W = has_c ? an->shape[2] : an->shape[1];
  if (out_h == 0 || out_w == 0) throw DataError("upsample_bilinear: empty output");

  // Half-pixel-center mapping, clamped at the borders.
  auto taps = [](size_t out_n, size_t in_n) {
    std::vector<size_t> i0(out_n);
    std::vector<double> frac(out_n);
    for (size_t i = 0; i < out_n; ++i) {
      double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in_n) /
                     static_cast<double>(out_n) - 0.5;
      s = std::min(std::max(s, 0.0), static_cast<double>(in_n - 1));
      size_t lo = std::min(static_cast<size_t>(s), in_n >= 2 ? in_n - 2 : 0);
      i0[i] = lo;
      frac[i] = in_n >= 2 ? s - static_cast<double>(lo) : 0.0;
    }
    return std::pair(i0, frac);
  };
  auto [y0, fy] = taps(out_h, H);
  auto [x0, fx] = taps(out_w, W);

  std::vector<double> out(C * out_h * out_w);
  const auto& av = an->value;
  for (size_t c = 0; c < C; ++c) {
    const double* ip = av.data() + c * H * W;
    for (size_t y = 0; y < out_h; ++y) {
      size_t ya = y0[y], yb = H >= 2 ? ya + 1 : ya;
      double wy = fy[y];
      double* orow = out.data() + (c * out_h + y) * out_w;
      for (size_t x = 0; x < out_w; ++x) {
        size_t xa = x0[x], xb = W >= 2 ? xa + 1 : xa;
        double wx = fx[x];
        orow[x] = (1 - wy) * ((1 - wx) * ip[ya * W + xa] + wx * ip[ya * W + xb]) +
                  wy * ((1 - wx) * ip[yb * W + xa] + wx * ip[yb * W + xb]);
      }
    }
  }
  Shape out_shape = has_c ? Shape{C, out_h, out_w} : Shape{out_h, out_w};
  return Tensor::make_op(
      out_shape, std::move(out), {an},
      [C, H, W, out_h, out_w, y0 = y0, fy = fy, x0 = x0, fx = fx](Tensor::Node& self) {
        auto& pa = self.parents[0];
        if (!pa->requires_grad) return;
        for (size_t c = 0; c < C; ++c) {
          double* gp = pa->grad.data() + c * H * W;
          for (size_t y = 0; y < out_h; ++y) {
            size_t ya = y0[y], yb = H >= 2 ? ya + 1 : ya;
            double wy = fy[y];
            const double* gorow = self.grad.data() + (c * out_h + y) * out_w;
            for (size_t x = 0; x < out_w; ++x) {
              size_t xa = x0[x], xb = W >= 2 ? xa + 1 : xa;
              double wx = fx[x];
              double g = gorow[x];
              gp[ya * W + xa] += g * (1 - wy) * (1 - wx);
              gp[ya * W + xb] += g * (1 - wy) * wx;
              gp[yb * W + xa] += g * wy * (1 - wx);
              gp[yb * W + xb] += g * wy * wx;
            }
          }
        }
      });
}

}  // namespace mvs
