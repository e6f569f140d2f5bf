#include "silp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "fft.hpp"
#include "gemm.hpp"

namespace silp::ad {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

namespace {

NodeRef new_node(Shape shape) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  return n;
}

// Wires parents and the adjoint only when some input actually needs a
// gradient; evaluation-only graphs stay flat and cheap.
void wire(const NodeRef& out, std::vector<NodeRef> parents, std::function<void(Node&)> backprop) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->needs_grad;
  if (!needs) return;
  out->needs_grad = true;
  out->parents = std::move(parents);
  out->backprop = std::move(backprop);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Var binary_elementwise(const Var& a, const Var& b, const char* name,
                       double (*fv)(double, double),
                       void (*fg)(double, double, double, double&, double&)) {
  check_same_shape(a, b, name);
  auto out = new_node(a.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = fv(av[i], bv[i]);
  wire(out, {a.node(), b.node()}, [fg](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    pa.ensure_grad();
    pb.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double da = 0.0, db = 0.0;
      fg(pa.value[i], pb.value[i], self.grad[i], da, db);
      pa.grad[i] += da;
      pb.grad[i] += db;
    }
  });
  return Var(out);
}

}  // namespace

Var Var::leaf(Shape shape, std::vector<double> value, bool requires_grad) {
  if (static_cast<int64_t>(value.size()) != shape_numel(shape))
    throw std::invalid_argument("leaf: value size does not match shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->needs_grad = requires_grad;
  return Var(n);
}

Var Var::scalar(double v) { return leaf({1}, {v}, false); }

Var Var::zeros(Shape shape, bool requires_grad) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Var Var::full(Shape shape, double v, bool requires_grad) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  return leaf(std::move(shape), std::vector<double>(n, v), requires_grad);
}

double Var::item() const {
  if (node_->numel() != 1) throw std::logic_error("item(): tensor is not a scalar");
  return node_->value[0];
}

void backward(const Var& root) {
  if (root.numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!std::isfinite(root.item())) throw std::runtime_error("backward: non-finite loss value");
  if (!root.node()->needs_grad) return;

  // Iterative post-order DFS over parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

void zero_grad(std::span<Var> leaves) {
  for (auto& v : leaves) v.node()->grad.clear();
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Var sub(const Var& a, const Var& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Var mul(const Var& a, const Var& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Var div(const Var& a, const Var& b) {
  return binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Var minimum(const Var& a, const Var& b) {
  return binary_elementwise(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double g, double& da, double& db) {
        if (x <= y)
          da = g;
        else
          db = g;
      });
}

Var atan2_of(const Var& y, const Var& x, double grad_guard) {
  check_same_shape(y, x, "atan2");
  auto out = new_node(y.shape());
  const auto& yv = y.node()->value;
  const auto& xv = x.node()->value;
  for (size_t i = 0; i < yv.size(); ++i) out->value[i] = std::atan2(yv[i], xv[i]);
  wire(out, {y.node(), x.node()}, [grad_guard](Node& self) {
    Node& py = *self.parents[0];
    Node& px = *self.parents[1];
    py.ensure_grad();
    px.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double r2 = px.value[i] * px.value[i] + py.value[i] * py.value[i] + grad_guard;
      py.grad[i] += self.grad[i] * px.value[i] / r2;
      px.grad[i] -= self.grad[i] * py.value[i] / r2;
    }
  });
  return Var(out);
}

namespace {

Var unary_elementwise(const Var& a, double (*fv)(double),
                      double (*df)(double /*x*/, double /*fx*/)) {
  auto out = new_node(a.shape());
  const auto& av = a.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = fv(av[i]);
  wire(out, {a.node()}, [df](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa.grad[i] += self.grad[i] * df(pa.value[i], self.value[i]);
  });
  return Var(out);
}

}  // namespace

Var neg(const Var& a) {
  return unary_elementwise(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var add_scalar(const Var& a, double c) {
  auto out = new_node(a.shape());
  const auto& av = a.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + c;
  wire(out, {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
  });
  return Var(out);
}

Var mul_scalar(const Var& a, double c) {
  auto out = new_node(a.shape());
  const auto& av = a.node()->value;
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * c;
  wire(out, {a.node()}, [c](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * c;
  });
  return Var(out);
}

Var sqrt_of(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::sqrt(x); },
                           [](double, double fx) { return 0.5 / fx; });
}

Var sqrt_guarded(const Var& a, double floor_eps) {
  auto shifted = add_scalar(a, floor_eps);
  return sqrt_of(shifted);
}

Var log_of(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::log(x); },
                           [](double x, double) { return 1.0 / x; });
}

Var exp_of(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::exp(x); },
                           [](double, double fx) { return fx; });
}

Var tanh_of(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::tanh(x); },
                           [](double, double fx) { return 1.0 - fx * fx; });
}

Var sigmoid(const Var& a) {
  return unary_elementwise(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                           [](double, double fx) { return fx * (1.0 - fx); });
}

Var abs_of(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::abs(x); },
                           [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary_elementwise(a, [](double x) { return x * x; },
                           [](double x, double) { return 2.0 * x; });
}

Var wrap_angle(const Var& a) {
  return unary_elementwise(
      a,
      [](double x) {
        double w = std::fmod(x + std::numbers::pi, 2.0 * std::numbers::pi);
        if (w <= 0.0) w += 2.0 * std::numbers::pi;
        return w - std::numbers::pi;
      },
      [](double, double) { return 1.0; });
}

Var prelu(const Var& x, const Var& slope) {
  if (slope.numel() != 1) throw std::invalid_argument("prelu: slope must be a scalar");
  auto out = new_node(x.shape());
  const auto& xv = x.node()->value;
  const double a = slope.values()[0];
  for (size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] > 0 ? xv[i] : a * xv[i];
  wire(out, {x.node(), slope.node()}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& ps = *self.parents[1];
    px.ensure_grad();
    ps.ensure_grad();
    const double a = ps.value[0];
    double dslope = 0.0;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (px.value[i] > 0) {
        px.grad[i] += self.grad[i];
      } else {
        px.grad[i] += self.grad[i] * a;
        dslope += self.grad[i] * px.value[i];
      }
    }
    ps.grad[0] += dslope;
  });
  return Var(out);
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  auto out = new_node({1});
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  out->value[0] = s;
  wire(out, {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    const double g = self.grad[0];
    for (auto& gv : pa.grad) gv += g;
  });
  return Var(out);
}

Var mean(const Var& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

Var sum_lastdim(const Var& a) {
  Shape s = a.shape();
  const int n = s.back();
  s.back() = 1;
  auto out = new_node(s);
  const auto& av = a.node()->value;
  const size_t rows = av.size() / static_cast<size_t>(n);
  for (size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += av[r * n + i];
    out->value[r] = acc;
  }
  wire(out, {a.node()}, [n](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    const size_t rows = self.grad.size();
    for (size_t r = 0; r < rows; ++r)
      for (int i = 0; i < n; ++i) pa.grad[r * n + i] += self.grad[r];
  });
  return Var(out);
}

Var tile_lastdim(const Var& a, int n) {
  if (a.shape().back() != 1) throw std::invalid_argument("tile_lastdim: last dim must be 1");
  Shape s = a.shape();
  s.back() = n;
  auto out = new_node(s);
  const auto& av = a.node()->value;
  for (size_t r = 0; r < av.size(); ++r)
    for (int i = 0; i < n; ++i) out->value[r * n + i] = av[r];
  wire(out, {a.node()}, [n](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    for (size_t r = 0; r < pa.grad.size(); ++r) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += self.grad[r * n + i];
      pa.grad[r] += acc;
    }
  });
  return Var(out);
}

Var weighted_sum(const Var& a, std::span<const double> w) {
  if (static_cast<int64_t>(w.size()) != a.numel())
    throw std::invalid_argument("weighted_sum: weight size mismatch");
  auto out = new_node({1});
  const auto& av = a.node()->value;
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += av[i] * w[i];
  out->value[0] = s;
  std::vector<double> wc(w.begin(), w.end());
  wire(out, {a.node()}, [wc = std::move(wc)](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g * wc[i];
  });
  return Var(out);
}

// ---------------------------------------------------------------- structure

Var reshape(const Var& a, Shape s) {
  if (shape_numel(s) != a.numel()) throw std::invalid_argument("reshape: numel mismatch");
  auto out = new_node(s);
  out->value = a.node()->value;
  wire(out, {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
  });
  return Var(out);
}

namespace {

// Row-major strides and the (outer, axis, inner) decomposition used by the
// axis-wise ops below.
struct AxisDecomp {
  int64_t outer = 1, axis = 1, inner = 1;
};

AxisDecomp decomp(const Shape& s, int axis) {
  AxisDecomp d;
  for (int i = 0; i < axis; ++i) d.outer *= s[static_cast<size_t>(i)];
  d.axis = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) d.inner *= s[i];
  return d;
}

}  // namespace

Var concat(int axis, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape s = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    ps[static_cast<size_t>(axis)] = 0;
    Shape ss = s;
    ss[static_cast<size_t>(axis)] = 0;
    if (ps != ss) throw std::invalid_argument("concat: incompatible shapes");
    total += p.shape()[static_cast<size_t>(axis)];
  }
  s[static_cast<size_t>(axis)] = total;
  auto out = new_node(s);
  const auto d = decomp(s, axis);
  std::vector<NodeRef> parents;
  std::vector<int> sizes;
  int64_t off = 0;
  for (const auto& p : parts) {
    const auto pd = decomp(p.shape(), axis);
    const auto& pv = p.node()->value;
    for (int64_t o = 0; o < d.outer; ++o)
      std::copy_n(pv.begin() + o * pd.axis * pd.inner, pd.axis * pd.inner,
                  out->value.begin() + o * d.axis * d.inner + off * d.inner);
    off += pd.axis;
    parents.push_back(p.node());
    sizes.push_back(static_cast<int>(pd.axis));
  }
  wire(out, std::move(parents), [axis, sizes](Node& self) {
    const auto d = decomp(self.shape, axis);
    int64_t off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      Node& p = *self.parents[pi];
      p.ensure_grad();
      const int64_t pa = sizes[pi];
      for (int64_t o = 0; o < d.outer; ++o) {
        const double* src = self.grad.data() + o * d.axis * d.inner + off * d.inner;
        double* dst = p.grad.data() + o * pa * d.inner;
        for (int64_t i = 0; i < pa * d.inner; ++i) dst[i] += src[i];
      }
      off += pa;
    }
  });
  return Var(out);
}

Var concat2(int axis, const Var& a, const Var& b) {
  std::array<Var, 2> parts{a, b};
  return concat(axis, parts);
}

Var slice(const Var& a, int axis, int start, int len) {
  const Shape& as = a.shape();
  if (start < 0 || len <= 0 || start + len > as[static_cast<size_t>(axis)])
    throw std::invalid_argument("slice: out of range");
  Shape s = as;
  s[static_cast<size_t>(axis)] = len;
  auto out = new_node(s);
  const auto ad = decomp(as, axis);
  const auto& av = a.node()->value;
  for (int64_t o = 0; o < ad.outer; ++o)
    std::copy_n(av.begin() + (o * ad.axis + start) * ad.inner, static_cast<int64_t>(len) * ad.inner,
                out->value.begin() + o * len * ad.inner);
  wire(out, {a.node()}, [axis, start, len](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    const auto ad = decomp(pa.shape, axis);
    for (int64_t o = 0; o < ad.outer; ++o) {
      const double* src = self.grad.data() + o * len * ad.inner;
      double* dst = pa.grad.data() + (o * ad.axis + start) * ad.inner;
      for (int64_t i = 0; i < static_cast<int64_t>(len) * ad.inner; ++i) dst[i] += src[i];
    }
  });
  return Var(out);
}

Var permute3(const Var& a, std::array<int, 3> perm) {
  if (a.shape().size() != 3) throw std::invalid_argument("permute3: rank-3 only");
  const Shape& as = a.shape();
  Shape s{as[static_cast<size_t>(perm[0])], as[static_cast<size_t>(perm[1])],
          as[static_cast<size_t>(perm[2])]};
  auto out = new_node(s);
  const int64_t d0 = as[0], d1 = as[1], d2 = as[2];
  const auto& av = a.node()->value;
  int64_t ostr[3];  // stride of source axis i in the output
  {
    int64_t strides_out[3] = {static_cast<int64_t>(s[1]) * s[2], s[2], 1};
    for (int i = 0; i < 3; ++i) ostr[perm[static_cast<size_t>(i)]] = strides_out[i];
  }
  for (int64_t i = 0; i < d0; ++i)
    for (int64_t j = 0; j < d1; ++j)
      for (int64_t k = 0; k < d2; ++k)
        out->value[static_cast<size_t>(i * ostr[0] + j * ostr[1] + k * ostr[2])] =
            av[static_cast<size_t>((i * d1 + j) * d2 + k)];
  wire(out, {a.node()}, [perm](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    const Shape& as = pa.shape;
    const int64_t d0 = as[0], d1 = as[1], d2 = as[2];
    int64_t ostr[3];
    {
      int64_t strides_out[3] = {static_cast<int64_t>(self.shape[1]) * self.shape[2], self.shape[2],
                                1};
      for (int i = 0; i < 3; ++i) ostr[perm[static_cast<size_t>(i)]] = strides_out[i];
    }
    for (int64_t i = 0; i < d0; ++i)
      for (int64_t j = 0; j < d1; ++j)
        for (int64_t k = 0; k < d2; ++k)
          pa.grad[static_cast<size_t>((i * d1 + j) * d2 + k)] +=
              self.grad[static_cast<size_t>(i * ostr[0] + j * ostr[1] + k * ostr[2])];
  });
  return Var(out);
}

Var reverse_axis(const Var& a, int axis) {
  auto out = new_node(a.shape());
  const auto d = decomp(a.shape(), axis);
  const auto& av = a.node()->value;
  for (int64_t o = 0; o < d.outer; ++o)
    for (int64_t x = 0; x < d.axis; ++x)
      std::copy_n(av.begin() + (o * d.axis + x) * d.inner, d.inner,
                  out->value.begin() + (o * d.axis + (d.axis - 1 - x)) * d.inner);
  wire(out, {a.node()}, [axis](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    const auto d = decomp(pa.shape, axis);
    for (int64_t o = 0; o < d.outer; ++o)
      for (int64_t x = 0; x < d.axis; ++x) {
        const double* src = self.grad.data() + (o * d.axis + (d.axis - 1 - x)) * d.inner;
        double* dst = pa.grad.data() + (o * d.axis + x) * d.inner;
        for (int64_t i = 0; i < d.inner; ++i) dst[i] += src[i];
      }
  });
  return Var(out);
}

// ---------------------------------------------------------------- matmul

Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = new_node({m, n});
  la::gemm(a.node()->value.data(), b.node()->value.data(), out->value.data(), m, k, n);
  wire(out, {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    pa.ensure_grad();
    pb.ensure_grad();
    // dA += dC * B^T ; dB += A^T * dC
    la::gemm_bt_acc(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
    la::gemm_at_acc(pa.value.data(), self.grad.data(), pb.grad.data(), m, k, n);
  });
  return Var(out);
}

// ---------------------------------------------------------------- conv2d

namespace {

struct ConvGeom {
  int cin, f, t;        // input
  int cout, kf, kt;     // kernel
  int sf, st, pf, pt;   // stride / pad (pt = causal left pad)
  int fo, to;           // output
};

ConvGeom conv_geom(const Shape& xs, const Shape& ws, int sf, int st, int pf) {
  if (xs.size() != 3 || ws.size() != 4) throw std::invalid_argument("conv2d: rank mismatch");
  ConvGeom g;
  g.cin = xs[0];
  g.f = xs[1];
  g.t = xs[2];
  g.cout = ws[0];
  g.kf = ws[2];
  g.kt = ws[3];
  if (ws[1] != g.cin) throw std::invalid_argument("conv2d: channel mismatch");
  g.sf = sf;
  g.st = st;
  g.pf = pf;
  g.pt = g.kt - 1;
  g.fo = (g.f + 2 * g.pf - g.kf) / g.sf + 1;
  g.to = (g.t + g.pt - g.kt) / g.st + 1;
  if (g.fo <= 0 || g.to <= 0) throw std::invalid_argument("conv2d: empty output");
  return g;
}

// cols: (cin*kf*kt, fo*to)
void im2col(const double* x, const ConvGeom& g, double* cols) {
  const int64_t span = static_cast<int64_t>(g.fo) * g.to;
  for (int c = 0; c < g.cin; ++c)
    for (int kf = 0; kf < g.kf; ++kf)
      for (int kt = 0; kt < g.kt; ++kt) {
        double* row = cols + ((static_cast<int64_t>(c) * g.kf + kf) * g.kt + kt) * span;
        for (int fo = 0; fo < g.fo; ++fo) {
          const int f = fo * g.sf + kf - g.pf;
          if (f < 0 || f >= g.f) {
            std::fill_n(row + static_cast<int64_t>(fo) * g.to, g.to, 0.0);
            continue;
          }
          const double* src = x + (static_cast<int64_t>(c) * g.f + f) * g.t;
          double* dst = row + static_cast<int64_t>(fo) * g.to;
          for (int to = 0; to < g.to; ++to) {
            const int t = to * g.st + kt - g.pt;
            dst[to] = (t < 0 || t >= g.t) ? 0.0 : src[t];
          }
        }
      }
}

// scatter-add transpose of im2col
void col2im_add(const double* cols, const ConvGeom& g, double* x) {
  const int64_t span = static_cast<int64_t>(g.fo) * g.to;
  for (int c = 0; c < g.cin; ++c)
    for (int kf = 0; kf < g.kf; ++kf)
      for (int kt = 0; kt < g.kt; ++kt) {
        const double* row = cols + ((static_cast<int64_t>(c) * g.kf + kf) * g.kt + kt) * span;
        for (int fo = 0; fo < g.fo; ++fo) {
          const int f = fo * g.sf + kf - g.pf;
          if (f < 0 || f >= g.f) continue;
          double* dst = x + (static_cast<int64_t>(c) * g.f + f) * g.t;
          const double* src = row + static_cast<int64_t>(fo) * g.to;
          for (int to = 0; to < g.to; ++to) {
            const int t = to * g.st + kt - g.pt;
            if (t >= 0 && t < g.t) dst[t] += src[to];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, int sf, int st, int pf) {
  const ConvGeom g = conv_geom(x.shape(), w.shape(), sf, st, pf);
  auto out = new_node({g.cout, g.fo, g.to});
  const int64_t span = static_cast<int64_t>(g.fo) * g.to;
  const int krows = g.cin * g.kf * g.kt;
  auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(krows) * span);
  im2col(x.node()->value.data(), g, cols->data());
  la::gemm(w.node()->value.data(), cols->data(), out->value.data(), g.cout, krows,
           static_cast<int>(span));
  wire(out, {x.node(), w.node()}, [g, cols](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    px.ensure_grad();
    pw.ensure_grad();
    const int64_t span = static_cast<int64_t>(g.fo) * g.to;
    const int krows = g.cin * g.kf * g.kt;
    // dW += dOut * cols^T
    la::gemm_bt_acc(self.grad.data(), cols->data(), pw.grad.data(), g.cout,
                    static_cast<int>(span), krows);
    // dcols = W^T * dOut, then scatter back
    std::vector<double> dcols(static_cast<size_t>(krows) * span, 0.0);
    la::gemm_at_acc(pw.value.data(), self.grad.data(), dcols.data(), g.cout, krows,
                    static_cast<int>(span));
    col2im_add(dcols.data(), g, px.grad.data());
  });
  return Var(out);
}

Var conv_transpose2d(const Var& x, const Var& w, int sf, int st, int pf, int opf) {
  // w: (cin, cout, kf, kt); the op is the linear adjoint of conv2d with the
  // same geometry, with opf extending the frequency extent.
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4) throw std::invalid_argument("conv_transpose2d: rank");
  if (ws[0] != xs[0]) throw std::invalid_argument("conv_transpose2d: channel mismatch");
  ConvGeom g;  // geometry of the *underlying forward conv* (output -> input)
  g.cin = ws[1];  // = cout of this op
  g.cout = ws[0];
  g.kf = ws[2];
  g.kt = ws[3];
  g.sf = sf;
  g.st = st;
  g.pf = pf;
  g.pt = g.kt - 1;
  g.fo = xs[1];
  g.to = xs[2];
  g.f = (g.fo - 1) * sf - 2 * pf + g.kf + opf;  // this op's output freq extent
  g.t = (g.to - 1) * st + 1;                    // causal time, length-preserving for st=1
  if (g.f <= 0) throw std::invalid_argument("conv_transpose2d: empty output");
  // sanity: the forward conv over (f,t) must reproduce (fo,to)
  if ((g.f + 2 * pf - g.kf) / sf + 1 < g.fo)
    throw std::invalid_argument("conv_transpose2d: inconsistent output padding");

  auto out = new_node({g.cin, g.f, g.t});
  const int64_t span = static_cast<int64_t>(g.fo) * g.to;
  const int krows = g.cin * g.kf * g.kt;
  // cols = W2^T(krows, cout_of_conv=ws[0]? ) -- here: G = W^T_pack * X
  // W viewed as (ws0, krows) with ws0 = xs[0]: rows indexed by input channel.
  std::vector<double> gcols(static_cast<size_t>(krows) * span, 0.0);
  la::gemm_at_acc(w.node()->value.data(), x.node()->value.data(), gcols.data(), ws[0], krows,
                  static_cast<int>(span));
  col2im_add(gcols.data(), g, out->value.data());
  wire(out, {x.node(), w.node()}, [g, ws0 = ws[0]](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    px.ensure_grad();
    pw.ensure_grad();
    const int64_t span = static_cast<int64_t>(g.fo) * g.to;
    const int krows = g.cin * g.kf * g.kt;
    // dX = W2 * im2col(dOut); dW2 += X * im2col(dOut)^T
    std::vector<double> cols(static_cast<size_t>(krows) * span);
    im2col(self.grad.data(), g, cols.data());
    la::gemm_acc(pw.value.data(), cols.data(), px.grad.data(), ws0, krows,
                 static_cast<int>(span));
    la::gemm_bt_acc(px.value.data(), cols.data(), pw.grad.data(), ws0, static_cast<int>(span),
                    krows);
  });
  return Var(out);
}

Var add_channel_bias(const Var& x, const Var& b) {
  if (x.shape().size() != 3 || b.numel() != x.shape()[0])
    throw std::invalid_argument("add_channel_bias: shape mismatch");
  auto out = new_node(x.shape());
  const int c = x.shape()[0];
  const int64_t plane = static_cast<int64_t>(x.shape()[1]) * x.shape()[2];
  const auto& xv = x.node()->value;
  const auto& bv = b.node()->value;
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < plane; ++i) out->value[ch * plane + i] = xv[ch * plane + i] + bv[ch];
  wire(out, {x.node(), b.node()}, [c, plane](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    px.ensure_grad();
    pb.ensure_grad();
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) {
        const double g = self.grad[ch * plane + i];
        px.grad[ch * plane + i] += g;
        acc += g;
      }
      pb.grad[ch] += acc;
    }
  });
  return Var(out);
}

// ---------------------------------------------------------------- LSTM

namespace {

struct LstmStash {
  // per step: gates after activation (B,4H) and cell states
  std::vector<double> gates;   // T*B*4H  (i,f,g,o)
  std::vector<double> cells;   // T*B*H
  std::vector<double> tanh_c;  // T*B*H
};

}  // namespace

Var lstm_seq(const Var& x, const Var& w, const Var& u, const Var& b) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw std::invalid_argument("lstm_seq: x must be (T,B,D)");
  const int T = xs[0], B = xs[1], D = xs[2];
  if (w.shape().size() != 2 || u.shape().size() != 2)
    throw std::invalid_argument("lstm_seq: bad parameter rank");
  const int H4 = w.shape()[0];
  const int H = H4 / 4;
  if (H4 % 4 != 0 || w.shape()[1] != D || u.shape()[0] != H4 || u.shape()[1] != H ||
      b.numel() != H4)
    throw std::invalid_argument("lstm_seq: parameter shape mismatch");

  auto out = new_node({T, B, H});
  auto stash = std::make_shared<LstmStash>();
  stash->gates.assign(static_cast<size_t>(T) * B * H4, 0.0);
  stash->cells.assign(static_cast<size_t>(T) * B * H, 0.0);
  stash->tanh_c.assign(static_cast<size_t>(T) * B * H, 0.0);

  const double* xv = x.node()->value.data();
  const double* wv = w.node()->value.data();
  const double* uv = u.node()->value.data();
  const double* bv = b.node()->value.data();

  // input contribution for every step at once: (T*B, D) x (D, 4H)
  std::vector<double> xw(static_cast<size_t>(T) * B * H4);
  {
    for (int64_t r = 0; r < static_cast<int64_t>(T) * B; ++r)
      for (int j = 0; j < H4; ++j) xw[static_cast<size_t>(r * H4 + j)] = bv[j];
    la::gemm_bt_acc(xv, wv, xw.data(), T * B, D, H4);
  }

  std::vector<double> pre(static_cast<size_t>(B) * H4);
  std::vector<double> h_prev(static_cast<size_t>(B) * H, 0.0);
  std::vector<double> c_prev(static_cast<size_t>(B) * H, 0.0);

  for (int t = 0; t < T; ++t) {
    std::copy_n(xw.begin() + static_cast<int64_t>(t) * B * H4, static_cast<int64_t>(B) * H4,
                pre.begin());
    // pre += H_prev * U^T
    la::gemm_bt_acc(h_prev.data(), uv, pre.data(), B, H, H4);
    double* gates_t = stash->gates.data() + static_cast<int64_t>(t) * B * H4;
    double* cells_t = stash->cells.data() + static_cast<int64_t>(t) * B * H;
    double* tanh_t = stash->tanh_c.data() + static_cast<int64_t>(t) * B * H;
    double* h_t = out->value.data() + static_cast<int64_t>(t) * B * H;
    for (int r = 0; r < B; ++r) {
      const double* p = pre.data() + static_cast<size_t>(r) * H4;
      double* gr = gates_t + static_cast<size_t>(r) * H4;
      for (int j = 0; j < H; ++j) {
        const double ig = 1.0 / (1.0 + std::exp(-p[j]));
        const double fg = 1.0 / (1.0 + std::exp(-p[H + j]));
        const double gg = std::tanh(p[2 * H + j]);
        const double og = 1.0 / (1.0 + std::exp(-p[3 * H + j]));
        gr[j] = ig;
        gr[H + j] = fg;
        gr[2 * H + j] = gg;
        gr[3 * H + j] = og;
        const double c = fg * c_prev[static_cast<size_t>(r) * H + j] + ig * gg;
        const double tc = std::tanh(c);
        cells_t[static_cast<size_t>(r) * H + j] = c;
        tanh_t[static_cast<size_t>(r) * H + j] = tc;
        h_t[static_cast<size_t>(r) * H + j] = og * tc;
      }
    }
    std::copy_n(h_t, static_cast<size_t>(B) * H, h_prev.data());
    std::copy_n(cells_t, static_cast<size_t>(B) * H, c_prev.data());
  }

  wire(out, {x.node(), w.node(), u.node(), b.node()}, [T, B, D, H, H4, stash](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pu = *self.parents[2];
    Node& pb = *self.parents[3];
    px.ensure_grad();
    pw.ensure_grad();
    pu.ensure_grad();
    pb.ensure_grad();

    std::vector<double> dh_next(static_cast<size_t>(B) * H, 0.0);
    std::vector<double> dc_next(static_cast<size_t>(B) * H, 0.0);
    std::vector<double> dgate_all(static_cast<size_t>(T) * B * H4);

    for (int t = T - 1; t >= 0; --t) {
      double* dgate = dgate_all.data() + static_cast<int64_t>(t) * B * H4;
      const double* gates_t = stash->gates.data() + static_cast<int64_t>(t) * B * H4;
      const double* cells_t = stash->cells.data() + static_cast<int64_t>(t) * B * H;
      const double* tanh_t = stash->tanh_c.data() + static_cast<int64_t>(t) * B * H;
      const double* cells_prev =
          t > 0 ? stash->cells.data() + static_cast<int64_t>(t - 1) * B * H : nullptr;
      const double* h_prev =
          t > 0 ? self.value.data() + static_cast<int64_t>(t - 1) * B * H : nullptr;
      const double* dh_seq = self.grad.data() + static_cast<int64_t>(t) * B * H;

      for (int r = 0; r < B; ++r) {
        const double* gr = gates_t + static_cast<size_t>(r) * H4;
        double* dg = dgate + static_cast<size_t>(r) * H4;
        for (int j = 0; j < H; ++j) {
          const size_t rj = static_cast<size_t>(r) * H + j;
          const double dh = dh_seq[rj] + dh_next[rj];
          const double ig = gr[j], fg = gr[H + j], gg = gr[2 * H + j], og = gr[3 * H + j];
          const double tc = tanh_t[rj];
          const double do_ = dh * tc;
          double dc = dh * og * (1.0 - tc * tc) + dc_next[rj];
          const double di = dc * gg;
          const double dgg = dc * ig;
          const double cprev = cells_prev ? cells_prev[rj] : 0.0;
          const double df = dc * cprev;
          dc_next[rj] = dc * fg;
          dg[j] = di * ig * (1.0 - ig);
          dg[H + j] = df * fg * (1.0 - fg);
          dg[2 * H + j] = dgg * (1.0 - gg * gg);
          dg[3 * H + j] = do_ * og * (1.0 - og);
          (void)cells_t;
        }
      }
      // recurrent-path gradients stay per step
      if (t > 0) {
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        la::gemm_acc(dgate, pu.value.data(), dh_next.data(), B, H4, H);
        la::gemm_at_acc(dgate, h_prev, pu.grad.data(), B, H4, H);
      }
    }
    // batched input-path gradients over all steps
    la::gemm_acc(dgate_all.data(), pw.value.data(), px.grad.data(), T * B, H4, D);
    la::gemm_at_acc(dgate_all.data(), px.value.data(), pw.grad.data(), T * B, H4, D);
    for (int64_t r = 0; r < static_cast<int64_t>(T) * B; ++r)
      for (int j = 0; j < H4; ++j) pb.grad[j] += dgate_all[static_cast<size_t>(r * H4 + j)];
  });
  return Var(out);
}

Var instance_norm_affine(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.shape().size() != 3) throw std::invalid_argument("instance_norm: (C,F,T) input expected");
  const int c = x.shape()[0];
  const int64_t plane = static_cast<int64_t>(x.shape()[1]) * x.shape()[2];
  if (gamma.numel() != c || beta.numel() != c)
    throw std::invalid_argument("instance_norm: affine parameter shape mismatch");
  auto out = new_node(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(c) * plane);
  auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
  const auto& xv = x.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  for (int ch = 0; ch < c; ++ch) {
    const double* src = xv.data() + ch * plane;
    double mu = 0.0;
    for (int64_t i = 0; i < plane; ++i) mu += src[i];
    mu /= static_cast<double>(plane);
    double var = 0.0;
    for (int64_t i = 0; i < plane; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(ch)] = inv;
    double* xh = xhat->data() + ch * plane;
    double* dst = out->value.data() + ch * plane;
    const double g = gv[static_cast<size_t>(ch)], b = bv[static_cast<size_t>(ch)];
    for (int64_t i = 0; i < plane; ++i) {
      xh[i] = (src[i] - mu) * inv;
      dst[i] = g * xh[i] + b;
    }
  }
  wire(out, {x.node(), gamma.node(), beta.node()}, [c, plane, xhat, inv_sigma](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    px.ensure_grad();
    pg.ensure_grad();
    pb.ensure_grad();
    for (int ch = 0; ch < c; ++ch) {
      const double* dy = self.grad.data() + ch * plane;
      const double* xh = xhat->data() + ch * plane;
      double sum_dy = 0.0, sum_dyxh = 0.0;
      for (int64_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dyxh += dy[i] * xh[i];
      }
      pg.grad[static_cast<size_t>(ch)] += sum_dyxh;
      pb.grad[static_cast<size_t>(ch)] += sum_dy;
      const double g = pg.value[static_cast<size_t>(ch)];
      const double inv = (*inv_sigma)[static_cast<size_t>(ch)];
      const double mean_dy = sum_dy / static_cast<double>(plane);
      const double mean_dyxh = sum_dyxh / static_cast<double>(plane);
      double* dx = px.grad.data() + ch * plane;
      for (int64_t i = 0; i < plane; ++i)
        dx[i] += g * inv * (dy[i] - mean_dy - xh[i] * mean_dyxh);
    }
  });
  return Var(out);
}

// ---------------------------------------------------------------- signal ops

Var reflect_pad(const Var& x, int p) {
  if (x.shape().size() != 1) throw std::invalid_argument("reflect_pad: 1-d only");
  const int n = x.shape()[0];
  if (p >= n) throw std::invalid_argument("reflect_pad: signal shorter than pad");
  auto out = new_node({n + 2 * p});
  const auto& xv = x.node()->value;
  for (int i = 0; i < p; ++i) out->value[static_cast<size_t>(i)] = xv[static_cast<size_t>(p - i)];
  std::copy(xv.begin(), xv.end(), out->value.begin() + p);
  for (int i = 0; i < p; ++i)
    out->value[static_cast<size_t>(p + n + i)] = xv[static_cast<size_t>(n - 2 - i)];
  wire(out, {x.node()}, [n, p](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    for (int i = 0; i < p; ++i) px.grad[static_cast<size_t>(p - i)] += self.grad[static_cast<size_t>(i)];
    for (int i = 0; i < n; ++i) px.grad[static_cast<size_t>(i)] += self.grad[static_cast<size_t>(p + i)];
    for (int i = 0; i < p; ++i)
      px.grad[static_cast<size_t>(n - 2 - i)] += self.grad[static_cast<size_t>(p + n + i)];
  });
  return Var(out);
}

Var gather_frames(const Var& x, std::vector<int> starts, int len) {
  if (x.shape().size() != 1) throw std::invalid_argument("gather_frames: 1-d only");
  const int n = x.shape()[0];
  for (int s : starts)
    if (s < 0 || s + len > n) throw std::invalid_argument("gather_frames: frame out of range");
  const int m = static_cast<int>(starts.size());
  auto out = new_node({m, len});
  const auto& xv = x.node()->value;
  for (int i = 0; i < m; ++i)
    std::copy_n(xv.begin() + starts[static_cast<size_t>(i)], len,
                out->value.begin() + static_cast<int64_t>(i) * len);
  wire(out, {x.node()}, [starts = std::move(starts), len](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    for (size_t i = 0; i < starts.size(); ++i) {
      const double* src = self.grad.data() + static_cast<int64_t>(i) * len;
      double* dst = px.grad.data() + starts[i];
      for (int j = 0; j < len; ++j) dst[j] += src[j];
    }
  });
  return Var(out);
}

Var mul_rowvec(const Var& x, std::vector<double> w) {
  if (x.shape().size() != 2 || x.shape()[1] != static_cast<int>(w.size()))
    throw std::invalid_argument("mul_rowvec: shape mismatch");
  const int m = x.shape()[0], n = x.shape()[1];
  auto out = new_node(x.shape());
  const auto& xv = x.node()->value;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out->value[static_cast<int64_t>(i) * n + j] = xv[static_cast<int64_t>(i) * n + j] * w[static_cast<size_t>(j)];
  wire(out, {x.node()}, [w = std::move(w), m, n](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        px.grad[static_cast<int64_t>(i) * n + j] +=
            self.grad[static_cast<int64_t>(i) * n + j] * w[static_cast<size_t>(j)];
  });
  return Var(out);
}

Var overlap_add(const Var& frames, int hop, int out_len) {
  if (frames.shape().size() != 2) throw std::invalid_argument("overlap_add: (M,N) input");
  const int m = frames.shape()[0], n = frames.shape()[1];
  auto out = new_node({out_len});
  const auto& fv = frames.node()->value;
  for (int i = 0; i < m; ++i) {
    const int base = i * hop;
    for (int j = 0; j < n; ++j) {
      const int t = base + j;
      if (t >= 0 && t < out_len) out->value[static_cast<size_t>(t)] += fv[static_cast<int64_t>(i) * n + j];
    }
  }
  wire(out, {frames.node()}, [hop, m, n, out_len](Node& self) {
    Node& pf = *self.parents[0];
    pf.ensure_grad();
    for (int i = 0; i < m; ++i) {
      const int base = i * hop;
      for (int j = 0; j < n; ++j) {
        const int t = base + j;
        if (t >= 0 && t < out_len) pf.grad[static_cast<int64_t>(i) * n + j] += self.grad[static_cast<size_t>(t)];
      }
    }
  });
  return Var(out);
}

Var div_vec(const Var& x, std::vector<double> d) {
  if (x.shape().size() != 1 || x.numel() != static_cast<int64_t>(d.size()))
    throw std::invalid_argument("div_vec: shape mismatch");
  auto out = new_node(x.shape());
  const auto& xv = x.node()->value;
  for (size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] / d[i];
  wire(out, {x.node()}, [d = std::move(d)](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] / d[i];
  });
  return Var(out);
}

Var rfft_rows(const Var& x, int nfft) {
  if (x.shape().size() != 2) throw std::invalid_argument("rfft_rows: (M,N) input");
  if (!fft::is_pow2(nfft)) throw std::invalid_argument("rfft_rows: nfft must be a power of two");
  const int m = x.shape()[0], n = x.shape()[1];
  if (n > nfft) throw std::invalid_argument("rfft_rows: frame longer than nfft");
  const int bins = nfft / 2 + 1;
  auto out = new_node({m, 2 * bins});
  const auto& xv = x.node()->value;
  for (int i = 0; i < m; ++i) {
    double* row = out->value.data() + static_cast<int64_t>(i) * 2 * bins;
    fft::rfft(xv.data() + static_cast<int64_t>(i) * n, n, nfft, row, row + bins);
  }
  wire(out, {x.node()}, [m, n, nfft, bins](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    std::vector<double> gx(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
      const double* row = self.grad.data() + static_cast<int64_t>(i) * 2 * bins;
      fft::rfft_adjoint(row, row + bins, nfft, n, gx.data());
      double* dst = px.grad.data() + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) dst[j] += gx[static_cast<size_t>(j)];
    }
  });
  return Var(out);
}

Var irfft_rows(const Var& x, int nfft) {
  if (x.shape().size() != 2) throw std::invalid_argument("irfft_rows: (M,2K) input");
  if (!fft::is_pow2(nfft)) throw std::invalid_argument("irfft_rows: nfft must be a power of two");
  const int bins = nfft / 2 + 1;
  if (x.shape()[1] != 2 * bins) throw std::invalid_argument("irfft_rows: packed width mismatch");
  const int m = x.shape()[0];
  auto out = new_node({m, nfft});
  const auto& xv = x.node()->value;
  for (int i = 0; i < m; ++i) {
    const double* row = xv.data() + static_cast<int64_t>(i) * 2 * bins;
    fft::irfft(row, row + bins, nfft, out->value.data() + static_cast<int64_t>(i) * nfft);
  }
  wire(out, {x.node()}, [m, nfft, bins](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    std::vector<double> gre(static_cast<size_t>(bins)), gim(static_cast<size_t>(bins));
    for (int i = 0; i < m; ++i) {
      fft::irfft_adjoint(self.grad.data() + static_cast<int64_t>(i) * nfft, nfft, gre.data(),
                         gim.data());
      double* dst = px.grad.data() + static_cast<int64_t>(i) * 2 * bins;
      for (int k = 0; k < bins; ++k) {
        dst[k] += gre[static_cast<size_t>(k)];
        dst[bins + k] += gim[static_cast<size_t>(k)];
      }
    }
  });
  return Var(out);
}

}  // namespace silp::ad
