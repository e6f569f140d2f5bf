#pragma once

// Reverse-mode automatic differentiation on dense real-valued tensors.
//
// Every Var wraps a node in a dynamically built computation graph. Calling
// backward() on a scalar Var runs the recorded adjoints in reverse
// topological order and accumulates gradients into every reachable leaf
// created with requires_grad = true. Complex quantities elsewhere in the
// library are represented as independent real/imaginary Var pairs, so a
// complex parameter receives a gradient for each part.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace silp::ad {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily during backward
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // scatters this->grad into parents

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad();
};

using NodeRef = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodeRef n) : node_(std::move(n)) {}

  static Var leaf(Shape shape, std::vector<double> value, bool requires_grad = false);
  static Var scalar(double v);
  static Var constant(Shape shape, std::vector<double> value) {
    return leaf(std::move(shape), std::move(value), false);
  }
  static Var zeros(Shape shape, bool requires_grad = false);
  static Var full(Shape shape, double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  double item() const;
  bool needs_grad() const { return node_->needs_grad; }

  NodeRef node() const { return node_; }

 private:
  NodeRef node_;
};

// Runs reverse-mode accumulation from a scalar root. Throws if the root is
// not a scalar or its value is non-finite.
void backward(const Var& root);

// Clears the gradient buffers of the given leaves (used between steps).
void zero_grad(std::span<Var> leaves);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var sqrt_of(const Var& a);                 // d/dx = 1/(2 sqrt)
Var sqrt_guarded(const Var& a, double floor_eps);  // sqrt(x + eps)
Var log_of(const Var& a);
Var exp_of(const Var& a);
Var tanh_of(const Var& a);
Var sigmoid(const Var& a);
Var abs_of(const Var& a);  // subgradient sign(x), 0 at 0
Var square(const Var& a);
Var minimum(const Var& a, const Var& b);  // ties take a's branch
Var prelu(const Var& x, const Var& slope);  // slope: scalar leaf
// Four-quadrant phase of (y, x); gradient denominator is x^2+y^2+guard.
Var atan2_of(const Var& y, const Var& x, double grad_guard = 1e-16);
// Wraps angles to (-pi, pi]; derivative 1 almost everywhere.
Var wrap_angle(const Var& a);

// ---- reductions / broadcasting ----
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_lastdim(const Var& a);          // (..., n) -> (..., 1)
Var tile_lastdim(const Var& a, int n);  // (..., 1) -> (..., n)
// sum(a * w) with constant weights, as one node
Var weighted_sum(const Var& a, std::span<const double> w);

// ---- structure ----
Var reshape(const Var& a, Shape s);
Var concat(int axis, std::span<const Var> parts);
Var concat2(int axis, const Var& a, const Var& b);
Var slice(const Var& a, int axis, int start, int len);
Var permute3(const Var& a, std::array<int, 3> perm);  // 3-d only
Var reverse_axis(const Var& a, int axis);

// ---- linear algebra ----
// (m,k) x (k,n) -> (m,n), row-major
Var matmul(const Var& a, const Var& b);

// ---- neural-net fused ops ----
// x: (Cin, F, T), w: (Cout, Cin, KF, KT), stride (sf, st), symmetric
// frequency padding pf; time padding is causal: KT-1 zeros on the left.
Var conv2d(const Var& x, const Var& w, int sf, int st, int pf);
// Transposed convolution along frequency. out_F = (F-1)*sf - 2*pf + KF + opf
Var conv_transpose2d(const Var& x, const Var& w, int sf, int st, int pf, int opf);
// Adds a per-channel bias b(C) to x(C, F, T).
Var add_channel_bias(const Var& x, const Var& b);

// One directional LSTM pass over a batch of sequences.
// x: (T, B, D), w: (4H, D), u: (4H, H), b: (4H); returns (T, B, H).
// Gate order in the packed matrices is input, forget, cell, output.
Var lstm_seq(const Var& x, const Var& w, const Var& u, const Var& b);

// Per-channel normalization with affine parameters in one fused node:
// x (C, F, T) normalized over (F, T) per channel, y = gamma*(x-mu)/sigma + beta.
Var instance_norm_affine(const Var& x, const Var& gamma, const Var& beta, double eps);

// ---- linear signal ops (shared kernels with silp::dsp) ----
// Reflect-pads a 1-d signal by p samples on each side (no edge repeat).
Var reflect_pad(const Var& x, int p);
// Gathers rows x[start_i .. start_i+len) into an (M, len) matrix.
Var gather_frames(const Var& x, std::vector<int> starts, int len);
// Multiplies every row of (M, N) by a constant window of length N.
Var mul_rowvec(const Var& x, std::vector<double> w);
// Overlap-adds (M, N) rows at the given hop into a length out_len signal.
Var overlap_add(const Var& frames, int hop, int out_len);
// Divides a 1-d signal elementwise by a constant vector.
Var div_vec(const Var& x, std::vector<double> d);
// Real FFT of every row, zero-padded to nfft. Output (M, 2K), K = nfft/2+1,
// packed [re | im] per row.
Var rfft_rows(const Var& x, int nfft);
// Inverse of rfft_rows: (M, 2K) packed -> (M, nfft) real rows.
Var irfft_rows(const Var& x, int nfft);

}  // namespace silp::ad
