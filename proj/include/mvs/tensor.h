#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <vector>

namespace mvs {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& shape);

/// Dense fp64 n-d array with reverse-mode automatic differentiation.
///
/// A Tensor is an immutable value: ops return new tensors and record the
/// operation on an implicit tape (creation order). backward() on a scalar
/// result replays the tape in reverse creation order, accumulating
/// gradients into every reachable tensor that requires_grad.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    uint64_t seq = 0;  // creation order, defines reverse-replay order
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad, accumulates into parents' grad buffers.
    std::function<void(Node&)> backprop;

    void ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
  };

  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double v, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor uniform(const Shape& shape, double lo, double hi,
                        std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  size_t ndim() const { return shape().size(); }
  size_t dim(size_t axis) const;
  size_t numel() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  double scalar_value() const;
  double at(std::initializer_list<size_t> idx) const;

  bool has_grad() const;
  const std::vector<double>& grad() const;

  /// Backpropagate from a scalar result through the recorded graph.
  void backward() const;

  /// Value copy that is cut off from the graph (no gradient flows through).
  Tensor detach(bool requires_grad = false) const;

  /// Low-level constructor for custom differentiable ops.
  static Tensor make_op(Shape shape, std::vector<double> value,
                        std::vector<std::shared_ptr<Node>> parents,
                        std::function<void(Node&)> backprop);

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// ---- elementwise ops (numpy-style broadcasting for the binary ones) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor log(const Tensor& a);  // input must be strictly positive
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<size_t>& axes, bool keepdims = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<size_t>& axes, bool keepdims = false);

/// max over one axis; indices are not differentiated, values are.
struct MaxResult {
  Tensor values;                // reduced shape (axis removed)
  std::vector<size_t> argmax;   // same layout as values
};
MaxResult max_along(const Tensor& a, size_t axis);

// ---- structural ops ----
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

/// out[rest] = a[idx[rest], rest] for a of shape [D, rest...].
Tensor gather_along0(const Tensor& a, const std::vector<size_t>& idx);

/// out[rest] = sum_{j=start[rest]}^{start[rest]+window-1} a[j, rest].
Tensor window_sum_along0(const Tensor& a, const std::vector<size_t>& start,
                         size_t window);

// ---- nn ops ----
Tensor softmax(const Tensor& a, size_t axis);

/// Cross-correlation of input [C,H,W] with kernels [O,C,kh,kw] plus bias [O];
/// zero padding, odd kernel extents.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              size_t stride, size_t padding);

/// Cross-correlation of input [C,D,H,W] with kernels [O,C,kd,kh,kw] plus
/// bias [O]; stride 1, zero padding.
Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              size_t padding);

/// Nearest-neighbor 2x upsampling of [C,H,W].
Tensor upsample_nearest2x(const Tensor& a);

/// Bilinear resample of [H,W] or [C,H,W] to (out_h, out_w), half-pixel
/// centers, edge clamped.
Tensor upsample_bilinear(const Tensor& a, size_t out_h, size_t out_w);

}  // namespace mvs
