#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "inrattr/errors.hpp"
#include "inrattr/rng.hpp"

namespace inrattr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 tensor. Gradient storage exists iff requires_grad
/// is set and always matches the data extent.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, float fill, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;  // same extent as data when requires_grad

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  void set_requires_grad(bool on);
  void zero_grad();
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
TensorPtr tensor(Shape shape, std::vector<float> values, bool requires_grad = false);
TensorPtr scalar(float value, bool requires_grad = false);
TensorPtr randn(Shape shape, SeededRng& rng, double stddev = 1.0, bool requires_grad = false);

/// Reverse-mode tape. Operations append entries in execution order; backward
/// replays them in exact reverse order. A tape may be consumed by backward
/// once; recording onto it again resets that state.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records one operation. The closure propagates output->grad into the
  /// inputs' grads. Only called for outputs that require grad.
  void record(const char* kind, TensorPtr output, std::function<void()> backward);

  /// Seeds root's gradient with ones and propagates. Root must be scalar.
  void backward(const TensorPtr& root);

  /// Seeds root's gradient with the given upstream values and propagates.
  void backward(const TensorPtr& root, std::span<const float> upstream);

  /// Drops all recorded entries and re-arms backward.
  void clear();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* kind;
    TensorPtr output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Result of vecsort: sorted values plus the permutation such that
/// sorted[i] == input[permutation[i]]. Ties keep original order.
struct SortResult {
  TensorPtr sorted;
  std::vector<std::size_t> permutation;
};

enum class Padding { same, valid };

namespace op {

// Pointwise binary ops. Tensor operands must have identical shapes.
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape& tape, const TensorPtr& a, float b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, float a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, float b);
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& tape, const TensorPtr& a, float b);
TensorPtr div(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr div(Tape& tape, const TensorPtr& a, float b);

// Pointwise unary ops.
TensorPtr square(Tape& tape, const TensorPtr& a);
TensorPtr clamp(Tape& tape, const TensorPtr& a, float lo, float hi);
TensorPtr relu(Tape& tape, const TensorPtr& a);
TensorPtr sigmoid(Tape& tape, const TensorPtr& a);
TensorPtr sin(Tape& tape, const TensorPtr& a);
TensorPtr cos(Tape& tape, const TensorPtr& a);
TensorPtr log(Tape& tape, const TensorPtr& a);

/// [m x k] * [k x n] -> [m x n].
TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);

/// Adds a [1 x n] row vector to every row of [m x n].
TensorPtr add_rowvec(Tape& tape, const TensorPtr& a, const TensorPtr& row);

/// Cross-correlation: input [c x h x w], kernel [o x c x kh x kw], stride 1.
/// "same" zero-pads to preserve h x w; "valid" shrinks.
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 Padding padding);

/// Adds bias[o] to each channel plane of [o x h x w].
TensorPtr bias_add(Tape& tape, const TensorPtr& a, const TensorPtr& bias);

/// [c x h x w] -> [1 x c], mean over the spatial plane per channel.
TensorPtr global_avg_pool(Tape& tape, const TensorPtr& a);

/// Same data, new shape (extent-preserving).
TensorPtr reshape(Tape& tape, const TensorPtr& a, Shape shape);

/// [h x w] -> [c x h x w], replicating the plane.
TensorPtr broadcast_channels(Tape& tape, const TensorPtr& a, std::size_t channels);

/// Bilinear resize [h0 x w0] -> [h x w], corner-aligned.
TensorPtr upsample_bilinear(Tape& tape, const TensorPtr& a, std::size_t h, std::size_t w);

// Full reductions to a [1] scalar. Accumulate in double.
TensorPtr reduce_sum(Tape& tape, const TensorPtr& a);
TensorPtr reduce_mean(Tape& tape, const TensorPtr& a);

/// Numerically stabilized softmax over a rank-1 tensor.
TensorPtr softmax(Tape& tape, const TensorPtr& logits);

/// Stable sort of a rank-1 tensor. Gradient scatters through the permutation.
SortResult vecsort(Tape& tape, const TensorPtr& a, bool ascending = true);

/// Single-plane correlation with a fixed (non-differentiable) kernel,
/// reflect-101 border handling. Input [h x w], kernel [kh x kw] with odd
/// extents. Differentiable in the input.
TensorPtr conv2d_reflect(Tape& tape, const TensorPtr& input,
                         std::span<const float> kernel, std::size_t kh, std::size_t kw);

}  // namespace op

namespace detail {
/// Throws NonFiniteError when any value is not finite.
void ensure_finite(const char* kind, const Tensor& t);
/// Raw kernel: C[m x n] (+)= A[m x k] * B[k x n], fixed summation order.
void matmul_raw(const float* a, const float* b, float* c, std::size_t m,
                std::size_t k, std::size_t n, bool accumulate);
}  // namespace detail

}  // namespace inrattr
