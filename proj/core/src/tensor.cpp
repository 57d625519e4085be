#include "inrattr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <utility>

namespace inrattr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape_in, float fill, bool rg)
    : shape(std::move(shape_in)),
      data(shape_numel(shape), fill),
      requires_grad(rg),
      grad(rg ? data.size() : 0, 0.0f) {}

Tensor::Tensor(Shape shape_in, std::vector<float> values, bool rg)
    : shape(std::move(shape_in)), data(std::move(values)), requires_grad(rg) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  if (rg) grad.assign(data.size(), 0.0f);
}

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  grad.assign(on ? data.size() : 0, 0.0f);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0f);
}

TensorPtr tensor(Shape shape, float fill, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), fill, requires_grad);
}

TensorPtr tensor(Shape shape, std::vector<float> values, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
}

TensorPtr scalar(float value, bool requires_grad) {
  return tensor(Shape{1}, std::vector<float>{value}, requires_grad);
}

TensorPtr randn(Shape shape, SeededRng& rng, double stddev, bool requires_grad) {
  auto t = tensor(std::move(shape), 0.0f, requires_grad);
  for (auto& v : t->data) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

void Tape::record(const char* kind, TensorPtr output, std::function<void()> backward) {
  consumed_ = false;
  nodes_.push_back(Node{kind, std::move(output), std::move(backward)});
}

void Tape::backward(const TensorPtr& root) {
  if (!root || root->size() != 1) {
    throw TapeError("backward: root must be a scalar tensor");
  }
  const float one = 1.0f;
  backward(root, std::span<const float>(&one, 1));
}

void Tape::backward(const TensorPtr& root, std::span<const float> upstream) {
  if (consumed_) {
    throw TapeError("backward: tape already consumed; re-record before calling again");
  }
  if (!root || !root->requires_grad) {
    throw TapeError("backward: root does not require grad");
  }
  if (upstream.size() != root->size()) {
    throw TapeError("backward: upstream extent does not match root");
  }
  for (std::size_t i = 0; i < upstream.size(); ++i) root->grad[i] += upstream[i];
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }
  consumed_ = true;
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

namespace detail {

void ensure_finite(const char* kind, const Tensor& t) {
  for (float v : t.data) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(kind) + ": non-finite value in result");
    }
  }
}

void matmul_raw(const float* a, const float* b, float* c, std::size_t m,
                std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, sizeof(float) * n);
    const float* arow = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const float at = arow[t];
      const float* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += at * brow[j];
    }
  }
}

// db[k x n] += a^T[k x m] * dc[m x n], streaming rows of a and dc.
void matmul_at_b_raw(const float* a, const float* dc, float* db, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    const float* dcrow = dc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const float at = arow[t];
      float* dbrow = db + t * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += at * dcrow[j];
    }
  }
}

}  // namespace detail

namespace op {
namespace {

void check_same_shape(const char* kind, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(kind) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
  }
}

TensorPtr result_like(const Tensor& a, bool requires_grad) {
  return tensor(a.shape, 0.0f, requires_grad);
}

bool wants_grad(const TensorPtr& a) { return a && a->requires_grad; }

template <typename Fwd, typename Bwd>
TensorPtr binary_ew(Tape& tape, const char* kind, const TensorPtr& a,
                    const TensorPtr& b, Fwd fwd, Bwd bwd) {
  check_same_shape(kind, *a, *b);
  auto out = result_like(*a, wants_grad(a) || wants_grad(b));
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(a->data[i], b->data[i]);
  detail::ensure_finite(kind, *out);
  if (out->requires_grad) {
    tape.record(kind, out, [a, b, out, bwd]() {
      const std::size_t n = out->size();
      for (std::size_t i = 0; i < n; ++i) {
        bwd(out->grad[i], a->data[i], b->data[i],
            a->requires_grad ? &a->grad[i] : nullptr,
            b->requires_grad ? &b->grad[i] : nullptr);
      }
    });
  }
  return out;
}

template <typename Fwd, typename Bwd>
TensorPtr unary_ew(Tape& tape, const char* kind, const TensorPtr& a, Fwd fwd, Bwd bwd) {
  auto out = result_like(*a, wants_grad(a));
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(a->data[i]);
  detail::ensure_finite(kind, *out);
  if (out->requires_grad) {
    tape.record(kind, out, [a, out, bwd]() {
      const std::size_t n = out->size();
      for (std::size_t i = 0; i < n; ++i) {
        a->grad[i] += out->grad[i] * bwd(a->data[i], out->data[i]);
      }
    });
  }
  return out;
}

TensorPtr constant_like(const Tensor& a, float value) {
  return tensor(a.shape, value, false);
}

float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    return 1.0f / (1.0f + std::exp(-x));
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

std::size_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(
      tape, "add", a, b, [](float x, float y) { return x + y; },
      [](float g, float, float, float* da, float* db) {
        if (da) *da += g;
        if (db) *db += g;
      });
}

TensorPtr add(Tape& tape, const TensorPtr& a, float b) {
  return add(tape, a, constant_like(*a, b));
}

TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(
      tape, "sub", a, b, [](float x, float y) { return x - y; },
      [](float g, float, float, float* da, float* db) {
        if (da) *da += g;
        if (db) *db -= g;
      });
}

TensorPtr sub(Tape& tape, float a, const TensorPtr& b) {
  return sub(tape, constant_like(*b, a), b);
}

TensorPtr sub(Tape& tape, const TensorPtr& a, float b) {
  return sub(tape, a, constant_like(*a, b));
}

TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(
      tape, "mul", a, b, [](float x, float y) { return x * y; },
      [](float g, float x, float y, float* da, float* db) {
        if (da) *da += g * y;
        if (db) *db += g * x;
      });
}

TensorPtr mul(Tape& tape, const TensorPtr& a, float b) {
  return mul(tape, a, constant_like(*a, b));
}

TensorPtr div(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("div", *a, *b);
  for (float y : b->data) {
    if (y == 0.0f) throw NonFiniteError("div: zero denominator element");
  }
  return binary_ew(
      tape, "div", a, b, [](float x, float y) { return x / y; },
      [](float g, float x, float y, float* da, float* db) {
        if (da) *da += g / y;
        if (db) *db -= g * x / (y * y);
      });
}

TensorPtr div(Tape& tape, const TensorPtr& a, float b) {
  return div(tape, a, constant_like(*a, b));
}

TensorPtr square(Tape& tape, const TensorPtr& a) {
  return unary_ew(
      tape, "square", a, [](float x) { return x * x; },
      [](float x, float) { return 2.0f * x; });
}

TensorPtr clamp(Tape& tape, const TensorPtr& a, float lo, float hi) {
  if (!(lo <= hi)) throw Error("clamp: lo must not exceed hi");
  return unary_ew(
      tape, "clamp", a,
      [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
      // Subgradient 0 at the bounds themselves.
      [lo, hi](float x, float) { return (x > lo && x < hi) ? 1.0f : 0.0f; });
}

TensorPtr relu(Tape& tape, const TensorPtr& a) {
  return unary_ew(
      tape, "relu", a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

TensorPtr sigmoid(Tape& tape, const TensorPtr& a) {
  return unary_ew(
      tape, "sigmoid", a, [](float x) { return stable_sigmoid(x); },
      [](float, float y) { return y * (1.0f - y); });
}

TensorPtr sin(Tape& tape, const TensorPtr& a) {
  return unary_ew(
      tape, "sin", a, [](float x) { return std::sin(x); },
      [](float x, float) { return std::cos(x); });
}

TensorPtr cos(Tape& tape, const TensorPtr& a) {
  return unary_ew(
      tape, "cos", a, [](float x) { return std::cos(x); },
      [](float x, float) { return -std::sin(x); });
}

TensorPtr log(Tape& tape, const TensorPtr& a) {
  for (float x : a->data) {
    if (!(x > 0.0f)) throw NonFiniteError("log: non-positive input");
  }
  return unary_ew(
      tape, "log", a, [](float x) { return std::log(x); },
      [](float x, float) { return 1.0f / x; });
}

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2) {
    throw ShapeError("matmul: operands must be rank 2, got " + shape_str(a->shape) +
                     " and " + shape_str(b->shape));
  }
  const std::size_t m = a->shape[0], k = a->shape[1];
  const std::size_t kb = b->shape[0], n = b->shape[1];
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  }
  auto out = tensor({m, n}, 0.0f, wants_grad(a) || wants_grad(b));
  detail::matmul_raw(a->data.data(), b->data.data(), out->data.data(), m, k, n, false);
  detail::ensure_finite("matmul", *out);
  if (out->requires_grad) {
    tape.record("matmul", out, [a, b, out, m, k, n]() {
      if (a->requires_grad) {
        // dA += dC * B^T
        std::vector<float> bt(k * n);
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < n; ++j) bt[j * k + t] = b->data[t * n + j];
        detail::matmul_raw(out->grad.data(), bt.data(), a->grad.data(), m, n, k, true);
      }
      if (b->requires_grad) {
        detail::matmul_at_b_raw(a->data.data(), out->grad.data(), b->grad.data(), m, k, n);
      }
    });
  }
  return out;
}

TensorPtr add_rowvec(Tape& tape, const TensorPtr& a, const TensorPtr& row) {
  if (a->rank() != 2 || row->rank() != 2 || row->shape[0] != 1 ||
      row->shape[1] != a->shape[1]) {
    throw ShapeError("add_rowvec: want [m x n] and [1 x n], got " +
                     shape_str(a->shape) + " and " + shape_str(row->shape));
  }
  const std::size_t m = a->shape[0], n = a->shape[1];
  auto out = tensor(a->shape, 0.0f, wants_grad(a) || wants_grad(row));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out->data[i * n + j] = a->data[i * n + j] + row->data[j];
  detail::ensure_finite("add_rowvec", *out);
  if (out->requires_grad) {
    tape.record("add_rowvec", out, [a, row, out, m, n]() {
      if (a->requires_grad) {
        for (std::size_t i = 0; i < m * n; ++i) a->grad[i] += out->grad[i];
      }
      if (row->requires_grad) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += out->grad[i * n + j];
          row->grad[j] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 Padding padding) {
  if (input->rank() != 3 || kernel->rank() != 4) {
    throw ShapeError("conv2d: want input [c x h x w] and kernel [o x c x kh x kw]");
  }
  const std::size_t c = input->shape[0], h = input->shape[1], w = input->shape[2];
  const std::size_t o = kernel->shape[0], kc = kernel->shape[1];
  const std::size_t kh = kernel->shape[2], kw = kernel->shape[3];
  if (kc != c) {
    throw ShapeError("conv2d: kernel channels " + std::to_string(kc) +
                     " do not match input channels " + std::to_string(c));
  }
  const std::size_t ph = (padding == Padding::same) ? (kh - 1) / 2 : 0;
  const std::size_t pw = (padding == Padding::same) ? (kw - 1) / 2 : 0;
  if (h + 2 * ph < kh || w + 2 * pw < kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const std::size_t oh = h + 2 * ph - kh + 1;
  const std::size_t ow = w + 2 * pw - kw + 1;

  auto out = tensor({o, oh, ow}, 0.0f, wants_grad(input) || wants_grad(kernel));
  const float* in = input->data.data();
  const float* kd = kernel->data.data();
  for (std::size_t oc = 0; oc < o; ++oc) {
    float* plane = out->data.data() + oc * oh * ow;
    for (std::size_t ic = 0; ic < c; ++ic) {
      const float* iplane = in + ic * h * w;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const float kv = kd[((oc * c + ic) * kh + ky) * kw + kx];
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(ph);
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pw);
          const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
          const std::size_t y1 = std::min<std::size_t>(oh, static_cast<std::size_t>(
              std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(h) - dy)));
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = std::min<std::size_t>(ow, static_cast<std::size_t>(
              std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(w) - dx)));
          for (std::size_t y = y0; y < y1; ++y) {
            const float* irow = iplane + (y + dy) * w + dx;
            float* orow = plane + y * ow;
            for (std::size_t x = x0; x < x1; ++x) orow[x] += kv * irow[x];
          }
        }
      }
    }
  }
  detail::ensure_finite("conv2d", *out);

  if (out->requires_grad) {
    tape.record("conv2d", out, [input, kernel, out, c, h, w, o, kh, kw, ph, pw, oh, ow]() {
      const float* kd = kernel->data.data();
      const float* in = input->data.data();
      const float* gout = out->grad.data();
      for (std::size_t oc = 0; oc < o; ++oc) {
        const float* gplane = gout + oc * oh * ow;
        for (std::size_t ic = 0; ic < c; ++ic) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(ph);
              const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pw);
              const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
              const std::size_t y1 = std::min<std::size_t>(oh, static_cast<std::size_t>(
                  std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(h) - dy)));
              const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
              const std::size_t x1 = std::min<std::size_t>(ow, static_cast<std::size_t>(
                  std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(w) - dx)));
              if (input->requires_grad) {
                const float kv = kd[((oc * c + ic) * kh + ky) * kw + kx];
                float* giplane = input->grad.data() + ic * h * w;
                for (std::size_t y = y0; y < y1; ++y) {
                  float* girow = giplane + (y + dy) * w + dx;
                  const float* grow = gplane + y * ow;
                  for (std::size_t x = x0; x < x1; ++x) girow[x] += kv * grow[x];
                }
              }
              if (kernel->requires_grad) {
                const float* iplane = in + ic * h * w;
                double acc = 0.0;
                for (std::size_t y = y0; y < y1; ++y) {
                  const float* irow = iplane + (y + dy) * w + dx;
                  const float* grow = gplane + y * ow;
                  for (std::size_t x = x0; x < x1; ++x) acc += static_cast<double>(irow[x]) * grow[x];
                }
                kernel->grad[((oc * c + ic) * kh + ky) * kw + kx] += static_cast<float>(acc);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr bias_add(Tape& tape, const TensorPtr& a, const TensorPtr& bias) {
  if (a->rank() != 3 || bias->rank() != 1 || bias->shape[0] != a->shape[0]) {
    throw ShapeError("bias_add: want [c x h x w] and [c]");
  }
  const std::size_t c = a->shape[0], plane = a->shape[1] * a->shape[2];
  auto out = tensor(a->shape, 0.0f, wants_grad(a) || wants_grad(bias));
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float b = bias->data[ch];
    for (std::size_t i = 0; i < plane; ++i)
      out->data[ch * plane + i] = a->data[ch * plane + i] + b;
  }
  detail::ensure_finite("bias_add", *out);
  if (out->requires_grad) {
    tape.record("bias_add", out, [a, bias, out, c, plane]() {
      if (a->requires_grad) {
        for (std::size_t i = 0; i < c * plane; ++i) a->grad[i] += out->grad[i];
      }
      if (bias->requires_grad) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += out->grad[ch * plane + i];
          bias->grad[ch] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

TensorPtr global_avg_pool(Tape& tape, const TensorPtr& a) {
  if (a->rank() != 3) throw ShapeError("global_avg_pool: want [c x h x w]");
  const std::size_t c = a->shape[0], plane = a->shape[1] * a->shape[2];
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial plane");
  auto out = tensor({1, c}, 0.0f, wants_grad(a));
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += a->data[ch * plane + i];
    out->data[ch] = static_cast<float>(acc / static_cast<double>(plane));
  }
  detail::ensure_finite("global_avg_pool", *out);
  if (out->requires_grad) {
    tape.record("global_avg_pool", out, [a, out, c, plane]() {
      const float inv = 1.0f / static_cast<float>(plane);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float g = out->grad[ch] * inv;
        for (std::size_t i = 0; i < plane; ++i) a->grad[ch * plane + i] += g;
      }
    });
  }
  return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& a, Shape shape) {
  if (shape_numel(shape) != a->size()) {
    throw ShapeError("reshape: extent mismatch, " + shape_str(a->shape) + " to " +
                     shape_str(shape));
  }
  auto out = tensor(std::move(shape), a->data, wants_grad(a));
  if (out->requires_grad) {
    tape.record("reshape", out, [a, out]() {
      const std::size_t n = a->size();
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
    });
  }
  return out;
}

TensorPtr broadcast_channels(Tape& tape, const TensorPtr& a, std::size_t channels) {
  if (a->rank() != 2) throw ShapeError("broadcast_channels: want [h x w]");
  if (channels == 0) throw ShapeError("broadcast_channels: zero channels");
  const std::size_t plane = a->size();
  auto out = tensor({channels, a->shape[0], a->shape[1]}, 0.0f, wants_grad(a));
  for (std::size_t ch = 0; ch < channels; ++ch) {
    std::copy(a->data.begin(), a->data.end(), out->data.begin() + ch * plane);
  }
  if (out->requires_grad) {
    tape.record("broadcast_channels", out, [a, out, channels, plane]() {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const float* g = out->grad.data() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) a->grad[i] += g[i];
      }
    });
  }
  return out;
}

TensorPtr upsample_bilinear(Tape& tape, const TensorPtr& a, std::size_t h, std::size_t w) {
  if (a->rank() != 2) throw ShapeError("upsample_bilinear: want [h x w]");
  if (h == 0 || w == 0) throw ShapeError("upsample_bilinear: empty target");
  const std::size_t h0 = a->shape[0], w0 = a->shape[1];
  const double sy = (h > 1 && h0 > 1) ? static_cast<double>(h0 - 1) / (h - 1) : 0.0;
  const double sx = (w > 1 && w0 > 1) ? static_cast<double>(w0 - 1) / (w - 1) : 0.0;
  auto out = tensor({h, w}, 0.0f, wants_grad(a));

  struct Tap {
    std::size_t i0, i1;
    float w0, w1;
  };
  auto make_taps = [](std::size_t n_out, std::size_t n_in, double s) {
    std::vector<Tap> taps(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double f = i * s;
      std::size_t lo = static_cast<std::size_t>(f);
      if (lo >= n_in - 1 && n_in > 1) lo = n_in - 2;
      const float frac = static_cast<float>(f - lo);
      taps[i] = Tap{lo, (n_in > 1) ? lo + 1 : lo, 1.0f - frac, frac};
    }
    return taps;
  };
  const auto ty = make_taps(h, h0, sy);
  const auto tx = make_taps(w, w0, sx);

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Tap& a_y = ty[y];
      const Tap& a_x = tx[x];
      out->data[y * w + x] = a_y.w0 * (a_x.w0 * a->data[a_y.i0 * w0 + a_x.i0] +
                                       a_x.w1 * a->data[a_y.i0 * w0 + a_x.i1]) +
                             a_y.w1 * (a_x.w0 * a->data[a_y.i1 * w0 + a_x.i0] +
                                       a_x.w1 * a->data[a_y.i1 * w0 + a_x.i1]);
    }
  }
  detail::ensure_finite("upsample_bilinear", *out);
  if (out->requires_grad) {
    tape.record("upsample_bilinear", out, [a, out, h, w, w0, ty, tx]() {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const float g = out->grad[y * w + x];
          const Tap& a_y = ty[y];
          const Tap& a_x = tx[x];
          a->grad[a_y.i0 * w0 + a_x.i0] += g * a_y.w0 * a_x.w0;
          a->grad[a_y.i0 * w0 + a_x.i1] += g * a_y.w0 * a_x.w1;
          a->grad[a_y.i1 * w0 + a_x.i0] += g * a_y.w1 * a_x.w0;
          a->grad[a_y.i1 * w0 + a_x.i1] += g * a_y.w1 * a_x.w1;
        }
      }
    });
  }
  return out;
}

TensorPtr reduce_sum(Tape& tape, const TensorPtr& a) {
  if (a->size() == 0) throw ShapeError("reduce_sum: empty tensor");
  double acc = 0.0;
  for (float v : a->data) acc += v;
  auto out = tensor({1}, std::vector<float>{static_cast<float>(acc)}, wants_grad(a));
  detail::ensure_finite("reduce_sum", *out);
  if (out->requires_grad) {
    tape.record("reduce_sum", out, [a, out]() {
      const float g = out->grad[0];
      for (auto& gv : a->grad) gv += g;
    });
  }
  return out;
}

TensorPtr reduce_mean(Tape& tape, const TensorPtr& a) {
  if (a->size() == 0) throw ShapeError("reduce_mean: empty tensor");
  double acc = 0.0;
  for (float v : a->data) acc += v;
  const double n = static_cast<double>(a->size());
  auto out = tensor({1}, std::vector<float>{static_cast<float>(acc / n)}, wants_grad(a));
  detail::ensure_finite("reduce_mean", *out);
  if (out->requires_grad) {
    tape.record("reduce_mean", out, [a, out]() {
      const float g = out->grad[0] / static_cast<float>(a->size());
      for (auto& gv : a->grad) gv += g;
    });
  }
  return out;
}

TensorPtr softmax(Tape& tape, const TensorPtr& logits) {
  if (logits->rank() != 1 || logits->size() == 0) {
    throw ShapeError("softmax: want nonempty rank-1 tensor");
  }
  for (float v : logits->data) {
    if (!std::isfinite(v)) throw NonFiniteError("softmax: non-finite logit");
  }
  const std::size_t n = logits->size();
  const float m = *std::max_element(logits->data.begin(), logits->data.end());
  std::vector<float> e(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::exp(logits->data[i] - m);
    s += e[i];
  }
  auto out = tensor({n}, 0.0f, wants_grad(logits));
  for (std::size_t i = 0; i < n; ++i) out->data[i] = static_cast<float>(e[i] / s);
  detail::ensure_finite("softmax", *out);
  if (out->requires_grad) {
    tape.record("softmax", out, [logits, out, n]() {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        dot += static_cast<double>(out->grad[i]) * out->data[i];
      for (std::size_t i = 0; i < n; ++i) {
        logits->grad[i] += out->data[i] * (out->grad[i] - static_cast<float>(dot));
      }
    });
  }
  return out;
}

SortResult vecsort(Tape& tape, const TensorPtr& a, bool ascending) {
  if (a->rank() != 1) throw ShapeError("vecsort: want rank-1 tensor");
  for (float v : a->data) {
    if (!std::isfinite(v)) throw NonFiniteError("vecsort: non-finite input");
  }
  const std::size_t n = a->size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (ascending) {
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t i, std::size_t j) { return a->data[i] < a->data[j]; });
  } else {
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t i, std::size_t j) { return a->data[i] > a->data[j]; });
  }
  auto out = tensor({n}, 0.0f, wants_grad(a));
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[perm[i]];
  if (out->requires_grad) {
    tape.record("vecsort", out, [a, out, perm]() {
      const std::size_t n = out->size();
      for (std::size_t i = 0; i < n; ++i) a->grad[perm[i]] += out->grad[i];
    });
  }
  return SortResult{out, std::move(perm)};
}

TensorPtr conv2d_reflect(Tape& tape, const TensorPtr& input,
                         std::span<const float> kernel, std::size_t kh, std::size_t kw) {
  if (input->rank() != 2) throw ShapeError("conv2d_reflect: want [h x w]");
  if (kh % 2 == 0 || kw % 2 == 0 || kernel.size() != kh * kw) {
    throw ShapeError("conv2d_reflect: kernel extents must be odd and match span");
  }
  const std::size_t h = input->shape[0], w = input->shape[1];
  const std::size_t ry = kh / 2, rx = kw / 2;
  if (ry >= h || rx >= w) {
    throw ShapeError("conv2d_reflect: kernel larger than image");
  }
  auto out = tensor({h, w}, 0.0f, wants_grad(input));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::size_t iy = reflect101(
            static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(ry),
            static_cast<std::ptrdiff_t>(h));
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::size_t ix = reflect101(
              static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(rx),
              static_cast<std::ptrdiff_t>(w));
          acc += static_cast<double>(kernel[ky * kw + kx]) * input->data[iy * w + ix];
        }
      }
      out->data[y * w + x] = static_cast<float>(acc);
    }
  }
  detail::ensure_finite("conv2d_reflect", *out);
  if (out->requires_grad) {
    std::vector<float> kcopy(kernel.begin(), kernel.end());
    tape.record("conv2d_reflect", out, [input, out, kcopy, kh, kw, h, w]() {
      const std::size_t ry = kh / 2, rx = kw / 2;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const float g = out->grad[y * w + x];
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::size_t iy = reflect101(
                static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(ry),
                static_cast<std::ptrdiff_t>(h));
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t ix = reflect101(
                  static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(rx),
                  static_cast<std::ptrdiff_t>(w));
              input->grad[iy * w + ix] += kcopy[ky * kw + kx] * g;
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace op
}  // namespace inrattr
