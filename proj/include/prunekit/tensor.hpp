#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <utility>

#include "prunekit/common.hpp"

namespace prunekit {

// ---------------------------------------------------------------------------
// Tensor: dense row-major f64 array with optional gradient storage.
// Handles share the underlying buffer; parameter updates and gradient
// accumulation go through the shared state so recorded backward closures see
// them.
// ---------------------------------------------------------------------------

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false) {
    return from_data(shape, std::vector<double>(numel_of(shape), 0.0), requires_grad);
  }

  static Tensor full(std::vector<size_t> shape, double v, bool requires_grad = false) {
    return from_data(shape, std::vector<double>(numel_of(shape), v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  static Tensor from_data(std::vector<size_t> shape, std::vector<double> data,
                          bool requires_grad = false) {
    if (numel_of(shape) != data.size())
      throw DimensionError(strf("tensor: shape product %zu != data length %zu",
                                numel_of(shape), data.size()));
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->value = std::move(data);
    impl->requires_grad = requires_grad;
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

  static Tensor randn(std::vector<size_t> shape, double stddev, Rng& rng,
                      bool requires_grad = false) {
    std::vector<double> d(numel_of(shape));
    for (auto& v : d) v = stddev * rng.normal();
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<size_t>& shape() const { return impl_->shape; }
  size_t ndim() const { return impl_->shape.size(); }
  size_t size() const { return impl_->value.size(); }

  size_t rows() const {
    require_2d();
    return impl_->shape[0];
  }
  size_t cols() const {
    require_2d();
    return impl_->shape[1];
  }

  double* data() { return impl_->value.data(); }
  const double* data() const { return impl_->value.data(); }
  std::vector<double>& values() { return impl_->value; }
  const std::vector<double>& values() const { return impl_->value; }

  double& at(size_t i) { return impl_->value[i]; }
  double at(size_t i) const { return impl_->value[i]; }
  double& at(size_t i, size_t j) { return impl_->value[i * cols() + j]; }
  double at(size_t i, size_t j) const { return impl_->value[i * cols() + j]; }

  double item() const {
    if (size() != 1) throw ContractError("item(): tensor is not scalar");
    return impl_->value[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  double* grad() { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }
  const double* grad() const { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }

  /// Gradient buffer, zero-initialized on first access.
  std::vector<double>& grad_vec() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
    return impl_->grad;
  }

  void clear_grad() { impl_->grad.clear(); }

  void seed_grad(double v) {
    grad_vec();
    for (auto& g : impl_->grad) g = v;
  }

  /// Replaces shape and contents in place, preserving handle identity.
  /// Any stored gradient is dropped.
  void reset_data(std::vector<size_t> new_shape, std::vector<double> new_data) {
    if (numel_of(new_shape) != new_data.size())
      throw DimensionError("reset_data: shape/data mismatch");
    impl_->shape = std::move(new_shape);
    impl_->value = std::move(new_data);
    impl_->grad.clear();
  }

  Tensor deep_copy() const {
    Tensor t = from_data(impl_->shape, impl_->value, impl_->requires_grad);
    return t;
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  struct Impl {
    std::vector<size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty when not yet accumulated
    bool requires_grad = false;
  };

  static size_t numel_of(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
      if (d == 0) throw DimensionError("tensor: zero-sized dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  void require_2d() const {
    if (ndim() != 2) throw DimensionError("expected a 2-D tensor");
  }

  std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Graph: tape of executed differentiable operations. Rebuilt every forward
// pass, which lets pruned shapes change between iterations. A tape may be
// swept backward exactly once.
// ---------------------------------------------------------------------------

class Graph {
 public:
  void add_node(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Populates grads of every requires_grad tensor reachable from loss.
  /// Gradients accumulate additively across uses.
  void backward(Tensor loss) {
    if (!loss.defined() || loss.size() != 1)
      throw ContractError("backward: loss must be a scalar tensor");
    if (consumed_)
      throw ContractError("backward: graph already swept; rebuild the forward pass");
    consumed_ = true;
    if (!loss.requires_grad()) return;  // constant loss: nothing to propagate
    loss.seed_grad(1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Raw GEMM kernels shared by forward and backward paths.
// C[m x n] (+)= op(A) * op(B), all row-major.
// ---------------------------------------------------------------------------

namespace detail {

inline void gemm_nn(const double* a, const double* b, double* c, size_t m, size_t n,
                    size_t k, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b + p * n;
      for (size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// A[m x k] * B[n x k]^T
inline void gemm_nt(const double* a, const double* b, double* c, size_t m, size_t n,
                    size_t k, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double s = 0.0;
      for (size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      cr[j] = accumulate ? cr[j] + s : s;
    }
  }
}

// A[p x m]^T * B[p x n] -> C[m x n]
inline void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t n,
                    size_t p, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (size_t r = 0; r < p; ++r) {
    const double* ar = a + r * m;
    const double* br = b + r * n;
    for (size_t i = 0; i < m; ++i) {
      const double av = ar[i];
      double* cr = c + i * n;
      for (size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

inline void check_finite(const Tensor& t, const char* op) {
  for (size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t.data()[i]))
      throw NumericError(strf("%s: non-finite value at flat index %zu", op, i));
  }
}

inline bool want_record(const Graph* g, std::initializer_list<const Tensor*> inputs) {
  if (!g) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable operations. Each op validates shapes, computes the forward
// value, and (when a graph is supplied and some input requires grad) records
// a closure implementing its gradient rule.
// ---------------------------------------------------------------------------

/// C = A[m x k] * B[k x n].  dA = dC * B^T, dB = A^T * dC.
inline Tensor matmul(Graph* g, const Tensor& a, const Tensor& b) {
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError(strf("matmul: inner dimensions %zu and %zu differ", k, b.rows()));
  Tensor out = Tensor::zeros({m, n});
  detail::gemm_nn(a.data(), b.data(), out.data(), m, n, k, false);
  detail::check_finite(out, "matmul");
  if (detail::want_record(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b, oh = out;
    g->add_node([ah, bh, oh, m, n, k]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      if (ah.requires_grad())
        detail::gemm_nt(gy, bh.data(), ah.grad_vec().data(), m, k, n, true);
      if (bh.requires_grad())
        detail::gemm_tn(ah.data(), gy, bh.grad_vec().data(), k, n, m, true);
    });
  }
  return out;
}

/// C = A[m x k] * B[n x k]^T.  dA = dC * B, dB = dC^T * A.
inline Tensor matmul_nt(Graph* g, const Tensor& a, const Tensor& b) {
  const size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError(strf("matmul_nt: inner dimensions %zu and %zu differ", k, b.cols()));
  Tensor out = Tensor::zeros({m, n});
  detail::gemm_nt(a.data(), b.data(), out.data(), m, n, k, false);
  detail::check_finite(out, "matmul_nt");
  if (detail::want_record(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b, oh = out;
    g->add_node([ah, bh, oh, m, n, k]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      if (ah.requires_grad())
        detail::gemm_nn(gy, bh.data(), ah.grad_vec().data(), m, k, n, true);
      if (bh.requires_grad())
        detail::gemm_tn(gy, ah.data(), bh.grad_vec().data(), n, k, m, true);
    });
  }
  return out;
}

inline Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("add: shape mismatch");
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::want_record(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b, oh = out;
    g->add_node([ah, bh, oh]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      if (ah.requires_grad()) {
        auto& ga = ah.grad_vec();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
      }
      if (bh.requires_grad()) {
        auto& gb = bh.grad_vec();
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return out;
}

/// Elementwise (Hadamard) product.
inline Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("mul: shape mismatch");
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::want_record(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b, oh = out;
    g->add_node([ah, bh, oh]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      if (ah.requires_grad()) {
        auto& ga = ah.grad_vec();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bh.data()[i];
      }
      if (bh.requires_grad()) {
        auto& gb = bh.grad_vec();
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * ah.data()[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Graph* g, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = c * a.data()[i];
  if (detail::want_record(g, {&a})) {
    out.set_requires_grad(true);
    Tensor ah = a, oh = out;
    g->add_node([ah, oh, c]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& ga = ah.grad_vec();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += c * gy[i];
    });
  }
  return out;
}

/// SiLU activation x * sigmoid(x).
inline Tensor silu(Graph* g, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x * detail::stable_sigmoid(x);
  }
  if (detail::want_record(g, {&a})) {
    out.set_requires_grad(true);
    Tensor ah = a, oh = out;
    g->add_node([ah, oh]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& ga = ah.grad_vec();
      for (size_t i = 0; i < ga.size(); ++i) {
        const double x = ah.data()[i];
        const double s = detail::stable_sigmoid(x);
        ga[i] += gy[i] * s * (1.0 + x * (1.0 - s));
      }
    });
  }
  return out;
}

/// Natural logarithm; domain error on non-positive entries.
inline Tensor elem_log(Graph* g, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    if (x <= 0.0) throw NumericError(strf("log: non-positive input %g", x));
    out.data()[i] = std::log(x);
  }
  if (detail::want_record(g, {&a})) {
    out.set_requires_grad(true);
    Tensor ah = a, oh = out;
    g->add_node([ah, oh]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& ga = ah.grad_vec();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] / ah.data()[i];
    });
  }
  return out;
}

/// RMS normalization over the last axis with a learned per-column gain:
/// y[i,j] = gain[j] * x[i,j] / sqrt(mean_j x[i,j]^2 + eps).
inline Tensor rms_norm(Graph* g, const Tensor& x, const Tensor& gain, double eps = 1e-6) {
  const size_t m = x.rows(), d = x.cols();
  if (gain.ndim() != 1 || gain.size() != d)
    throw DimensionError("rms_norm: gain must match the last axis");
  Tensor out = Tensor::zeros({m, d});
  std::vector<double> inv_rms(m);
  for (size_t i = 0; i < m; ++i) {
    const double* xr = x.data() + i * d;
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) s += xr[j] * xr[j];
    inv_rms[i] = 1.0 / std::sqrt(s / static_cast<double>(d) + eps);
    double* yr = out.data() + i * d;
    for (size_t j = 0; j < d; ++j) yr[j] = gain.data()[j] * xr[j] * inv_rms[i];
  }
  if (detail::want_record(g, {&x, &gain})) {
    out.set_requires_grad(true);
    Tensor xh = x, gh = gain, oh = out;
    g->add_node([xh, gh, oh, inv_rms = std::move(inv_rms), m, d]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      for (size_t i = 0; i < m; ++i) {
        const double* xr = xh.data() + i * d;
        const double* gyr = gy + i * d;
        const double r = inv_rms[i];
        if (xh.requires_grad()) {
          // dx = g*dy*r - x * r^3/d * sum_k(dy_k * g_k * x_k)
          double dot = 0.0;
          for (size_t k = 0; k < d; ++k) dot += gyr[k] * gh.data()[k] * xr[k];
          const double c = dot * r * r * r / static_cast<double>(d);
          double* gxr = xh.grad_vec().data() + i * d;
          for (size_t j = 0; j < d; ++j)
            gxr[j] += gyr[j] * gh.data()[j] * r - xr[j] * c;
        }
        if (gh.requires_grad()) {
          double* gg = gh.grad_vec().data();
          for (size_t j = 0; j < d; ++j) gg[j] += gyr[j] * xr[j] * r;
        }
      }
    });
  }
  return out;
}

/// Embedding gather: out[i, :] = table[ids[i], :].
inline Tensor embedding(Graph* g, const Tensor& table, const std::vector<int>& ids) {
  const size_t v = table.rows(), d = table.cols();
  if (ids.empty()) throw InputError("embedding: empty id sequence");
  for (int id : ids)
    if (id < 0 || static_cast<size_t>(id) >= v)
      throw InputError(strf("embedding: token id %d out of range [0, %zu)", id, v));
  Tensor out = Tensor::zeros({ids.size(), d});
  for (size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + i * d, table.data() + static_cast<size_t>(ids[i]) * d,
                d * sizeof(double));
  if (detail::want_record(g, {&table})) {
    out.set_requires_grad(true);
    Tensor th = table, oh = out;
    g->add_node([th, oh, ids, d]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gt = th.grad_vec();
      for (size_t i = 0; i < ids.size(); ++i) {
        double* row = gt.data() + static_cast<size_t>(ids[i]) * d;
        const double* gr = gy + i * d;
        for (size_t j = 0; j < d; ++j) row[j] += gr[j];
      }
    });
  }
  return out;
}

/// First n rows of x.
inline Tensor take_rows(Graph* g, const Tensor& x, size_t n) {
  const size_t m = x.rows(), d = x.cols();
  if (n == 0 || n > m) throw DimensionError(strf("take_rows: n=%zu out of range", n));
  Tensor out = Tensor::from_data({n, d}, {x.data(), x.data() + n * d});
  if (detail::want_record(g, {&x})) {
    out.set_requires_grad(true);
    Tensor xh = x, oh = out;
    g->add_node([xh, oh, n, d]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (size_t i = 0; i < n * d; ++i) gx[i] += gy[i];
    });
  }
  return out;
}

/// Columns [c0, c1) of x.
inline Tensor col_slice(Graph* g, const Tensor& x, size_t c0, size_t c1) {
  const size_t m = x.rows(), d = x.cols();
  if (c0 >= c1 || c1 > d) throw DimensionError("col_slice: bad column range");
  const size_t w = c1 - c0;
  Tensor out = Tensor::zeros({m, w});
  for (size_t i = 0; i < m; ++i)
    std::memcpy(out.data() + i * w, x.data() + i * d + c0, w * sizeof(double));
  if (detail::want_record(g, {&x})) {
    out.set_requires_grad(true);
    Tensor xh = x, oh = out;
    g->add_node([xh, oh, c0, w, m, d]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (size_t i = 0; i < m; ++i) {
        double* gr = gx.data() + i * d + c0;
        const double* gyr = gy + i * w;
        for (size_t j = 0; j < w; ++j) gr[j] += gyr[j];
      }
    });
  }
  return out;
}

/// Horizontal concatenation of equal-height blocks.
inline Tensor concat_cols(Graph* g, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw DimensionError("concat_cols: no inputs");
  const size_t m = xs[0].rows();
  size_t total = 0;
  for (const auto& x : xs) {
    if (x.rows() != m) throw DimensionError("concat_cols: row counts differ");
    total += x.cols();
  }
  Tensor out = Tensor::zeros({m, total});
  size_t off = 0;
  for (const auto& x : xs) {
    const size_t w = x.cols();
    for (size_t i = 0; i < m; ++i)
      std::memcpy(out.data() + i * total + off, x.data() + i * w, w * sizeof(double));
    off += w;
  }
  bool rec = false;
  if (g)
    for (const auto& x : xs) rec = rec || x.requires_grad();
  if (rec) {
    out.set_requires_grad(true);
    std::vector<Tensor> hs = xs;
    Tensor oh = out;
    g->add_node([hs, oh, m, total]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      size_t off = 0;
      for (auto& x : hs) {
        const size_t w = x.cols();
        if (x.requires_grad()) {
          auto& gx = x.grad_vec();
          for (size_t i = 0; i < m; ++i) {
            const double* gr = gy + i * total + off;
            double* gxr = gx.data() + i * w;
            for (size_t j = 0; j < w; ++j) gxr[j] += gr[j];
          }
        }
        off += w;
      }
    });
  }
  return out;
}

namespace detail {
inline void softmax_row(const double* x, double* p, size_t c, double inv_t) {
  double mx = x[0];
  for (size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (size_t j = 0; j < c; ++j) {
    p[j] = std::exp((x[j] - mx) * inv_t);
    s += p[j];
  }
  const double inv_s = 1.0 / s;
  for (size_t j = 0; j < c; ++j) p[j] *= inv_s;
}
}  // namespace detail

/// Tempered softmax along the last axis: p_i = exp(x_i/T) / sum_j exp(x_j/T),
/// computed with max subtraction. Rows sum to 1.
inline Tensor softmax(Graph* g, const Tensor& x, double temperature) {
  if (!(temperature > 0.0))
    throw ParameterError(strf("softmax: temperature must be > 0, got %g", temperature));
  if (x.ndim() == 0 || x.size() == 0) throw DimensionError("softmax: empty tensor");
  const size_t c = x.shape().back();
  const size_t rows = x.size() / c;
  const double inv_t = 1.0 / temperature;
  Tensor out = Tensor::zeros(x.shape());
  for (size_t r = 0; r < rows; ++r)
    detail::softmax_row(x.data() + r * c, out.data() + r * c, c, inv_t);
  if (detail::want_record(g, {&x})) {
    out.set_requires_grad(true);
    Tensor xh = x, oh = out;
    g->add_node([xh, oh, rows, c, inv_t]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (size_t r = 0; r < rows; ++r) {
        const double* p = oh.data() + r * c;
        const double* gr = gy + r * c;
        double dot = 0.0;
        for (size_t j = 0; j < c; ++j) dot += gr[j] * p[j];
        double* gxr = gx.data() + r * c;
        for (size_t j = 0; j < c; ++j) gxr[j] += p[j] * (gr[j] - dot) * inv_t;
      }
    });
  }
  return out;
}

/// Softmax over a square score matrix where row i attends to columns <= i.
/// Columns above the diagonal are exactly zero; no -inf sentinel values are
/// ever materialized.
inline Tensor causal_softmax(Graph* g, const Tensor& scores) {
  const size_t l = scores.rows();
  if (scores.cols() != l) throw DimensionError("causal_softmax: matrix must be square");
  Tensor out = Tensor::zeros({l, l});
  for (size_t i = 0; i < l; ++i)
    detail::softmax_row(scores.data() + i * l, out.data() + i * l, i + 1, 1.0);
  if (detail::want_record(g, {&scores})) {
    out.set_requires_grad(true);
    Tensor xh = scores, oh = out;
    g->add_node([xh, oh, l]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (size_t i = 0; i < l; ++i) {
        const double* p = oh.data() + i * l;
        const double* gr = gy + i * l;
        double dot = 0.0;
        for (size_t j = 0; j <= i; ++j) dot += gr[j] * p[j];
        double* gxr = gx.data() + i * l;
        for (size_t j = 0; j <= i; ++j) gxr[j] += p[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

/// out[c] = x[row, cols[c]]; used to pull answer-choice logits from one
/// sequence position.
inline Tensor select_row_cols(Graph* g, const Tensor& x, size_t row,
                              const std::vector<size_t>& cols) {
  const size_t m = x.rows(), n = x.cols();
  if (row >= m) throw DimensionError("select_row_cols: row out of range");
  if (cols.empty()) throw InputError("select_row_cols: no columns requested");
  for (size_t c : cols)
    if (c >= n) throw DimensionError("select_row_cols: column out of range");
  Tensor out = Tensor::zeros({cols.size()});
  for (size_t i = 0; i < cols.size(); ++i) out.data()[i] = x.at(row, cols[i]);
  if (detail::want_record(g, {&x})) {
    out.set_requires_grad(true);
    Tensor xh = x, oh = out;
    g->add_node([xh, oh, row, cols, n]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (size_t i = 0; i < cols.size(); ++i) gx[row * n + cols[i]] += gy[i];
    });
  }
  return out;
}

inline Tensor sum(Graph* g, const Tensor& x) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.data()[i];
  Tensor out = Tensor::scalar(s);
  if (detail::want_record(g, {&x})) {
    out.set_requires_grad(true);
    Tensor xh = x, oh = out;
    g->add_node([xh, oh]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (auto& v : gx) v += gy[0];
    });
  }
  return out;
}

inline Tensor mean(Graph* g, const Tensor& x) {
  const double inv_n = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.data()[i];
  Tensor out = Tensor::scalar(s * inv_n);
  if (detail::want_record(g, {&x})) {
    out.set_requires_grad(true);
    Tensor xh = x, oh = out;
    g->add_node([xh, oh, inv_n]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gx = xh.grad_vec();
      for (auto& v : gx) v += gy[0] * inv_n;
    });
  }
  return out;
}

/// In-place SGD update p -= eta * grad for every parameter, then clears the
/// grads. Every parameter must carry a populated gradient.
inline void sgd_step(const std::vector<Tensor>& params, double eta) {
  if (eta < 0.0) throw ParameterError("sgd_step: eta must be >= 0");
  for (const Tensor& p : params)
    if (!p.has_grad())
      throw ContractError("sgd_step: parameter missing gradient; run backward first");
  for (Tensor p : params) {
    const double* g = p.grad();
    for (size_t i = 0; i < p.size(); ++i) p.data()[i] -= eta * g[i];
    p.clear_grad();
  }
}

/// Adam with bias correction and decoupled weight decay. Used to pretrain
/// the teacher from scratch; the recovery loops use plain sgd_step.
/// Parameter shapes must stay fixed for the optimizer's lifetime.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double eta, double weight_decay = 0.0, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : eta_(eta), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(eta > 0.0)) throw ParameterError("adam: eta must be > 0");
    if (wd_ < 0.0) throw ParameterError("adam: weight decay must be >= 0");
  }

  void step(const std::vector<Tensor>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].size(), 0.0);
        v_[i].assign(params[i].size(), 0.0);
      }
    }
    if (m_.size() != params.size())
      throw ContractError("adam: parameter set changed under the optimizer");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor p = params[i];
      if (!p.has_grad())
        throw ContractError("adam: parameter missing gradient; run backward first");
      if (p.size() != m_[i].size())
        throw ContractError("adam: parameter shape changed under the optimizer");
      const double* g = p.grad();
      for (size_t k = 0; k < p.size(); ++k) {
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
        p.data()[k] -= eta_ * ((m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + eps_) +
                               wd_ * p.data()[k]);
      }
      p.clear_grad();
    }
  }

 private:
  double eta_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace prunekit
