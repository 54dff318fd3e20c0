#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adamae/error.hpp"
#include "adamae/rng.hpp"

namespace adamae {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense row-major tensor. Rank 1 and 2 cover the whole model; video data is
// kept rank-4 (C,T,H,W) and only ever unfolded into matrices.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(data_.size() == shape_numel(shape_),
                "tensor data length does not match shape " + shape_str(shape_));
  }

  static Tensor row(std::initializer_list<Real> values) {
    return Tensor({1, values.size()}, std::vector<Real>(values));
  }

  static Tensor vec(std::initializer_list<Real> values) {
    return Tensor({values.size()}, std::vector<Real>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const {
    check_shape(ndim() == 2 || ndim() == 1, "rows() wants rank 1 or 2");
    return ndim() == 2 ? shape_[0] : 1;
  }
  std::size_t cols() const {
    check_shape(ndim() == 2 || ndim() == 1, "cols() wants rank 1 or 2");
    return ndim() == 2 ? shape_[1] : shape_[0];
  }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(Shape s) const {
    check_shape(shape_numel(s) == numel(),
                "reshape " + shape_str(shape_) + " -> " + shape_str(s));
    Tensor out = *this;
    out.shape_ = std::move(s);
    return out;
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename Other>
  static Tensor cast_from(const Tensor<Other>& src) {
    Tensor t(src.shape());
    for (std::size_t i = 0; i < src.numel(); ++i)
      t[i] = static_cast<Real>(src[i]);
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, Real stddev = Real(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<Real>(rng.normal() * stddev);
    return t;
  }

  static Tensor truncated_normal(Shape shape, Rng& rng, Real stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<Real>(rng.truncated_normal(stddev));
    return t;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// ---------------------------------------------------------------------------
// Value-level kernels. Pure functions; the autodiff layer wraps these and
// reuses them inside backward rules.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> matmul_value(const Tensor<Real>& a, const Tensor<Real>& b) {
  check_shape(a.ndim() == 2 && b.ndim() == 2, "matmul wants rank-2 operands");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  check_shape(b.shape()[0] == k, "matmul inner dims " + shape_str(a.shape()) +
                                     " x " + shape_str(b.shape()));
  const std::size_t n = b.shape()[1];
  Tensor<Real> out({m, n}, Real(0));
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Real aik = pa[i * k + kk];
      if (aik == Real(0)) continue;
      const Real* brow = pb + kk * n;
      Real* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename Real>
Tensor<Real> transpose_value(const Tensor<Real>& a) {
  check_shape(a.ndim() == 2, "transpose wants rank-2");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<Real> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

template <typename Real>
Tensor<Real> add_value(const Tensor<Real>& a, const Tensor<Real>& b) {
  check_shape(a.same_shape(b), "add shape mismatch " + shape_str(a.shape()) +
                                   " vs " + shape_str(b.shape()));
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

template <typename Real>
Tensor<Real> sub_value(const Tensor<Real>& a, const Tensor<Real>& b) {
  check_shape(a.same_shape(b), "sub shape mismatch");
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

template <typename Real>
Tensor<Real> mul_value(const Tensor<Real>& a, const Tensor<Real>& b) {
  check_shape(a.same_shape(b), "mul shape mismatch");
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

template <typename Real>
Tensor<Real> scale_value(const Tensor<Real>& a, Real c) {
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return out;
}

// rows of `a` plus a single row vector `v` (1 x d or rank-1 d).
template <typename Real>
Tensor<Real> add_row_vector_value(const Tensor<Real>& a, const Tensor<Real>& v) {
  check_shape(a.ndim() == 2, "add_row_vector wants rank-2 lhs");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  check_shape(v.numel() == d, "row vector length mismatch");
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) += v[j];
  return out;
}

template <typename Real>
Tensor<Real> gather_rows_value(const Tensor<Real>& a,
                               const std::vector<std::size_t>& idx) {
  check_shape(a.ndim() == 2, "gather_rows wants rank-2");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  Tensor<Real> out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check_shape(idx[i] < n, "gather_rows index out of range");
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = a.at(idx[i], j);
  }
  return out;
}

// Scatter rows of `src` into a zero matrix of `n_rows` rows (inverse layout
// of gather_rows; duplicate indices accumulate).
template <typename Real>
Tensor<Real> scatter_rows_value(const Tensor<Real>& src,
                                const std::vector<std::size_t>& idx,
                                std::size_t n_rows) {
  check_shape(src.ndim() == 2 && src.shape()[0] == idx.size(),
              "scatter_rows row count mismatch");
  const std::size_t d = src.shape()[1];
  Tensor<Real> out({n_rows, d}, Real(0));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check_shape(idx[i] < n_rows, "scatter_rows index out of range");
    for (std::size_t j = 0; j < d; ++j) out.at(idx[i], j) += src.at(i, j);
  }
  return out;
}

template <typename Real>
Tensor<Real> concat_rows_value(const Tensor<Real>& a, const Tensor<Real>& b) {
  check_shape(a.ndim() == 2 && b.ndim() == 2 && a.shape()[1] == b.shape()[1],
              "concat_rows column mismatch");
  Tensor<Real> out({a.shape()[0] + b.shape()[0], a.shape()[1]});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

template <typename Real>
Tensor<Real> slice_cols_value(const Tensor<Real>& a, std::size_t start,
                              std::size_t count) {
  check_shape(a.ndim() == 2 && start + count <= a.shape()[1],
              "slice_cols out of range");
  const std::size_t n = a.shape()[0];
  Tensor<Real> out({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = a.at(i, start + j);
  return out;
}

template <typename Real>
Tensor<Real> concat_cols_value(const Tensor<Real>& a, const Tensor<Real>& b) {
  check_shape(a.ndim() == 2 && b.ndim() == 2 && a.shape()[0] == b.shape()[0],
              "concat_cols row mismatch");
  const std::size_t n = a.shape()[0], da = a.shape()[1], db = b.shape()[1];
  Tensor<Real> out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < da; ++j) out.at(i, j) = a.at(i, j);
    for (std::size_t j = 0; j < db; ++j) out.at(i, da + j) = b.at(i, j);
  }
  return out;
}

template <typename Real>
Tensor<Real> broadcast_row_value(const Tensor<Real>& v, std::size_t n_rows) {
  check_shape(v.ndim() == 1 || (v.ndim() == 2 && v.shape()[0] == 1),
              "broadcast_row wants a single row");
  const std::size_t d = v.numel();
  Tensor<Real> out({n_rows, d});
  for (std::size_t i = 0; i < n_rows; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = v[j];
  return out;
}

// Exact (erf-based) GELU; computed at the tensor's own precision so
// extended-precision tapes stay extended-precision.
template <typename Real>
Real gelu_scalar(Real x) {
  return Real(0.5) * x * (Real(1) + std::erf(x / std::sqrt(Real(2))));
}

template <typename Real>
Real gelu_grad_scalar(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x / std::sqrt(Real(2))));
  const Real pdf =
      std::exp(Real(-0.5) * x * x) / std::sqrt(Real(2) * Real(M_PI));
  return cdf + x * pdf;
}

template <typename Real>
Tensor<Real> gelu_value(const Tensor<Real>& a) {
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = gelu_scalar(out[i]);
  return out;
}

template <typename Real>
Tensor<Real> abs_value(const Tensor<Real>& a) {
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
  return out;
}

template <typename Real>
Tensor<Real> log_value(const Tensor<Real>& a) {
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = std::log(out[i]);
  return out;
}

// Row-wise softmax with max subtraction. Rank-1 input is one row.
template <typename Real>
Tensor<Real> softmax_rows_value(const Tensor<Real>& a) {
  if (!a.all_finite()) throw NumericError("softmax: non-finite input");
  const std::size_t n = a.rows(), d = a.cols();
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < n; ++i) {
    Real* row = out.data() + i * d;
    Real mx = row[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    Real sum = Real(0);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) row[j] /= sum;
  }
  return out;
}

// Row-wise layer norm with population variance.
template <typename Real>
Tensor<Real> layer_norm_rows_value(const Tensor<Real>& a,
                                   const Tensor<Real>& gamma,
                                   const Tensor<Real>& beta, Real eps) {
  check(eps > Real(0), "layer_norm: eps must be positive");
  const std::size_t n = a.rows(), d = a.cols();
  check_shape(gamma.numel() == d && beta.numel() == d,
              "layer_norm: gamma/beta length mismatch");
  Tensor<Real> out = a;
  for (std::size_t i = 0; i < n; ++i) {
    Real* row = out.data() + i * d;
    Real mean = Real(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<Real>(d);
    Real var = Real(0);
    for (std::size_t j = 0; j < d; ++j) {
      const Real c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<Real>(d);
    const Real inv = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j)
      row[j] = gamma[j] * (row[j] - mean) * inv + beta[j];
  }
  return out;
}

template <typename Real>
Tensor<Real> row_mean_value(const Tensor<Real>& a) {
  check_shape(a.ndim() == 2, "row_mean wants rank-2");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  Tensor<Real> out({n});
  for (std::size_t i = 0; i < n; ++i) {
    Real s = Real(0);
    for (std::size_t j = 0; j < d; ++j) s += a.at(i, j);
    out[i] = s / static_cast<Real>(d);
  }
  return out;
}

template <typename Real>
Tensor<Real> sum_value(const Tensor<Real>& a) {
  Real s = Real(0);
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
  Tensor<Real> out({1});
  out[0] = s;
  return out;
}

}  // namespace adamae
