/**
 * @file linalg.hpp
 * @brief Dense row-major matrices, singular values and the matrix-norm
 *        identities used throughout the library.
 *
 * Products are delegated to Eigen through zero-copy maps. Singular values
 * are computed here: one-sided (Hestenes) Jacobi for matrices whose larger
 * dimension is at most 512, otherwise through the Gram matrix of the
 * smaller side.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>

namespace relucert {

/// Thrown when operand shapes are incompatible or a matrix is empty.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a NaN or Inf would enter a numeric routine.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Mat: entries length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }
  Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Mat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat diag(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }
  static Mat column(std::span<const double> v) {
    return Mat(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& entries() const noexcept { return data_; }

  [[nodiscard]] std::span<double> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  [[nodiscard]] Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Mat& operator+=(const Mat& o) {
    require_same_shape(o, "+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    require_same_shape(o, "-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Mat& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double s) { return a *= s; }
  friend Mat operator*(double s, Mat a) { return a *= s; }
  friend bool operator==(const Mat& a, const Mat& b) = default;

 private:
  void require_same_shape(const Mat& o, const char* op) const {
    if (o.rows_ != rows_ || o.cols_ != cols_)
      throw DimensionError(std::string("Mat ") + op + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap view(const Mat& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}
inline MutMap view(Mat& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

inline void require_nonempty(const Mat& m, const char* what) {
  if (m.empty()) throw DimensionError(std::string(what) + ": empty matrix");
}

inline void require_finite(const Mat& m, const char* what) {
  if (!m.all_finite()) throw NonFiniteError(std::string(what) + ": non-finite entry");
}

}  // namespace detail

/// A * B
inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Mat c(a.rows(), b.cols());
  if (a.cols() == 0) return c;
  detail::view(c).noalias() = detail::view(a) * detail::view(b);
  return c;
}

/// A^T * B
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row counts differ");
  Mat c(a.cols(), b.cols());
  if (a.rows() == 0) return c;
  detail::view(c).noalias() = detail::view(a).transpose() * detail::view(b);
  return c;
}

/// A * B^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts differ");
  Mat c(a.rows(), b.rows());
  if (a.cols() == 0) return c;
  detail::view(c).noalias() = detail::view(a) * detail::view(b).transpose();
  return c;
}

inline std::vector<double> matvec(const Mat& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw DimensionError("matvec: size mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    y[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
  }
  return y;
}

/// A^T x
inline std::vector<double> matvec_t(const Mat& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw DimensionError("matvec_t: size mismatch");
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

/// Elementwise product.
inline Mat hadamard(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("hadamard: shape mismatch");
  Mat c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] *= b.data()[k];
  return c;
}

/// M M^T, symmetric by construction.
inline Mat gram_rows(const Mat& m) {
  Mat g(m.rows(), m.rows());
  if (m.cols() == 0) return g;
  auto gv = detail::view(g);
  gv.noalias() = detail::view(m) * detail::view(m).transpose();
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = i + 1; j < g.cols(); ++j) g(j, i) = g(i, j);
  return g;
}

inline double vec_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double frobenius_norm(const Mat& m) {
  detail::require_finite(m, "frobenius_norm");
  return vec_norm(m.data());
}

/// Median; NaN for an empty sample.
inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.
inline std::vector<double> symmetric_eigenvalues(Mat a) {
  const std::size_t n = a.rows();
  if (n != a.cols()) throw DimensionError("symmetric_eigenvalues: matrix not square");
  detail::require_nonempty(a, "symmetric_eigenvalues");
  detail::require_finite(a, "symmetric_eigenvalues");
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a(i, i) * a(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off <= 1e-32 * diag || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        if (std::abs(apq) < 1e-300 ||
            std::abs(apq) <= 1e-18 * std::sqrt(std::abs(app * aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

namespace detail {

/// Hestenes one-sided Jacobi. Returns the min(rows, cols) singular values, descending.
inline std::vector<double> jacobi_singular_values(const Mat& m) {
  const bool tall = m.rows() >= m.cols();
  const std::size_t len = tall ? m.rows() : m.cols();  // vector length
  const std::size_t n = tall ? m.cols() : m.rows();    // number of vectors
  // Store the vectors contiguously: tall -> columns of m, wide -> rows of m.
  std::vector<double> v(n * len);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < len; ++i) v[k * len + i] = tall ? m(i, k) : m(k, i);

  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      double* vp = &v[p * len];
      for (std::size_t q = p + 1; q < n; ++q) {
        double* vq = &v[q * len];
        double alpha = 0.0;
        double beta = 0.0;
        double gamma = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          alpha += vp[i] * vp[i];
          beta += vq[i] * vq[i];
          gamma += vp[i] * vq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < len; ++i) {
          const double xp = vp[i];
          const double xq = vq[i];
          vp[i] = c * xp - s * xq;
          vq[i] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(n);
  for (std::size_t k = 0; k < n; ++k) sv[k] = vec_norm({&v[k * len], len});
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

/// Gram matrix of the smaller side: M M^T if wide, M^T M if tall.
inline Mat small_side_gram(const Mat& m) {
  return m.rows() <= m.cols() ? gram_rows(m) : gram_rows(m.transpose());
}

inline std::vector<double> start_vector(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 1e-3 * static_cast<double>(i % 7) / 7.0;
  const double nrm = vec_norm(x);
  for (double& xi : x) xi /= nrm;
  return x;
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration_max(const Mat& g) {
  const std::size_t n = g.rows();
  auto x = start_vector(n);
  double lambda = 0.0;
  for (int it = 0; it < 5000; ++it) {
    auto y = matvec(g, x);
    const double rq = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    const double nrm = vec_norm(y);
    if (nrm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / nrm;
    if (it > 2 && std::abs(rq - lambda) <= 1e-15 * std::abs(rq)) return rq;
    lambda = rq;
  }
  return lambda;
}

/// Smallest eigenvalue of a symmetric PSD matrix by shifted inverse iteration.
inline double inverse_iteration_min(const Mat& g, double lambda_max) {
  const std::size_t n = g.rows();
  // A small negative shift keeps G - shift*I positive definite when G is singular.
  const double shift = -1e-13 * std::max(lambda_max, 1e-300);
  RowMajor shifted = view(g);
  shifted.diagonal().array() -= shift;
  Eigen::LDLT<RowMajor> ldlt(shifted);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(start_vector(n).data(), n);
  double lambda = lambda_max;
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd y = ldlt.solve(x);
    const double nrm = y.norm();
    x = y / nrm;
    const double rq = x.dot(view(g) * x);
    if (it > 2 && std::abs(rq - lambda) <= 1e-15 * std::max(std::abs(rq), 1e-300 + 1e-16 * lambda_max))
      return std::max(rq, 0.0);
    lambda = rq;
  }
  return std::max(lambda, 0.0);
}

inline constexpr std::size_t kJacobiLimit = 512;
inline constexpr std::size_t kGramEigenLimit = 512;

}  // namespace detail

/// All min(rows, cols) singular values, descending.
inline std::vector<double> singular_values(const Mat& m) {
  detail::require_nonempty(m, "singular_values");
  detail::require_finite(m, "singular_values");
  if (std::max(m.rows(), m.cols()) <= detail::kJacobiLimit) return detail::jacobi_singular_values(m);
  const Mat g = detail::small_side_gram(m);
  if (g.rows() > detail::kGramEigenLimit)
    throw DimensionError("singular_values: both dimensions exceed 512; use operator_norm/sigma_min");
  auto ev = symmetric_eigenvalues(g);
  std::vector<double> sv(ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) sv[i] = std::sqrt(std::max(ev[ev.size() - 1 - i], 0.0));
  return sv;
}

/// Largest singular value.
inline double operator_norm(const Mat& m) {
  detail::require_nonempty(m, "operator_norm");
  detail::require_finite(m, "operator_norm");
  if (std::max(m.rows(), m.cols()) <= detail::kJacobiLimit)
    return detail::jacobi_singular_values(m).front();
  const Mat g = detail::small_side_gram(m);
  if (g.rows() <= detail::kGramEigenLimit)
    return std::sqrt(std::max(symmetric_eigenvalues(g).back(), 0.0));
  return std::sqrt(detail::power_iteration_max(g));
}

/// Smallest of the min(rows, cols) singular values.
inline double sigma_min(const Mat& m) {
  detail::require_nonempty(m, "sigma_min");
  detail::require_finite(m, "sigma_min");
  if (std::max(m.rows(), m.cols()) <= detail::kJacobiLimit)
    return detail::jacobi_singular_values(m).back();
  const Mat g = detail::small_side_gram(m);
  if (g.rows() <= detail::kGramEigenLimit)
    return std::sqrt(std::max(symmetric_eigenvalues(g).front(), 0.0));
  const double lmax = detail::power_iteration_max(g);
  return std::sqrt(detail::inverse_iteration_min(g, lmax));
}

/// Row-wise Kronecker product: row i of the result is A_i: (x) B_i:.
inline Mat khatri_rao(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw DimensionError("khatri_rao: row counts differ");
  Mat c(a.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    auto br = b.row(i);
    auto cr = c.row(i);
    for (std::size_t p = 0; p < ar.size(); ++p)
      for (std::size_t q = 0; q < br.size(); ++q) cr[p * br.size() + q] = ar[p] * br[q];
  }
  return c;
}

struct ProductNormReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// ||A_1 ... A_k||_F <= min_j ||A_j||_F prod_{i != j} ||A_i||_op
inline ProductNormReport check_product_norm_inequality(std::span<const Mat> chain) {
  if (chain.empty()) throw DimensionError("check_product_norm_inequality: empty chain");
  for (std::size_t i = 0; i + 1 < chain.size(); ++i)
    if (chain[i].cols() != chain[i + 1].rows())
      throw DimensionError("check_product_norm_inequality: chain not conformable at " +
                           std::to_string(i));
  Mat prod = chain[0];
  for (std::size_t i = 1; i < chain.size(); ++i) prod = matmul(prod, chain[i]);

  std::vector<double> op(chain.size());
  std::vector<double> fro(chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    op[i] = operator_norm(chain[i]);
    fro[i] = frobenius_norm(chain[i]);
  }
  double rhs = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < chain.size(); ++j) {
    double v = fro[j];
    for (std::size_t i = 0; i < chain.size(); ++i)
      if (i != j) v *= op[i];
    rhs = std::min(rhs, v);
  }
  ProductNormReport r;
  r.lhs = frobenius_norm(prod);
  r.rhs = rhs;
  r.holds = r.lhs <= r.rhs + 1e-9 * r.rhs;
  return r;
}

struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool equal = false;
};

/// ||(A^T * B)^T x||_2 == ||A diag(x) B||_F, with * the Khatri-Rao product.
inline IdentityReport check_diag_khatri_identity(const Mat& a, const Mat& b,
                                                 std::span<const double> x) {
  if (a.cols() != x.size() || b.rows() != x.size())
    throw DimensionError("check_diag_khatri_identity: A diag(x) B not defined");
  const Mat kr = khatri_rao(a.transpose(), b);  // n x (p q)
  const auto lhs_vec = matvec_t(kr, x);

  Mat scaled = a;  // A diag(x)
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= x[j];
  IdentityReport r;
  r.lhs = vec_norm(lhs_vec);
  r.rhs = frobenius_norm(matmul(scaled, b));
  r.equal = std::abs(r.lhs - r.rhs) <= 1e-9 * std::max(1.0, r.rhs);
  return r;
}

/// Relative closeness with the library-wide 1e-9 convention.
inline bool approx_equal(double a, double b, double rel = 1e-9) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace relucert
