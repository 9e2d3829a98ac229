/**
 * @file network.hpp
 * @brief One-hidden-layer ReLU network Y_hat = relu(X W) V with the
 *        squared loss 0.5 ||Y - Y_hat||_F^2.
 *
 * Subgradients are the Clarke elements obtained by fixing the ReLU
 * derivative at a preactivation of exactly zero (SelectionRule). They are
 * returned as ascent directions: a step is theta - eta * g.
 *
 * Flattening of theta (used by jacobian() and flatten()): all entries of W
 * in column-major order (input index fastest), followed by all entries of
 * V in column-major order (hidden index fastest).
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "data.hpp"
#include "linalg.hpp"

namespace relucert {

/// Value of relu'(0) used by a Clarke selection.
enum class SelectionRule { zero, half, one };

inline double relu_derivative(double z, SelectionRule rule) noexcept {
  if (z > 0.0) return 1.0;
  if (z < 0.0) return 0.0;
  switch (rule) {
    case SelectionRule::half: return 0.5;
    case SelectionRule::one: return 1.0;
    case SelectionRule::zero: break;
  }
  return 0.0;
}

struct ForwardCache {
  Mat preactivation;  ///< X W
  Mat hidden;         ///< relu(X W)
  Mat output;         ///< hidden V
  Mat residual;       ///< Y - output (empty when no labels were given)
};

struct Subgradient {
  Mat gW;
  Mat gV;
  SelectionRule selection_rule = SelectionRule::zero;
};

struct ActivationPattern {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> mask;  ///< row-major, 1 where preactivation > 0
  std::size_t zero_count = 0;      ///< entries with |preactivation| < threshold
};

namespace detail {

inline void check_shapes(const Mat& x, const Params& p) {
  if (x.cols() != p.W.rows()) throw DimensionError("network: X columns != W rows");
  if (p.W.cols() != p.V.rows()) throw DimensionError("network: W columns != V rows");
}

inline void check_labels(const Mat& x, const Mat& y, const Params& p) {
  check_shapes(x, p);
  if (y.rows() != x.rows()) throw DimensionError("network: X and Y row counts differ");
  if (y.cols() != p.V.cols()) throw DimensionError("network: Y columns != V columns");
}

inline Mat relu(Mat z) {
  for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  return z;
}

inline Mat gather_rows(const Mat& m, std::span<const std::size_t> idx) {
  Mat out(idx.size(), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto src = m.row(idx[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

inline void check_batch(std::span<const std::size_t> batch, std::size_t n) {
  if (batch.empty()) throw std::invalid_argument("batch index set is empty");
  for (std::size_t i : batch)
    if (i >= n) throw std::out_of_range("batch index out of range");
}

inline double half_squared(const Mat& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return 0.5 * s;
}

}  // namespace detail

inline ForwardCache forward(const Mat& x, const Params& p) {
  detail::check_shapes(x, p);
  ForwardCache c;
  c.preactivation = matmul(x, p.W);
  c.hidden = detail::relu(c.preactivation);
  c.output = matmul(c.hidden, p.V);
  return c;
}

inline ForwardCache forward(const Mat& x, const Mat& y, const Params& p) {
  detail::check_labels(x, y, p);
  ForwardCache c = forward(x, p);
  c.residual = y - c.output;
  return c;
}

inline double loss(const Mat& x, const Mat& y, const Params& p) {
  return detail::half_squared(forward(x, y, p).residual);
}

inline std::vector<std::size_t> full_batch(std::size_t n) {
  std::vector<std::size_t> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = i;
  return a;
}

inline double batch_loss(const Mat& x, const Mat& y, const Params& p, std::span<const std::size_t> batch) {
  detail::check_labels(x, y, p);
  detail::check_batch(batch, x.rows());
  return loss(detail::gather_rows(x, batch), detail::gather_rows(y, batch), p);
}

/// Forward pass, loss and subgradient on one batch, sharing the intermediate products.
struct BatchEvaluation {
  ForwardCache cache;  ///< on the gathered batch rows
  Subgradient grad;
  double loss = 0.0;
};

inline BatchEvaluation evaluate_batch(const Mat& x, const Mat& y, const Params& p,
                                      std::span<const std::size_t> batch, SelectionRule rule,
                                      bool need_v = true) {
  detail::check_labels(x, y, p);
  detail::check_batch(batch, x.rows());
  bool identity = batch.size() == x.rows();
  for (std::size_t k = 0; identity && k < batch.size(); ++k) identity = batch[k] == k;
  Mat gathered_x;
  Mat gathered_y;
  if (!identity) {
    gathered_x = detail::gather_rows(x, batch);
    gathered_y = detail::gather_rows(y, batch);
  }
  const Mat& xa = identity ? x : gathered_x;
  const Mat& ya = identity ? y : gathered_y;
  BatchEvaluation e;
  e.cache = forward(xa, ya, p);
  e.loss = detail::half_squared(e.cache.residual);
  e.grad.selection_rule = rule;

  // diff = Y_hat - Y, so that g is an ascent element.
  Mat diff = e.cache.output - ya;
  Mat m = matmul_nt(diff, p.V);  // |A| x d1
  const double at_zero = relu_derivative(0.0, rule);
  const auto z = e.cache.preactivation.data();
  auto md = m.data();
  for (std::size_t k = 0; k < md.size(); ++k) md[k] *= z[k] > 0.0 ? 1.0 : (z[k] < 0.0 ? 0.0 : at_zero);
  e.grad.gW = matmul_tn(xa, m);
  e.grad.gV = need_v ? matmul_tn(e.cache.hidden, diff) : Mat(p.V.rows(), p.V.cols());
  return e;
}

inline Subgradient subgradient(const Mat& x, const Mat& y, const Params& p,
                               std::span<const std::size_t> batch,
                               SelectionRule rule = SelectionRule::zero) {
  return evaluate_batch(x, y, p, batch, rule).grad;
}

inline Subgradient subgradient(const Mat& x, const Mat& y, const Params& p,
                               SelectionRule rule = SelectionRule::zero) {
  const auto all = full_batch(x.rows());
  return subgradient(x, y, p, all, rule);
}

/// Stacks (gW, gV) in the parameter flattening order.
inline std::vector<double> flatten(const Mat& w, const Mat& v) {
  std::vector<double> out;
  out.reserve(w.size() + v.size());
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t i = 0; i < w.rows(); ++i) out.push_back(w(i, j));
  for (std::size_t m = 0; m < v.cols(); ++m)
    for (std::size_t j = 0; j < v.rows(); ++j) out.push_back(v(j, m));
  return out;
}
inline std::vector<double> flatten(const Subgradient& g) { return flatten(g.gW, g.gV); }
inline std::vector<double> flatten(const Params& p) { return flatten(p.W, p.V); }

inline ActivationPattern activation_pattern(const Mat& x, const Params& p, double zero_threshold = 1e-8) {
  if (!(zero_threshold > 0.0)) throw std::invalid_argument("activation_pattern: threshold must be > 0");
  detail::check_shapes(x, p);
  const Mat z = matmul(x, p.W);
  ActivationPattern a;
  a.rows = z.rows();
  a.cols = z.cols();
  a.mask.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double v = z.data()[k];
    a.mask[k] = v > 0.0 ? 1 : 0;
    if (std::abs(v) < zero_threshold) ++a.zero_count;
  }
  return a;
}

inline std::size_t hamming_distance(const ActivationPattern& a, const ActivationPattern& b) {
  if (a.mask.size() != b.mask.size()) throw DimensionError("hamming_distance: pattern sizes differ");
  std::size_t h = 0;
  for (std::size_t k = 0; k < a.mask.size(); ++k) h += a.mask[k] != b.mask[k];
  return h;
}

/// Which parameter blocks the Jacobian covers.
enum class JacobianBlocks { both, w_only };

/// d vec(Y_hat) / d theta, rows ordered (i, m) -> i * d2 + m.
inline Mat jacobian(const Mat& x, const Params& p, SelectionRule rule = SelectionRule::zero,
                    JacobianBlocks blocks = JacobianBlocks::both) {
  detail::check_shapes(x, p);
  const std::size_t n = x.rows();
  const std::size_t d0 = p.d0();
  const std::size_t d1 = p.d1();
  const std::size_t d2 = p.d2();
  const std::size_t dw = d0 * d1;
  const std::size_t cols = blocks == JacobianBlocks::both ? dw + d1 * d2 : dw;
  const Mat z = matmul(x, p.W);
  Mat j(n * d2, cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < d2; ++m) {
      auto row = j.row(i * d2 + m);
      for (std::size_t h = 0; h < d1; ++h) {
        const double zh = z(i, h);
        const double coef = relu_derivative(zh, rule) * p.V(h, m);
        if (coef != 0.0)
          for (std::size_t q = 0; q < d0; ++q) row[h * d0 + q] = x(i, q) * coef;
        if (blocks == JacobianBlocks::both) row[dw + m * d1 + h] = zh > 0.0 ? zh : 0.0;
      }
    }
  }
  return j;
}

namespace detail {

/// Row factors of the Jacobian: A[(i,m), h] = relu'(z_ih) V_hm and B = relu(X W).
struct JacobianFactors {
  Mat a;  ///< (N d2) x d1
  Mat b;  ///< N x d1
};

inline JacobianFactors jacobian_factors(const Mat& x, const Params& p, SelectionRule rule) {
  const Mat z = matmul(x, p.W);
  const std::size_t n = z.rows();
  const std::size_t d1 = p.d1();
  const std::size_t d2 = p.d2();
  JacobianFactors f{Mat(n * d2, d1), relu(z)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < d2; ++m)
      for (std::size_t h = 0; h < d1; ++h) f.a(i * d2 + m, h) = relu_derivative(z(i, h), rule) * p.V(h, m);
  return f;
}

/// J J^T from factors: <X_i, X_j> <A_(i,m), A_(j,m')> + [m = m'] <B_i, B_j>.
inline Mat gram_from_factors(const Mat& x, const JacobianFactors& f, std::size_t d2, JacobianBlocks blocks) {
  const Mat xx = gram_rows(x);
  const Mat aa = gram_rows(f.a);
  const Mat bb = blocks == JacobianBlocks::both ? gram_rows(f.b) : Mat();
  const std::size_t n = x.rows();
  Mat k(n * d2, n * d2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < d2; ++m)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t mm = 0; mm < d2; ++mm) {
          double v = xx(i, j) * aa(i * d2 + m, j * d2 + mm);
          if (blocks == JacobianBlocks::both && m == mm) v += bb(i, j);
          k(i * d2 + m, j * d2 + mm) = v;
        }
  return k;
}

}  // namespace detail

/// J J^T for the Jacobian of jacobian(), without forming the (N d2) x D matrix.
inline Mat jacobian_gram(const Mat& x, const Params& p, SelectionRule rule = SelectionRule::zero,
                         JacobianBlocks blocks = JacobianBlocks::both) {
  detail::check_shapes(x, p);
  return detail::gram_from_factors(x, detail::jacobian_factors(x, p, rule), p.d2(), blocks);
}

/// (J(q) - J(p)) (J(q) - J(p))^T; both Jacobians are linear in their factors.
inline Mat jacobian_difference_gram(const Mat& x, const Params& p, const Params& q,
                                    SelectionRule rule = SelectionRule::zero,
                                    JacobianBlocks blocks = JacobianBlocks::both) {
  detail::check_shapes(x, p);
  detail::check_shapes(x, q);
  if (p.W.rows() != q.W.rows() || p.W.cols() != q.W.cols() || p.V.cols() != q.V.cols())
    throw DimensionError("jacobian_difference_gram: parameter shapes differ");
  auto fp = detail::jacobian_factors(x, p, rule);
  auto fq = detail::jacobian_factors(x, q, rule);
  fq.a -= fp.a;
  fq.b -= fp.b;
  return detail::gram_from_factors(x, fq, p.d2(), blocks);
}

/// sigma_min(H^T) = sqrt(lambda_min(H H^T)); zero when d1 < N (rank deficiency).
inline double alpha0(const Mat& hidden) {
  if (hidden.cols() < hidden.rows()) return 0.0;
  return sigma_min(hidden);
}

inline double alpha0(const Mat& x, const Params& p) { return alpha0(forward(x, p).hidden); }

}  // namespace relucert
