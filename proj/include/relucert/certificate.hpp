/**
 * @file certificate.hpp
 * @brief Initialization-time convergence certificates.
 *
 * All quantities are evaluated at theta_0 and depend only on X, Y and the
 * initial weights:
 *
 *   a  = sqrt(L(theta_0))            alpha = sigma_min(H(theta_0)^T)
 *   c  = ||X||_op^2                  c1    = 2 sqrt(2) ||X||_op^2 ||V_0||_F
 *   c2 = 2 ||X||_op^3 ||W_0||_F
 *
 * theorem_certificate() is the sufficient condition for exponential decay
 * of the loss along every subgradient-flow solution; lemma_condition() is
 * the condition under which the scalar envelope stays below 2a/alpha^2.
 * The two weight the c1 term differently and are reported independently.
 *
 * Unnamed absolute constants of the asymptotic statements (width, k*,
 * hidden-layer-only width) are caller-supplied and default to 1.
 * Logarithms are natural.
 */
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "data.hpp"
#include "linalg.hpp"
#include "network.hpp"

namespace relucert {

struct Constants {
  double a = 0.0;
  double alpha = 0.0;
  double c = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double x_op = 0.0;
  double w0_fro = 0.0;
  double v0_fro = 0.0;
};

inline Constants compute_constants(const Mat& x, const Mat& y, const Params& theta0) {
  const ForwardCache fc = forward(x, y, theta0);
  Constants k;
  k.x_op = operator_norm(x);
  k.w0_fro = frobenius_norm(theta0.W);
  k.v0_fro = frobenius_norm(theta0.V);
  k.a = std::sqrt(detail::half_squared(fc.residual));
  k.alpha = alpha0(fc.hidden);
  k.c = k.x_op * k.x_op;
  k.c1 = 2.0 * std::sqrt(2.0) * k.c * k.v0_fro;
  k.c2 = 2.0 * k.c * k.x_op * k.w0_fro;
  return k;
}

/// Outcome of a condition that needs alpha > 0.
struct ConditionResult {
  double value = std::numeric_limits<double>::infinity();
  bool passes = false;
  std::optional<std::string> no_certificate_reason;  ///< set when alpha == 0
};

/// F = (a c1/alpha^3 + a^2 c2/alpha^5) exp(4 c a^2/alpha^4); passes iff F < 1/8.
inline ConditionResult theorem_certificate(const Constants& k) {
  ConditionResult r;
  if (!(k.alpha > 0.0)) {
    r.no_certificate_reason = "alpha_zero";
    return r;
  }
  const double a = k.a;
  const double al = k.alpha;
  r.value = (a * k.c1 / std::pow(al, 3) + a * a * k.c2 / std::pow(al, 5)) *
            std::exp(4.0 * k.c * a * a / std::pow(al, 4));
  r.passes = r.value < 0.125;
  return r;
}

/// 4 (a c1/alpha^3 + 2 a^2 c2/alpha^5) exp(4 c a^2/alpha^4); passes iff < 1.
inline ConditionResult lemma_condition(const Constants& k) {
  ConditionResult r;
  if (!(k.alpha > 0.0)) {
    r.no_certificate_reason = "alpha_zero";
    return r;
  }
  const double a = k.a;
  const double al = k.alpha;
  r.value = 4.0 * (a * k.c1 / std::pow(al, 3) + 2.0 * a * a * k.c2 / std::pow(al, 5)) *
            std::exp(4.0 * k.c * a * a / std::pow(al, 4));
  r.passes = r.value < 1.0;
  return r;
}

struct PredictedBounds {
  double loss_bound = 0.0;  ///< a^2 exp(-t alpha^2)
  double radius = 0.0;      ///< u ||theta_0|| e^u
  double u = 0.0;           ///< 4 ||X||_op a / alpha^2
};

inline PredictedBounds predicted_bounds(const Constants& k, double theta0_norm, double t) {
  if (!(k.alpha > 0.0)) throw std::domain_error("predicted_bounds: alpha must be positive");
  PredictedBounds b;
  b.loss_bound = k.a * k.a * std::exp(-t * k.alpha * k.alpha);
  b.u = 4.0 * k.x_op * k.a / (k.alpha * k.alpha);
  b.radius = b.u * theta0_norm * std::exp(b.u);
  return b;
}

struct Certificate {
  Constants constants;
  double F_value = std::numeric_limits<double>::infinity();
  bool theorem_passes = false;
  double lemma_value = std::numeric_limits<double>::infinity();
  bool lemma_passes = false;
  double decay_rate = 0.0;
  double confinement_radius = std::numeric_limits<double>::infinity();
  double loss0 = 0.0;
  std::optional<std::string> no_certificate_reason;
};

inline Certificate certify(const Mat& x, const Mat& y, const Params& theta0) {
  Certificate cert;
  cert.constants = compute_constants(x, y, theta0);
  const auto& k = cert.constants;
  cert.loss0 = k.a * k.a;
  cert.decay_rate = k.alpha * k.alpha;
  const auto thm = theorem_certificate(k);
  const auto lem = lemma_condition(k);
  cert.F_value = thm.value;
  cert.theorem_passes = thm.passes;
  cert.lemma_value = lem.value;
  cert.lemma_passes = lem.passes;
  cert.no_certificate_reason = thm.no_certificate_reason;
  if (k.alpha > 0.0) cert.confinement_radius = predicted_bounds(k, theta0.norm(), 0.0).radius;
  return cert;
}

struct WidthRequirement {
  double required_d1 = 0.0;
  bool d0_in_range = true;  ///< false when d0 is outside [N^delta0, N]
};

/// max(N, C [d2 N^2.5 / (d0 beta_w^2)]^{1/(1+rho)} log^2 N).
inline WidthRequirement width_requirement(std::size_t n, std::size_t d0, std::size_t d2, double rho,
                                          double beta_w, double delta0, double c_delta = 1.0) {
  if (n < 2) throw std::invalid_argument("width_requirement: N must be >= 2");
  if (!(beta_w > 0.0)) throw std::invalid_argument("width_requirement: beta_w must be positive");
  const double nn = static_cast<double>(n);
  const double bracket = static_cast<double>(d2) * std::pow(nn, 2.5) /
                         (static_cast<double>(d0) * beta_w * beta_w);
  const double log_n = std::log(nn);
  WidthRequirement w;
  w.required_d1 = std::max(nn, c_delta * std::pow(bracket, 1.0 / (1.0 + rho)) * log_n * log_n);
  const double d0d = static_cast<double>(d0);
  w.d0_in_range = d0d >= std::pow(nn, delta0) && d0d <= nn;
  return w;
}

/// floor(1 + N/(eta b) max(0, log(loss0_bound/eps)/decay_rate)).
inline long long k_star_bound(std::size_t n, std::size_t b, double eta, double eps, double decay_rate,
                              double loss0_bound) {
  if (!(eta > 0.0) || b == 0 || !(eps > 0.0))
    throw std::invalid_argument("k_star_bound: eta, b and eps must be positive");
  if (!(decay_rate > 0.0)) throw std::domain_error("k_star_bound: decay_rate must be positive");
  const double steps = static_cast<double>(n) / (eta * static_cast<double>(b)) *
                       std::max(0.0, std::log(loss0_bound / eps) / decay_rate);
  return static_cast<long long>(std::floor(1.0 + steps));
}

/// Loss bound C N log N d0 d1 beta_w^2 beta_v^2 used in place of a measured L(theta_0).
inline double loss0_bound_expression(std::size_t n, std::size_t d0, std::size_t d1, double beta_w,
                                     double beta_v, double c = 1.0) {
  const double nn = static_cast<double>(n);
  return c * nn * std::log(nn) * static_cast<double>(d0) * static_cast<double>(d1) * beta_w * beta_w *
         beta_v * beta_v;
}

struct OneLayerCertificate {
  double beta0 = 0.0;
  bool width_ok = false;
  double width_required = 0.0;
  double condition_value = std::numeric_limits<double>::infinity();
  bool condition_small = false;  ///< condition_value < threshold
  double threshold = 0.5;
};

/// Hidden-layer-only training: beta0 = sigma_min((X * (R0 diag(v)))^T).
inline OneLayerCertificate one_layer_certificate(const Mat& x, const Mat& y, const Mat& w0, const Mat& v,
                                                 SelectionRule rule = SelectionRule::zero,
                                                 double c_width = 1.0, double threshold = 0.5) {
  if (y.cols() != 1 || v.cols() != 1) throw DimensionError("one_layer_certificate: requires d2 = 1");
  const Params p{w0, v};
  detail::check_labels(x, y, p);
  const std::size_t n = x.rows();
  const std::size_t d0 = x.cols();
  const std::size_t d1 = w0.cols();

  const Mat z = matmul(x, w0);
  Mat rv(n, d1);  // R0 diag(v)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d1; ++j) rv(i, j) = relu_derivative(z(i, j), rule) * v(j, 0);

  OneLayerCertificate out;
  out.threshold = threshold;
  // (X * RV)^T is (d0 d1) x N; its smallest singular value is sigma_min over N values.
  const Mat kr = khatri_rao(x, rv);
  out.beta0 = kr.cols() < kr.rows() ? 0.0 : sigma_min(kr);

  const double nn = static_cast<double>(n);
  const double d0d = static_cast<double>(d0);
  const double d1d = static_cast<double>(d1);
  out.width_required = c_width * std::max(nn * std::log(nn) / d0d, std::pow(nn, 5) / std::pow(d0d, 4));
  out.width_ok = d1d >= out.width_required;

  const double y_norm = vec_norm(y.data());
  const double sqrt_loss0 = std::sqrt(loss(x, y, p));
  if (out.beta0 > 0.0) {
    const double inner = d1d * y_norm / std::sqrt(d0d) * sqrt_loss0 / (out.beta0 * out.beta0);
    out.condition_value = y_norm / (out.beta0 * std::sqrt(d0d * d1d)) *
                          (std::sqrt(std::log(nn)) + std::cbrt(inner));
  }
  out.condition_small = out.condition_value < threshold;
  return out;
}

}  // namespace relucert
