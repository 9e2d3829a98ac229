/**
 * @file ode.hpp
 * @brief Scalar envelope of the integrated root-loss.
 *
 * The integral ybar(t) = int_0^t sqrt(L(theta(s))) ds of any subgradient
 * flow solution satisfies
 *
 *   y(0) = 0,  y'(t) <= a exp(alpha t (c1 y + c2 y^2) e^{c y^2} - alpha^2 t).
 *
 * Here the inequality is integrated as an equality. The right-hand side is
 * nondecreasing in y, so the equality solution dominates every solution of
 * the inequality with the same start, and a bounded equality solution
 * certifies boundedness of the inequality.
 *
 * Integration uses the Dormand-Prince 5(4) embedded pair with per-step
 * error control.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace relucert {

struct EnvelopeParams {
  double a = 0.0;
  double alpha = 1.0;
  double c = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

/// 4 (a c1/alpha^3 + 2 a^2 c2/alpha^5) exp(4 c a^2/alpha^4).
inline double envelope_condition_value(const EnvelopeParams& p) {
  return 4.0 * (p.a * p.c1 / std::pow(p.alpha, 3) + 2.0 * p.a * p.a * p.c2 / std::pow(p.alpha, 5)) *
         std::exp(4.0 * p.c * p.a * p.a / std::pow(p.alpha, 4));
}

inline double envelope_rhs(const EnvelopeParams& p, double t, double y) {
  const double growth = (p.c1 * y + p.c2 * y * y) * std::exp(p.c * y * y);
  return p.a * std::exp(p.alpha * t * growth - p.alpha * p.alpha * t);
}

struct Bounded {
  double sup_y = 0.0;
};
struct Blowup {
  double t_blow = 0.0;
};
using EnvelopeClass = std::variant<Bounded, Blowup>;

inline bool is_bounded(const EnvelopeClass& c) { return std::holds_alternative<Bounded>(c); }

struct StepControl {
  double rtol = 1e-8;
  double atol = 1e-14;
  std::size_t max_steps = 2'000'000;
  /// Times at which the solution must be recorded exactly (sorted, inside the horizon).
  std::vector<double> output_times;
  bool stop_when_settled = true;
};

struct EnvelopeResult {
  std::vector<double> times;
  std::vector<double> y;
  std::vector<double> dy;  ///< right-hand side at (times[i], y[i])
  EnvelopeClass classification = Bounded{};
  double condition_value = 0.0;
};

inline double default_horizon(double alpha) { return 50.0 / (alpha * alpha); }

inline EnvelopeResult integrate_envelope(const EnvelopeParams& p, double horizon, const StepControl& ctl = {}) {
  if (!(horizon > 0.0)) throw std::invalid_argument("integrate_envelope: horizon must be positive");
  if (!std::isfinite(p.a) || !std::isfinite(p.alpha) || !std::isfinite(p.c) || !std::isfinite(p.c1) ||
      !std::isfinite(p.c2))
    throw std::invalid_argument("integrate_envelope: non-finite parameter");

  EnvelopeResult r;
  r.condition_value = p.alpha > 0.0 ? envelope_condition_value(p) : std::numeric_limits<double>::infinity();
  const double f0 = envelope_rhs(p, 0.0, 0.0);
  if (!std::isfinite(f0)) throw std::logic_error("integrate_envelope: non-finite right-hand side at t = 0");

  r.times.push_back(0.0);
  r.y.push_back(0.0);
  r.dy.push_back(f0);
  if (p.a == 0.0) {
    r.classification = Bounded{0.0};
    for (double t : ctl.output_times) {
      r.times.push_back(t);
      r.y.push_back(0.0);
      r.dy.push_back(0.0);
    }
    return r;
  }

  const double blow_level = 1e6 * std::max(1.0, p.alpha > 0.0 ? 2.0 * p.a / (p.alpha * p.alpha) : 1.0);
  const double min_step = 1e-14 * horizon;

  // Dormand-Prince coefficients.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  double t = 0.0;
  double y = 0.0;
  double k1 = f0;
  double h = std::min(horizon * 1e-3, 0.01 / std::max(1.0, p.alpha * p.alpha));
  std::size_t next_out = 0;
  double sup_y = 0.0;

  for (std::size_t step = 0; step < ctl.max_steps && t < horizon; ++step) {
    double target = horizon;
    bool hits_output = false;
    if (next_out < ctl.output_times.size() && ctl.output_times[next_out] <= horizon) {
      target = ctl.output_times[next_out];
      hits_output = true;
    }
    const bool clipped = t + h >= target;
    const double hs = clipped ? target - t : h;
    if (h < min_step) {
      r.classification = Blowup{t};
      return r;
    }

    const double k2 = envelope_rhs(p, t + c2 * hs, y + hs * a21 * k1);
    const double k3 = envelope_rhs(p, t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    const double k4 = envelope_rhs(p, t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const double k5 = envelope_rhs(p, t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const double k6 =
        envelope_rhs(p, t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const double y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const double k7 = envelope_rhs(p, t + hs, y_new);
    const double err_est = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    const bool finite = std::isfinite(y_new) && std::isfinite(k7) && std::isfinite(err_est);
    const double scale = ctl.atol + ctl.rtol * std::max(std::abs(y), std::abs(y_new));
    const double err = finite ? std::abs(err_est) / scale : std::numeric_limits<double>::infinity();

    if (err <= 1.0) {
      t = clipped ? target : t + hs;
      y = y_new;
      k1 = k7;
      sup_y = std::max(sup_y, y);
      r.times.push_back(t);
      r.y.push_back(y);
      r.dy.push_back(k7);
      if (hits_output && clipped) ++next_out;
      if (y > blow_level) {
        r.classification = Blowup{t};
        return r;
      }
      if (ctl.stop_when_settled && next_out >= ctl.output_times.size()) {
        const double growth = (p.c1 * y + p.c2 * y * y) * std::exp(p.c * y * y);
        if (k7 < 1e-14 * p.a && p.alpha * growth < p.alpha * p.alpha) break;
      }
      if (!clipped) h *= err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    } else {
      h = hs * (std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.25), 0.1, 0.5) : 0.1);
    }
  }
  r.classification = Bounded{sup_y};
  return r;
}

struct LemmaCheck {
  bool condition_holds = false;
  bool sup_bound_ok = true;        ///< sup y <= 2a/alpha^2 (1 + 1e-6)
  bool derivative_bound_ok = true; ///< y'(t) e^{alpha^2 t/2} / a <= 1 + 1e-6
  bool pointwise_bound_ok = true;  ///< y(t) <= 2a/alpha^2 (1 - e^{-alpha^2 t/2}) (1 + 1e-6)
  double max_derivative_ratio = 0.0;
};

struct Classification {
  EnvelopeResult result;
  LemmaCheck lemma;
};

inline LemmaCheck check_envelope_lemma(const EnvelopeParams& p, const EnvelopeResult& r) {
  LemmaCheck lc;
  lc.condition_holds = p.alpha > 0.0 && r.condition_value < 1.0;
  if (!lc.condition_holds || p.a == 0.0) return lc;
  const double cap = 2.0 * p.a / (p.alpha * p.alpha);
  const double tol = 1.0 + 1e-6;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    const double t = r.times[i];
    if (r.y[i] > cap * tol) lc.sup_bound_ok = false;
    if (r.y[i] > cap * (1.0 - std::exp(-p.alpha * p.alpha * t / 2.0)) * tol + 1e-300) lc.pointwise_bound_ok = false;
    const double ratio = r.dy[i] * std::exp(p.alpha * p.alpha * t / 2.0) / p.a;
    lc.max_derivative_ratio = std::max(lc.max_derivative_ratio, ratio);
  }
  lc.derivative_bound_ok = lc.max_derivative_ratio <= tol;
  return lc;
}

inline Classification classify(const EnvelopeParams& p, double horizon, const StepControl& ctl = {}) {
  if (!(p.alpha > 0.0)) throw std::invalid_argument("classify: alpha must be positive");
  Classification c;
  c.result = integrate_envelope(p, horizon, ctl);
  c.lemma = check_envelope_lemma(p, c.result);
  return c;
}

struct SweepRow {
  double alpha = 0.0;
  double condition_value = 0.0;
  bool bounded = false;
  double sup_y = std::numeric_limits<double>::quiet_NaN();
  double t_blow = std::numeric_limits<double>::quiet_NaN();
  LemmaCheck lemma;
  EnvelopeResult trajectory;
};

/// One classification per alpha on an evenly spaced grid; horizon <= 0 selects 50/alpha^2.
inline std::vector<SweepRow> sweep_alpha(const EnvelopeParams& tmpl, double alpha_lo, double alpha_hi,
                                         std::size_t n_points, double horizon = 0.0,
                                         const StepControl& ctl = {}) {
  if (n_points == 0 || !(alpha_hi >= alpha_lo) || !(alpha_lo > 0.0))
    throw std::invalid_argument("sweep_alpha: empty or invalid range");
  std::vector<SweepRow> rows;
  rows.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    EnvelopeParams p = tmpl;
    p.alpha = n_points == 1 ? alpha_lo
                            : alpha_lo + (alpha_hi - alpha_lo) * static_cast<double>(i) /
                                             static_cast<double>(n_points - 1);
    const double hz = horizon > 0.0 ? horizon : default_horizon(p.alpha);
    auto c = classify(p, hz, ctl);
    SweepRow row;
    row.alpha = p.alpha;
    row.condition_value = c.result.condition_value;
    row.bounded = is_bounded(c.result.classification);
    if (row.bounded)
      row.sup_y = std::get<Bounded>(c.result.classification).sup_y;
    else
      row.t_blow = std::get<Blowup>(c.result.classification).t_blow;
    row.lemma = c.lemma;
    row.trajectory = std::move(c.result);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// True when the sweep (ascending alpha) starts with blowups and switches to bounded exactly once.
inline bool has_single_transition(const std::vector<SweepRow>& rows) {
  if (rows.empty() || rows.front().bounded || !rows.back().bounded) return false;
  std::size_t switches = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) switches += rows[i].bounded != rows[i - 1].bounded;
  return switches == 1;
}

/// Midpoint between the last blowup and the first bounded alpha; NaN without a transition.
inline double transition_alpha(const std::vector<SweepRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!rows[i - 1].bounded && rows[i].bounded) return 0.5 * (rows[i - 1].alpha + rows[i].alpha);
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace relucert
