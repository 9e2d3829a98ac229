/**
 * @file dynamics.hpp
 * @brief Subgradient flow (fine forward Euler), mini-batch SGD with heavy-ball
 *        momentum, the piecewise-linear interpolated process, and checks of
 *        the trajectory-level inequalities along simulated paths.
 *
 * SGD follows theta_{k+1} = theta_k - eta * m_{k+1}, m_{k+1} = mu m_k + g_k,
 * where g_k is the subgradient of the batch loss 0.5 sum_{i in A_k} ||Y_i - Y_hat_i||^2
 * and A_k is a uniformly random b-subset of [N], drawn independently at
 * every step. With b = N and mu = 0 the recursion is exactly the Euler
 * scheme used for the flow, bit for bit.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "certificate.hpp"
#include "data.hpp"
#include "network.hpp"
#include "rng.hpp"

namespace relucert {

enum class TrainLayers { both, w_only };
enum class TrajectoryKind { flow, sgd };

struct TrajectoryRecord {
  std::size_t k = 0;
  double t = 0.0;  ///< k * step_size
  double loss = 0.0;
  double theta_dist = 0.0;  ///< ||theta_k - theta_0||
  double w_dist = 0.0;      ///< ||W_k - W_0||_F
  double alpha0 = std::numeric_limits<double>::quiet_NaN();
  std::size_t zeros = 0;
};

struct TrajectoryLog {
  double step_size = 0.0;
  TrajectoryKind kind = TrajectoryKind::flow;
  std::size_t thinning = 1;
  std::vector<TrajectoryRecord> iterates;
  bool diverged = false;
  /// theta_k for every k when requested (needed by interpolate()).
  std::vector<Params> snapshots;
  Params final_params;
};

struct SgdConfig {
  double eta = 1e-3;
  std::size_t batch_size = 1;
  double momentum = 0.0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  SelectionRule rule = SelectionRule::zero;
  std::size_t thin = 1;
  double zero_threshold = 1e-8;
  bool compute_alpha0 = false;
  bool keep_params = false;
};

struct FlowConfig {
  double eta_ref = 1e-4;
  double max_time = 1.0;
  double stop_loss = 0.0;
  std::size_t thin = 1;
  SelectionRule rule = SelectionRule::zero;
  double zero_threshold = 1e-8;
  bool compute_alpha0 = true;
  bool keep_params = false;
};

namespace detail {

inline void axpy(Mat& y, double a, const Mat& x) {
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t k = 0; k < yd.size(); ++k) yd[k] += a * xd[k];
}

inline std::size_t count_zeros(const Mat& pre, double threshold) {
  std::size_t z = 0;
  for (double v : pre.data()) z += std::abs(v) < threshold;
  return z;
}

inline double fro_diff(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a.data()[k] - b.data()[k];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Stepwise SGD driver; run_sgd() and run_flow() are thin loops around it.
class SgdRunner {
 public:
  SgdRunner(const Mat& x, const Mat& y, Params theta0, const SgdConfig& cfg,
            TrainLayers layers = TrainLayers::both)
      : x_(x), y_(y), theta0_(theta0), theta_(std::move(theta0)), cfg_(cfg), layers_(layers),
        rng_(make_stream(cfg.seed, StreamPurpose::batches)),
        mom_w_(theta_.W.rows(), theta_.W.cols()), mom_v_(theta_.V.rows(), theta_.V.cols()),
        all_(full_batch(x.rows())) {
    detail::check_labels(x, y, theta_);
    if (cfg.batch_size == 0 || cfg.batch_size > x.rows())
      throw std::invalid_argument("SgdConfig: batch size must be in [1, N]");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
      throw std::invalid_argument("SgdConfig: momentum must be in [0, 1)");
    if (!(cfg.eta >= 0.0)) throw std::invalid_argument("SgdConfig: eta must be nonnegative");
  }

  [[nodiscard]] const Params& theta() const noexcept { return theta_; }
  [[nodiscard]] const Params& theta0() const noexcept { return theta0_; }
  [[nodiscard]] std::size_t k() const noexcept { return k_; }
  [[nodiscard]] const SgdConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] TrainLayers layers() const noexcept { return layers_; }

  /// Full-data evaluation at the current iterate.
  [[nodiscard]] BatchEvaluation evaluate_full() const {
    return evaluate_batch(x_, y_, theta_, all_, cfg_.rule, layers_ == TrainLayers::both);
  }

  /// One update. If `full_eval` is given and the batch is all of [N], it is reused.
  void step(const BatchEvaluation* full_eval = nullptr) {
    std::vector<std::size_t> batch;
    if (cfg_.batch_size == x_.rows()) {
      batch = all_;
    } else {
      batch.reserve(cfg_.batch_size);
      std::sample(all_.begin(), all_.end(), std::back_inserter(batch), cfg_.batch_size, rng_);
    }
    const bool need_v = layers_ == TrainLayers::both;
    BatchEvaluation local;
    const BatchEvaluation* e = full_eval;
    if (e == nullptr || batch.size() != x_.rows()) {
      local = evaluate_batch(x_, y_, theta_, batch, cfg_.rule, need_v);
      e = &local;
    }
    apply(e->grad);
    ++k_;
  }

  void apply(const Subgradient& g) {
    const bool need_v = layers_ == TrainLayers::both;
    if (cfg_.momentum == 0.0) {
      detail::axpy(theta_.W, -cfg_.eta, g.gW);
      if (need_v) detail::axpy(theta_.V, -cfg_.eta, g.gV);
      return;
    }
    mom_w_ *= cfg_.momentum;
    mom_w_ += g.gW;
    detail::axpy(theta_.W, -cfg_.eta, mom_w_);
    if (need_v) {
      mom_v_ *= cfg_.momentum;
      mom_v_ += g.gV;
      detail::axpy(theta_.V, -cfg_.eta, mom_v_);
    }
  }

  [[nodiscard]] TrajectoryRecord record(const BatchEvaluation& full, bool with_alpha0) const {
    TrajectoryRecord r;
    r.k = k_;
    r.t = static_cast<double>(k_) * cfg_.eta;
    r.loss = full.loss;
    r.w_dist = detail::fro_diff(theta_.W, theta0_.W);
    const double v_dist = detail::fro_diff(theta_.V, theta0_.V);
    r.theta_dist = std::sqrt(r.w_dist * r.w_dist + v_dist * v_dist);
    if (with_alpha0) r.alpha0 = alpha0(full.cache.hidden);
    r.zeros = detail::count_zeros(full.cache.preactivation, cfg_.zero_threshold);
    return r;
  }

 private:
  const Mat& x_;
  const Mat& y_;
  Params theta0_;
  Params theta_;
  SgdConfig cfg_;
  TrainLayers layers_;
  Philox rng_;
  Mat mom_w_;
  Mat mom_v_;
  std::vector<std::size_t> all_;
  std::size_t k_ = 0;
};

inline TrajectoryLog run_sgd(const Mat& x, const Mat& y, const Params& theta0, const SgdConfig& cfg,
                             TrainLayers layers = TrainLayers::both, double stop_loss = 0.0) {
  if (cfg.thin == 0) throw std::invalid_argument("run_sgd: thinning must be >= 1");
  SgdRunner runner(x, y, theta0, cfg, layers);
  TrajectoryLog log;
  log.kind = TrajectoryKind::sgd;
  log.step_size = cfg.eta;
  log.thinning = cfg.thin;
  double loss0 = -1.0;
  for (std::size_t k = 0;; ++k) {
    const bool last = k == cfg.steps;
    const bool logged = last || k % cfg.thin == 0;
    std::optional<BatchEvaluation> full;
    if (logged || cfg.batch_size == x.rows()) full = runner.evaluate_full();
    if (logged) {
      log.iterates.push_back(runner.record(*full, cfg.compute_alpha0));
      if (loss0 < 0.0) loss0 = full->loss;
    }
    if (cfg.keep_params) log.snapshots.push_back(runner.theta());
    if (full && !std::isfinite(full->loss)) {
      log.diverged = true;
      break;
    }
    if (full && loss0 > 0.0 && full->loss > 1e6 * loss0) {
      log.diverged = true;
      if (!logged) log.iterates.push_back(runner.record(*full, cfg.compute_alpha0));
      break;
    }
    if (last) break;
    if (full && full->loss < stop_loss) {
      if (!logged) log.iterates.push_back(runner.record(*full, cfg.compute_alpha0));
      break;
    }
    runner.step(full ? &*full : nullptr);
  }
  log.final_params = runner.theta();
  return log;
}

/// Forward-Euler subgradient flow on the full loss, t = k * eta_ref.
inline TrajectoryLog run_flow(const Mat& x, const Mat& y, const Params& theta0, const FlowConfig& fc) {
  if (!(fc.eta_ref > 0.0)) throw std::invalid_argument("run_flow: eta_ref must be positive");
  if (fc.thin == 0) throw std::invalid_argument("run_flow: thinning must be >= 1");
  SgdConfig cfg;
  cfg.eta = fc.eta_ref;
  cfg.batch_size = x.rows();
  cfg.momentum = 0.0;
  cfg.rule = fc.rule;
  cfg.thin = fc.thin;
  cfg.zero_threshold = fc.zero_threshold;
  cfg.compute_alpha0 = fc.compute_alpha0;
  cfg.keep_params = fc.keep_params;
  cfg.steps = static_cast<std::size_t>(std::ceil(fc.max_time / fc.eta_ref - 1e-9));
  TrajectoryLog log = run_sgd(x, y, theta0, cfg, TrainLayers::both, fc.stop_loss);
  log.kind = TrajectoryKind::flow;
  return log;
}

/// theta_k + (t/eta - k)(theta_{k+1} - theta_k) for t in [k eta, (k+1) eta).
inline Params interpolate(const TrajectoryLog& log, double t) {
  if (log.snapshots.empty()) throw std::invalid_argument("interpolate: log has no parameter snapshots");
  const double tmax = static_cast<double>(log.snapshots.size() - 1) * log.step_size;
  if (!(t >= 0.0) || t > tmax * (1.0 + 1e-12)) throw std::out_of_range("interpolate: t outside logged range");
  const double s = t / log.step_size;
  auto k = static_cast<std::size_t>(std::floor(s));
  if (k >= log.snapshots.size() - 1) return log.snapshots.back();
  const double frac = s - static_cast<double>(k);
  Params p = log.snapshots[k];
  if (frac == 0.0) return p;
  const Params& q = log.snapshots[k + 1];
  for (std::size_t i = 0; i < p.W.size(); ++i) p.W.data()[i] += frac * (q.W.data()[i] - p.W.data()[i]);
  for (std::size_t i = 0; i < p.V.size(); ++i) p.V.data()[i] += frac * (q.V.data()[i] - p.V.data()[i]);
  return p;
}

struct DistanceRow {
  double eta = 0.0;
  double sup_distance = 0.0;
};

struct FlowSgdSpec {
  std::vector<double> etas;  ///< SGD step sizes
  std::size_t batch_size = 1;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  double horizon = 1.0;  ///< in flow time
  double eta_ref = 0.0;  ///< <= 0 selects min(etas)/100
  SelectionRule rule = SelectionRule::zero;
};

/// Sup over flow-time grid of ||theta_flow(t) - theta_bar^eta(t N / b)||.
inline std::vector<DistanceRow> flow_sgd_distance(const Mat& x, const Mat& y, const Params& theta0,
                                                  const FlowSgdSpec& spec) {
  if (spec.etas.empty()) throw std::invalid_argument("flow_sgd_distance: no step sizes");
  const double eta_min = *std::min_element(spec.etas.begin(), spec.etas.end());
  const double eta_ref = spec.eta_ref > 0.0 ? spec.eta_ref : eta_min / 100.0;
  if (eta_ref > eta_min / 100.0 * (1.0 + 1e-12))
    throw std::invalid_argument("flow_sgd_distance: eta_ref must be <= min(eta)/100");
  const double n_over_b = static_cast<double>(x.rows()) / static_cast<double>(spec.batch_size);

  std::vector<TrajectoryLog> sgd_logs;
  for (double eta : spec.etas) {
    SgdConfig cfg;
    cfg.eta = eta;
    cfg.batch_size = spec.batch_size;
    cfg.momentum = spec.momentum;
    cfg.seed = spec.seed;
    cfg.rule = spec.rule;
    cfg.keep_params = true;
    cfg.thin = std::numeric_limits<std::size_t>::max();
    cfg.steps = static_cast<std::size_t>(std::ceil(spec.horizon * n_over_b / eta - 1e-9)) + 1;
    sgd_logs.push_back(run_sgd(x, y, theta0, cfg));
  }

  std::vector<DistanceRow> rows(spec.etas.size());
  for (std::size_t e = 0; e < rows.size(); ++e) rows[e].eta = spec.etas[e];

  SgdConfig fcfg;
  fcfg.eta = eta_ref;
  fcfg.batch_size = x.rows();
  fcfg.rule = spec.rule;
  SgdRunner flow(x, y, theta0, fcfg);
  const auto n_steps = static_cast<std::size_t>(std::ceil(spec.horizon / eta_ref - 1e-9));
  for (std::size_t j = 0;; ++j) {
    const double t = static_cast<double>(j) * eta_ref;
    for (std::size_t e = 0; e < rows.size(); ++e) {
      const Params bar = interpolate(sgd_logs[e], t * n_over_b);
      rows[e].sup_distance = std::max(rows[e].sup_distance, distance(flow.theta(), bar));
    }
    if (j == n_steps) break;
    flow.step();
  }
  return rows;
}

enum class InequalityId { loss_vs_integrated_alpha, theta_increment, w_increment, envelope, exponential_decay };

inline std::string to_string(InequalityId id) {
  switch (id) {
    case InequalityId::loss_vs_integrated_alpha: return "loss_vs_integrated_alpha";
    case InequalityId::theta_increment: return "theta_increment";
    case InequalityId::w_increment: return "w_increment";
    case InequalityId::envelope: return "envelope";
    case InequalityId::exponential_decay: return "exponential_decay";
  }
  return "unknown";
}

struct Violation {
  InequalityId id = InequalityId::loss_vs_integrated_alpha;
  double t = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::size_t points_checked = 0;
  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
  [[nodiscard]] std::size_t count(InequalityId id) const {
    return static_cast<std::size_t>(
        std::count_if(violations.begin(), violations.end(), [id](const Violation& v) { return v.id == id; }));
  }
};

/// Trapezoid integral of sqrt(loss) on the logged grid.
inline std::vector<double> integrated_root_loss(const TrajectoryLog& log) {
  std::vector<double> lbar(log.iterates.size(), 0.0);
  for (std::size_t i = 1; i < log.iterates.size(); ++i) {
    const auto& a = log.iterates[i - 1];
    const auto& b = log.iterates[i];
    lbar[i] = lbar[i - 1] + 0.5 * (b.t - a.t) * (std::sqrt(a.loss) + std::sqrt(b.loss));
  }
  return lbar;
}

/**
 * Checks, at every logged time, with multiplicative slack:
 *  - L(t) <= L(0) exp(-2 int_0^t alpha0^2)
 *  - ||theta(t) - theta(0)|| <= sqrt2 ||X|| (||W0|| + ||V0||) Lbar exp(sqrt2 ||X|| Lbar)
 *  - ||X|| ||W(t) - W(0)|| <= (c1 Lbar + c2 Lbar^2) exp(c Lbar^2) / 2
 *  - sqrt(L(t)) <= a exp(alpha t (c1 Lbar + c2 Lbar^2) e^{c Lbar^2} - alpha^2 t)
 * Requires an unthinned log with alpha0 recorded at every step.
 */
inline ValidationReport validate_trajectory(const TrajectoryLog& log, const Constants& k, double slack = 1.05) {
  if (log.thinning != 1) throw std::invalid_argument("validate_trajectory: log is thinned; rerun with thin = 1");
  for (std::size_t i = 0; i + 1 < log.iterates.size(); ++i)
    if (log.iterates[i + 1].k != log.iterates[i].k + 1)
      throw std::invalid_argument("validate_trajectory: log has gaps; rerun with thin = 1");
  for (const auto& r : log.iterates)
    if (std::isnan(r.alpha0)) throw std::invalid_argument("validate_trajectory: alpha0 not recorded");

  ValidationReport rep;
  if (log.iterates.empty()) return rep;
  const auto lbar = integrated_root_loss(log);
  const double loss0 = log.iterates.front().loss;
  const double sqrt2 = std::sqrt(2.0);
  double alpha_int = 0.0;  // int_0^t alpha0^2
  auto check = [&](InequalityId id, double t, double lhs, double rhs) {
    if (lhs > slack * rhs) rep.violations.push_back({id, t, lhs, rhs});
  };
  for (std::size_t i = 0; i < log.iterates.size(); ++i) {
    const auto& r = log.iterates[i];
    if (i > 0) {
      const auto& p = log.iterates[i - 1];
      alpha_int += 0.5 * (r.t - p.t) * (p.alpha0 * p.alpha0 + r.alpha0 * r.alpha0);
    }
    const double lb = lbar[i];
    check(InequalityId::loss_vs_integrated_alpha, r.t, r.loss, loss0 * std::exp(-2.0 * alpha_int));
    check(InequalityId::theta_increment, r.t, r.theta_dist,
          sqrt2 * k.x_op * (k.w0_fro + k.v0_fro) * lb * std::exp(sqrt2 * k.x_op * lb));
    check(InequalityId::w_increment, r.t, k.x_op * r.w_dist,
          0.5 * (k.c1 * lb + k.c2 * lb * lb) * std::exp(k.c * lb * lb));
    const double growth = (k.c1 * lb + k.c2 * lb * lb) * std::exp(k.c * lb * lb);
    check(InequalityId::envelope, r.t, std::sqrt(r.loss),
          k.a * std::exp(k.alpha * r.t * growth - k.alpha * k.alpha * r.t));
    ++rep.points_checked;
  }
  return rep;
}

/// L(t) <= L(0) exp(-t alpha^2) at every logged time until the loss first drops below `until_loss`.
inline ValidationReport check_exponential_decay(const TrajectoryLog& log, const Constants& k, double slack = 1.1,
                                                double until_loss = 1e-6) {
  ValidationReport rep;
  if (log.iterates.empty()) return rep;
  const double loss0 = log.iterates.front().loss;
  for (const auto& r : log.iterates) {
    if (r.loss < until_loss) break;
    const double rhs = loss0 * std::exp(-r.t * k.alpha * k.alpha);
    if (r.loss > slack * rhs) rep.violations.push_back({InequalityId::exponential_decay, r.t, r.loss, rhs});
    ++rep.points_checked;
  }
  return rep;
}

}  // namespace relucert
