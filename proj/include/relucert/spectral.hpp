/**
 * @file spectral.hpp
 * @brief Hermite coefficients of the ReLU, lower bounds on
 *        lambda(X) = lambda_min(E_w[relu(Xw) relu(Xw)^T]), Monte Carlo
 *        estimates of that Gram matrix, and initialization statistics.
 *
 * Hermite coefficients use the orthonormal probabilists' basis
 * h_k = He_k / sqrt(k!) under the standard Gaussian.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "data.hpp"
#include "linalg.hpp"
#include "network.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace relucert {

/// Closed-form mu_k(relu); even k >= 2 evaluated through log-gamma.
inline double hermite_relu(int k) {
  if (k < 0) throw std::invalid_argument("hermite_relu: k must be nonnegative");
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  if (k == 0) return inv_sqrt_2pi;
  if (k == 1) return 0.5;
  if (k % 2 == 1) return 0.0;
  // (k-3)!! = (k-2)! / (2^{(k-2)/2} ((k-2)/2)!)
  const double kd = k;
  const double log_dfact = std::lgamma(kd - 1.0) - 0.5 * (kd - 2.0) * std::log(2.0) - std::lgamma(kd / 2.0);
  const double mag = std::exp(log_dfact - 0.5 * std::lgamma(kd + 1.0)) * inv_sqrt_2pi;
  return ((k - 2) / 2) % 2 == 0 ? mag : -mag;
}

namespace detail {

/// Orthonormal Hermite values h_0..h_n at x.
inline std::vector<double> hermite_orthonormal(int n, double x) {
  std::vector<double> h(static_cast<std::size_t>(n) + 1);
  h[0] = 1.0;
  if (n >= 1) h[1] = x;
  for (int j = 1; j < n; ++j)
    h[j + 1] = (x * h[j] - std::sqrt(static_cast<double>(j)) * h[j - 1]) / std::sqrt(j + 1.0);
  return h;
}

/// Laguerre L_0..L_n at x (orthonormal under e^{-u} on [0, inf)).
inline std::vector<double> laguerre(int n, double x) {
  std::vector<double> l(static_cast<std::size_t>(n) + 1);
  l[0] = 1.0;
  if (n >= 1) l[1] = 1.0 - x;
  for (int j = 1; j < n; ++j) l[j + 1] = ((2.0 * j + 1.0 - x) * l[j] - j * l[j - 1]) / (j + 1.0);
  return l;
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch nodes polished by Newton; weights by the Christoffel sum 1/sum_j p_j(x)^2.
template <class Poly>
QuadratureRule gauss_rule(int n, const Mat& jacobi, Poly poly) {
  auto nodes = symmetric_eigenvalues(jacobi);
  QuadratureRule q;
  for (double x : nodes) {
    for (int it = 0; it < 5; ++it) {
      const auto [p, dp] = poly.value_and_derivative(n, x);
      if (dp == 0.0) break;
      const double step = p / dp;
      x -= step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    const auto vals = poly.values(n - 1, x);
    double s = 0.0;
    for (double v : vals) s += v * v;
    q.nodes.push_back(x);
    q.weights.push_back(1.0 / s);
  }
  return q;
}

struct HermitePoly {
  static std::vector<double> values(int n, double x) { return hermite_orthonormal(n, x); }
  static std::pair<double, double> value_and_derivative(int n, double x) {
    const auto h = hermite_orthonormal(n, x);
    return {h[n], std::sqrt(static_cast<double>(n)) * h[n - 1]};
  }
};

struct LaguerrePoly {
  static std::vector<double> values(int n, double x) { return laguerre(n, x); }
  static std::pair<double, double> value_and_derivative(int n, double x) {
    const auto l = laguerre(n, x);
    // x L_n' = n (L_n - L_{n-1})
    return {l[n], static_cast<double>(n) * (l[n] - l[n - 1]) / x};
  }
};

inline QuadratureRule gauss_hermite(int n) {
  Mat j(n, n);
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(static_cast<double>(i));
  return gauss_rule(n, j, HermitePoly{});
}

inline QuadratureRule gauss_laguerre(int n) {
  Mat j(n, n);
  for (int i = 0; i < n; ++i) j(i, i) = 2.0 * i + 1.0;
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = static_cast<double>(i);
  return gauss_rule(n, j, LaguerrePoly{});
}

}  // namespace detail

/// E[relu(g) h_k(g)] by quadrature. relu(g) = g/2 + |g|/2: the linear part uses
/// Gauss-Hermite, the kinked part the substitution u = g^2/2 and Gauss-Laguerre,
/// so both rules are exact for k < 2 n_nodes - 1.
inline double hermite_quadrature(int k, int n_nodes) {
  if (k < 0) throw std::invalid_argument("hermite_quadrature: k must be nonnegative");
  if (n_nodes < k + 10) throw std::invalid_argument("hermite_quadrature: need n_nodes >= k + 10");
  const auto gh = detail::gauss_hermite(n_nodes);
  const auto gl = detail::gauss_laguerre(n_nodes);
  double linear = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i)
    linear += gh.weights[i] * gh.nodes[i] * detail::hermite_orthonormal(k, gh.nodes[i])[k];
  double kink = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    const double g = std::sqrt(2.0 * gl.nodes[i]);
    kink += gl.weights[i] *
            (detail::hermite_orthonormal(k, g)[k] + detail::hermite_orthonormal(k, -g)[k]);
  }
  return 0.5 * linear + 0.5 * kink / std::sqrt(2.0 * std::numbers::pi);
}

struct HermiteTable {
  int max_k = 0;
  std::vector<double> mu;  ///< mu[k] for k = 0..max_k

  [[nodiscard]] double ratio(int k) const { return mu.at(k) * mu.at(k) * std::pow(k, 2.5); }
};

inline HermiteTable hermite_table(int max_k) {
  if (max_k < 0) throw std::invalid_argument("hermite_table: max_k must be nonnegative");
  HermiteTable t;
  t.max_k = max_k;
  for (int k = 0; k <= max_k; ++k) t.mu.push_back(hermite_relu(k));
  return t;
}

struct DecayRow {
  int k = 0;
  double mu = 0.0;
  double ratio = 0.0;  ///< |mu_k|^2 k^2.5
};

inline std::vector<DecayRow> decay_ratio_table(int k_max) {
  if (k_max < 2 || k_max % 2 != 0) throw std::invalid_argument("decay_ratio_table: k_max must be even >= 2");
  std::vector<DecayRow> rows;
  for (int k = 2; k <= k_max; k += 2) {
    const double mu = hermite_relu(k);
    rows.push_back({k, mu, mu * mu * std::pow(k, 2.5)});
  }
  return rows;
}

/// r = 4 ceil((1 + delta0)/delta0) with delta0 = log d0 / log N.
inline int default_r(std::size_t n, std::size_t d0) {
  if (n < 2 || d0 < 2) return 4;
  const double delta0 = std::log(static_cast<double>(d0)) / std::log(static_cast<double>(n));
  return 4 * static_cast<int>(std::ceil((1.0 + delta0) / delta0));
}

enum class LowerBoundMethod {
  gershgorin,  ///< diagonal dominance of the Hadamard-power Gram
  exact,       ///< lambda_min of the Hadamard-power Gram
};

/**
 * mu_r^2 lambda_min((X^{*r})(X^{*r})^T) / max_i ||X_i||^{2(r-1)}.
 * The Gram of the r-fold row-wise Kronecker power equals (X X^T)^{o r}, so
 * nothing of width d0^r is formed. The Gershgorin variant replaces
 * lambda_min by min_i ||X_i||^{2r} - N max_{i != j} |<X_i, X_j>|^r, floored at 0;
 * for rows of norm sqrt(d0) this is (d0^r - N max|<X_i,X_j>|^r) / d0^{r-1}.
 */
inline double lambda_lower_bound(const Mat& x, int r, LowerBoundMethod method = LowerBoundMethod::gershgorin) {
  if (r <= 0 || r % 2 != 0) throw std::invalid_argument("lambda_lower_bound: r must be even and positive");
  detail::require_nonempty(x, "lambda_lower_bound");
  const Mat g = gram_rows(x);
  const std::size_t n = g.rows();
  double max_sq = 0.0;
  double min_sq = std::numeric_limits<double>::infinity();
  double coherence = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_sq = std::max(max_sq, g(i, i));
    min_sq = std::min(min_sq, g(i, i));
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) coherence = std::max(coherence, std::abs(g(i, j)));
  }
  if (!(max_sq > 0.0)) throw std::invalid_argument("lambda_lower_bound: X must be nonzero");
  const double mu = hermite_relu(r);
  double lam = 0.0;
  if (method == LowerBoundMethod::gershgorin) {
    lam = std::pow(min_sq, r) - static_cast<double>(n) * std::pow(coherence, r);
  } else {
    Mat gr(n, n);
    for (std::size_t k = 0; k < g.size(); ++k) gr.data()[k] = std::pow(g.data()[k], r);
    lam = symmetric_eigenvalues(gr).front();
  }
  return std::max(0.0, mu * mu * lam / std::pow(max_sq, r - 1));
}

struct GramEstimate {
  Mat G_hat;
  double lambda_hat = 0.0;
  double lambda_stderr = std::numeric_limits<double>::infinity();
  std::size_t n_mc = 0;
};

/// (1/n_mc) sum_s relu(X w_s) relu(X w_s)^T with w_s standard Gaussian; jackknife
/// standard error of lambda_min over (up to) 10 contiguous blocks.
inline GramEstimate estimate_gram(const Mat& x, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc == 0) throw std::invalid_argument("estimate_gram: n_mc must be >= 1");
  detail::require_nonempty(x, "estimate_gram");
  const std::size_t n = x.rows();
  const std::size_t d0 = x.cols();
  const std::size_t blocks = std::min<std::size_t>(10, n_mc);
  auto rng = make_stream(seed, StreamPurpose::monte_carlo);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Mat> block_sums;
  std::vector<std::size_t> block_counts;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * n_mc / blocks;
    const std::size_t hi = (b + 1) * n_mc / blocks;
    Mat acc(n, n);
    constexpr std::size_t kChunk = 512;
    for (std::size_t s = lo; s < hi; s += kChunk) {
      const std::size_t m = std::min(kChunk, hi - s);
      Mat w(d0, m);
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < d0; ++i) w(i, j) = gauss(rng);
      Mat h = matmul(x, w);
      for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
      acc += matmul_nt(h, h);
    }
    block_sums.push_back(std::move(acc));
    block_counts.push_back(hi - lo);
  }

  auto symmetrized_mean = [&](const Mat& sum, double count) {
    Mat g(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g(i, j) = 0.5 * (sum(i, j) + sum(j, i)) / count;
    return g;
  };

  Mat total(n, n);
  for (const auto& s : block_sums) total += s;
  GramEstimate est;
  est.n_mc = n_mc;
  est.G_hat = symmetrized_mean(total, static_cast<double>(n_mc));
  est.lambda_hat = symmetric_eigenvalues(est.G_hat).front();
  if (blocks >= 2) {
    std::vector<double> loo(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      Mat rest = total - block_sums[b];
      loo[b] = symmetric_eigenvalues(symmetrized_mean(rest, static_cast<double>(n_mc - block_counts[b]))).front();
    }
    double mean = 0.0;
    for (double v : loo) mean += v;
    mean /= static_cast<double>(blocks);
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    est.lambda_stderr = std::sqrt(ss * static_cast<double>(blocks - 1) / static_cast<double>(blocks));
  }
  return est;
}

struct ThresholdResult {
  double lambda_hat = 0.0;
  double threshold = 0.0;  ///< beta_w sqrt(d1 lambda_hat) / 2
  double pass_fraction = 0.0;
  std::vector<double> alpha_empirical;
};

struct ThresholdSpec {
  std::size_t n = 32;
  std::size_t d0 = 16;
  std::size_t d1 = 512;
  double beta_w = 0.25;
  std::size_t n_trials = 50;
  std::uint64_t seed = 0;
  std::size_t n_mc = 20000;
  unsigned threads = 0;
};

/// One X (radius sqrt(d0) rows), lambda(X) by Monte Carlo, then alpha0 over n_trials W0 draws.
/// Trial t uses the hidden-layer stream of seed stream_key(seed, {t}), so runs with different
/// d1 or beta_w share the underlying Gaussian draws.
inline ThresholdResult alpha_threshold_experiment(const ThresholdSpec& s) {
  if (s.n == 0 || s.d0 == 0 || s.d1 == 0) throw DimensionError("alpha_threshold_experiment: zero dimension");
  const Mat x = sample_sphere_rows(s.n, s.d0, RowNorm::sqrt_d0, s.seed);
  const GramEstimate g = estimate_gram(x, s.n_mc, s.seed);
  ThresholdResult out;
  out.lambda_hat = g.lambda_hat;
  out.threshold = s.beta_w * std::sqrt(static_cast<double>(s.d1) * std::max(0.0, g.lambda_hat)) / 2.0;
  out.alpha_empirical.assign(s.n_trials, 0.0);
  parallel_for(
      s.n_trials,
      [&](std::size_t t) {
        InitConfig cfg;
        cfg.beta_w = s.beta_w;
        cfg.beta_v = 0.0;
        cfg.seed = stream_key(s.seed, {t});
        const Params p = init_params(s.d0, s.d1, 1, cfg);
        out.alpha_empirical[t] = alpha0(x, p);
      },
      s.threads);
  std::size_t pass = 0;
  for (double a : out.alpha_empirical) pass += a >= out.threshold;
  out.pass_fraction = s.n_trials ? static_cast<double>(pass) / static_cast<double>(s.n_trials) : 0.0;
  return out;
}

struct RatioStats {
  double min = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
};

inline RatioStats ratio_stats(const std::vector<double>& v) {
  RatioStats s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  s.median = median(v);
  return s;
}

struct ConcentrationSpec {
  std::size_t n = 100;
  std::size_t d0 = 10;
  std::size_t d1 = 100;
  std::size_t d2 = 1;
  InitConfig init;  ///< seed field ignored; each trial derives its own
  LabelMode labels = LabelMode::pm_one;
  std::size_t n_trials = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct ConcentrationReport {
  RatioStats w0;    ///< ||W0||_F / (beta_w sqrt(d0 d1))
  RatioStats v0;    ///< ||V0||_F / (beta_v sqrt(d1 d2)); NaN when beta_v = 0
  RatioStats x_op;  ///< ||X||_op / sqrt(max(N, d0))
  RatioStats loss;  ///< L(theta0) / (||Y||_F^2 + beta_v^2 d2 ||W0||_F^2 ||X||_op^2 log N)
  std::vector<double> w0_samples, v0_samples, x_op_samples, loss_samples;
};

inline ConcentrationReport concentration_report(const ConcentrationSpec& s) {
  if (s.n == 0 || s.d0 == 0 || s.d1 == 0 || s.d2 == 0) throw DimensionError("concentration_report: zero dimension");
  ConcentrationReport rep;
  rep.w0_samples.assign(s.n_trials, 0.0);
  rep.v0_samples.assign(s.n_trials, 0.0);
  rep.x_op_samples.assign(s.n_trials, 0.0);
  rep.loss_samples.assign(s.n_trials, 0.0);
  const double nd = static_cast<double>(s.n);
  parallel_for(
      s.n_trials,
      [&](std::size_t t) {
        const std::uint64_t seed = stream_key(s.seed, {t});
        const Mat x = sample_sphere_rows(s.n, s.d0, RowNorm::sqrt_d0, seed);
        const LabelScale scale{s.init.beta_w, s.init.beta_v, s.d0, s.d1};
        const Mat y = gen_labels(s.n, s.d2, s.labels, seed, scale);
        InitConfig cfg = s.init;
        cfg.seed = seed;
        const Params p = init_params(s.d0, s.d1, s.d2, cfg);
        const double w_fro = frobenius_norm(p.W);
        const double v_fro = frobenius_norm(p.V);
        const double x_op = operator_norm(x);
        const double y_fro = frobenius_norm(y);
        rep.w0_samples[t] = w_fro / (cfg.beta_w * std::sqrt(static_cast<double>(s.d0 * s.d1)));
        rep.v0_samples[t] = cfg.beta_v > 0.0
                                ? v_fro / (cfg.beta_v * std::sqrt(static_cast<double>(s.d1 * s.d2)))
                                : std::numeric_limits<double>::quiet_NaN();
        rep.x_op_samples[t] = x_op / std::sqrt(static_cast<double>(std::max(s.n, s.d0)));
        const double denom = y_fro * y_fro + cfg.beta_v * cfg.beta_v * static_cast<double>(s.d2) * w_fro * w_fro *
                                                 x_op * x_op * std::log(nd);
        rep.loss_samples[t] = loss(x, y, p) / denom;
      },
      s.threads);
  rep.w0 = ratio_stats(rep.w0_samples);
  if (s.init.beta_v > 0.0) rep.v0 = ratio_stats(rep.v0_samples);
  rep.x_op = ratio_stats(rep.x_op_samples);
  rep.loss = ratio_stats(rep.loss_samples);
  return rep;
}

/// Everything the `spectral` command reports for one X.
struct SpectralReport {
  int r = 4;
  double lambda_lower = 0.0;        ///< Gershgorin variant
  double lambda_lower_exact = 0.0;  ///< Hadamard-power eigenvalue variant
  double lambda_mc = 0.0;
  double lambda_stderr = 0.0;
  double alpha_threshold = 0.0;
  double pass_fraction = 0.0;
  std::vector<double> alpha_empirical;
  ConcentrationReport concentration;
};

}  // namespace relucert
