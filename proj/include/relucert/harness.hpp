/**
 * @file harness.hpp
 * @brief Experiment grids over (d0, d1), per-iterate training diagnostics,
 *        both-layer versus hidden-layer-only comparisons, and CSV/JSON/SVG export.
 *
 * Every run derives its data, initialization and batch streams from
 * stream_key(master_seed, {d0, d1, run}), so the two training modes see the
 * same X, Y and W0, and results do not depend on evaluation order.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "data.hpp"
#include "dynamics.hpp"
#include "network.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "svg.hpp"

namespace relucert {

inline constexpr const char* kArtifactVersion = "relucert 1.0.0";

inline std::string to_string(TrainLayers m) { return m == TrainLayers::w_only ? "w_only" : "both"; }
inline TrainLayers train_layers_from_string(const std::string& s) {
  if (s == "both") return TrainLayers::both;
  if (s == "w_only" || s == "w-only") return TrainLayers::w_only;
  throw std::invalid_argument("unknown training mode: " + s);
}

// ---------------------------------------------------------------------------
// Per-iterate diagnostics

struct MetricRecord {
  std::size_t k = 0;
  double loss = 0.0;
  double rel_residual = 0.0;  ///< ||Y_hat - Y||_F / ||Y||_F
  std::size_t zeros = 0;
  std::size_t hamming = 0;  ///< mask flips since the previous logged iterate
  double delta_L = std::numeric_limits<double>::quiet_NaN();
  double delta_D = std::numeric_limits<double>::quiet_NaN();
};

struct MetricSeries {
  std::vector<MetricRecord> records;
};

enum class DeltaDMethod {
  structured,    ///< N d2 x N d2 Gram of the Jacobian difference (never forms J)
  materialized,  ///< explicit Jacobians when N d2 D fits the memory budget
  none,
};

struct MetricOptions {
  std::size_t log_every = 1;
  double zero_threshold = 1e-8;
  double convergence_threshold = 2.5e-3;
  DeltaDMethod delta_d = DeltaDMethod::structured;
  std::size_t memory_budget = std::size_t{1} << 24;  ///< doubles allowed per materialized Jacobian
};

struct TrackResult {
  MetricSeries series;
  Params final_params;
  bool diverged = false;
  long long first_converged_k = -1;
};

namespace detail {

inline double top_eigenvalue_psd(const Mat& g) {
  const std::size_t n = g.rows();
  if (n == 0) return 0.0;
  auto x = start_vector(n);
  double lambda = 0.0;
  for (int it = 0; it < 3000; ++it) {
    auto y = matvec(g, x);
    const double nrm = vec_norm(y);
    if (nrm == 0.0) return 0.0;
    const double rq = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / nrm;
    if (it > 3 && std::abs(rq - lambda) <= 1e-13 * std::abs(rq)) return rq;
    lambda = rq;
  }
  return lambda;
}

inline double safe_ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace detail

/// ||DY_k - DY_{k-1}||_op / ||DY_{k-1}||_op over the trainable blocks.
inline double delta_D(const Mat& x, const Params& prev, const Params& cur, TrainLayers layers,
                      SelectionRule rule, DeltaDMethod method, std::size_t memory_budget) {
  const auto blocks = layers == TrainLayers::both ? JacobianBlocks::both : JacobianBlocks::w_only;
  if (method == DeltaDMethod::materialized) {
    const std::size_t cols = prev.d0() * prev.d1() + (blocks == JacobianBlocks::both ? prev.d1() * prev.d2() : 0);
    if (x.rows() * prev.d2() * cols > memory_budget)
      throw std::length_error("delta_D: Jacobian exceeds memory budget; use the structured method");
    const Mat jp = jacobian(x, prev, rule, blocks);
    const Mat jq = jacobian(x, cur, rule, blocks);
    return detail::safe_ratio(operator_norm(jq - jp), operator_norm(jp));
  }
  const double num = detail::top_eigenvalue_psd(jacobian_difference_gram(x, prev, cur, rule, blocks));
  const double den = detail::top_eigenvalue_psd(jacobian_gram(x, prev, rule, blocks));
  return detail::safe_ratio(std::sqrt(std::max(num, 0.0)), std::sqrt(std::max(den, 0.0)));
}

/**
 * Trains with run_sgd semantics and records, at k = 0, log_every, 2 log_every, ...
 * and the last step: loss, relative residual, zeros, Hamming distance to the
 * previous logged mask, and delta_L / delta_D between theta_{k-1} and theta_k.
 */
inline TrackResult track_metrics(const Mat& x, const Mat& y, const Params& theta0, const SgdConfig& cfg,
                                 TrainLayers layers, const MetricOptions& opt) {
  if (opt.log_every == 0) throw std::invalid_argument("track_metrics: log_every must be >= 1");
  SgdRunner runner(x, y, theta0, cfg, layers);
  const double y_norm = frobenius_norm(y);
  const bool full_batch_steps = cfg.batch_size == x.rows();
  TrackResult out;
  std::vector<std::uint8_t> prev_mask;
  std::optional<Params> saved;
  double saved_loss = 0.0;
  double loss0 = -1.0;
  const std::size_t steps = cfg.steps;
  for (std::size_t k = 0;; ++k) {
    const bool logged = k % opt.log_every == 0 || k == steps;
    const bool before_log = k < steps && ((k + 1) % opt.log_every == 0 || k + 1 == steps);
    std::optional<BatchEvaluation> full;
    if (logged || before_log || full_batch_steps) full = runner.evaluate_full();
    const bool bad = full && (!std::isfinite(full->loss) || (loss0 > 0.0 && full->loss > 1e6 * loss0));
    if (logged || bad) {
      MetricRecord r;
      r.k = k;
      r.loss = full->loss;
      r.rel_residual = y_norm > 0.0 ? std::sqrt(2.0 * full->loss) / y_norm : std::sqrt(2.0 * full->loss);
      const auto z = full->cache.preactivation.data();
      std::vector<std::uint8_t> mask(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        mask[i] = z[i] > 0.0;
        r.zeros += std::abs(z[i]) < opt.zero_threshold;
      }
      if (!prev_mask.empty())
        for (std::size_t i = 0; i < mask.size(); ++i) r.hamming += mask[i] != prev_mask[i];
      prev_mask = std::move(mask);
      if (k > 0 && saved) {
        r.delta_L = saved_loss == 0.0 ? 0.0 : std::abs(full->loss - saved_loss) / saved_loss;
        if (opt.delta_d != DeltaDMethod::none && std::isfinite(full->loss))
          r.delta_D = delta_D(x, *saved, runner.theta(), layers, cfg.rule, opt.delta_d, opt.memory_budget);
      }
      if (out.first_converged_k < 0 && r.rel_residual < opt.convergence_threshold)
        out.first_converged_k = static_cast<long long>(k);
      out.series.records.push_back(r);
      if (loss0 < 0.0) loss0 = full->loss;
    }
    if (bad) {
      out.diverged = true;
      break;
    }
    if (k == steps) break;
    if (before_log) {
      saved = runner.theta();
      saved_loss = full->loss;
    }
    runner.step(full ? &*full : nullptr);
  }
  out.final_params = runner.theta();
  return out;
}

// ---------------------------------------------------------------------------
// Grids

/// How GridSpec::sgd.eta is turned into the step size of a run.
enum class EtaScale {
  absolute,  ///< eta as given
  ntk,       ///< eta / lambda_max(J0 J0^T), J0 the Jacobian of the trainable blocks at theta0
};

struct GridSpec {
  std::vector<std::size_t> d0_values;
  std::vector<std::size_t> d1_values;
  std::size_t n = 100;
  std::size_t n_runs = 5;
  TrainLayers train_mode = TrainLayers::both;
  SgdConfig sgd;  ///< eta, batch size (0 = N), momentum, selection rule; steps come from max_iters
  double convergence_threshold = 2.5e-3;
  double zero_threshold = 1e-8;
  std::size_t max_iters = 5000;
  std::size_t log_every = 50;
  EtaScale eta_scale = EtaScale::absolute;
  double beta_w = 1.0;
  RowNorm convention = RowNorm::unit;
  std::uint64_t master_seed = 0;
  DeltaDMethod delta_d = DeltaDMethod::structured;
  unsigned threads = 0;

  void validate() const {
    if (d0_values.empty() || d1_values.empty()) throw std::invalid_argument("GridSpec: empty d0 or d1 list");
    if (!(convergence_threshold > 0.0) || !(zero_threshold > 0.0))
      throw std::invalid_argument("GridSpec: thresholds must be positive");
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("GridSpec: N must be even and >= 2");
    if (log_every == 0) throw std::invalid_argument("GridSpec: log_every must be >= 1");
    if (sgd.batch_size > n) throw std::invalid_argument("GridSpec: batch size exceeds N");
    for (std::size_t d : d0_values)
      if (d == 0) throw DimensionError("GridSpec: d0 must be >= 1");
    for (std::size_t d : d1_values)
      if (d == 0 || (train_mode == TrainLayers::w_only && d % 2 != 0))
        throw DimensionError("GridSpec: d1 must be >= 1 (and even for w_only)");
  }
};

struct RunSummary {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  long long first_converged_k = -1;
  double final_loss = 0.0;
  double final_rel_residual = 0.0;
  std::size_t final_zeros = 0;
  std::size_t iterations = 0;
  bool diverged = false;
};

struct CellResult {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  TrainLayers mode = TrainLayers::both;
  double p_converge = 0.0;
  double avg_final_zeros = std::numeric_limits<double>::quiet_NaN();  ///< over converged runs
  std::vector<RunSummary> runs;
  std::vector<MetricSeries> series;

  [[nodiscard]] std::size_t n_converged() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return r.converged; }));
  }
};

struct GridResult {
  GridSpec spec;
  std::vector<CellResult> cells;  ///< d0-major, d1-minor
};

inline std::uint64_t run_seed(std::uint64_t master, std::size_t d0, std::size_t d1, std::size_t run) {
  return stream_key(master, {d0, d1, run});
}

struct RunSetup {
  Mat X;
  Mat Y;
  Params theta0;
  SgdConfig cfg;
};

/// Data, initialization and SGD configuration of one grid run.
inline RunSetup make_run(const GridSpec& spec, std::size_t d0, std::size_t d1, std::size_t run,
                         TrainLayers mode) {
  const std::uint64_t seed = run_seed(spec.master_seed, d0, d1, run);
  RunSetup s;
  s.X = sample_sphere_rows(spec.n, d0, spec.convention, seed);
  s.Y = gen_labels(spec.n, 1, LabelMode::pm_one, seed);
  InitConfig init = mode == TrainLayers::both
                        ? InitConfig::with_rho(spec.beta_w, 1.0, d1, seed)
                        : InitConfig::fixed_signs(spec.beta_w, frobenius_norm(s.Y), spec.n, seed);
  s.theta0 = init_params(d0, d1, 1, init);
  s.cfg = spec.sgd;
  if (spec.eta_scale == EtaScale::ntk) {
    const auto blocks = mode == TrainLayers::both ? JacobianBlocks::both : JacobianBlocks::w_only;
    s.cfg.eta = spec.sgd.eta / detail::top_eigenvalue_psd(jacobian_gram(s.X, s.theta0, spec.sgd.rule, blocks));
  }
  s.cfg.steps = spec.max_iters;
  s.cfg.seed = seed;
  if (s.cfg.batch_size == 0) s.cfg.batch_size = spec.n;
  s.cfg.thin = spec.log_every;
  s.cfg.zero_threshold = spec.zero_threshold;
  return s;
}

inline GridResult run_grid(const GridSpec& spec) {
  spec.validate();
  GridResult res;
  res.spec = spec;
  for (std::size_t d0 : spec.d0_values)
    for (std::size_t d1 : spec.d1_values) {
      CellResult c;
      c.d0 = d0;
      c.d1 = d1;
      c.mode = spec.train_mode;
      c.runs.resize(spec.n_runs);
      c.series.resize(spec.n_runs);
      res.cells.push_back(std::move(c));
    }
  const std::size_t n_tasks = res.cells.size() * spec.n_runs;
  parallel_for(
      n_tasks,
      [&](std::size_t task) {
        CellResult& cell = res.cells[task / spec.n_runs];
        const std::size_t run = task % spec.n_runs;
        const RunSetup s = make_run(spec, cell.d0, cell.d1, run, spec.train_mode);
        MetricOptions opt;
        opt.log_every = spec.log_every;
        opt.zero_threshold = spec.zero_threshold;
        opt.convergence_threshold = spec.convergence_threshold;
        opt.delta_d = spec.delta_d;
        TrackResult tr = track_metrics(s.X, s.Y, s.theta0, s.cfg, spec.train_mode, opt);
        RunSummary& sum = cell.runs[run];
        sum.run = run;
        sum.seed = s.cfg.seed;
        sum.first_converged_k = tr.first_converged_k;
        sum.converged = tr.first_converged_k >= 0;
        sum.diverged = tr.diverged;
        const MetricRecord& last = tr.series.records.back();
        sum.final_loss = last.loss;
        sum.final_rel_residual = last.rel_residual;
        sum.final_zeros = last.zeros;
        sum.iterations = last.k;
        cell.series[run] = std::move(tr.series);
      },
      spec.threads);
  for (auto& cell : res.cells) {
    const std::size_t conv = cell.n_converged();
    cell.p_converge = spec.n_runs ? static_cast<double>(conv) / static_cast<double>(spec.n_runs) : 0.0;
    if (conv > 0) {
      double z = 0.0;
      for (const auto& r : cell.runs)
        if (r.converged) z += static_cast<double>(r.final_zeros);
      cell.avg_final_zeros = z / static_cast<double>(conv);
    }
  }
  return res;
}

struct CellRatio {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::size_t paired_runs = 0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  bool included = false;
  std::string flag;  ///< reason for exclusion, empty when included
};

struct ModeComparison {
  GridResult numerator;    ///< w_only in the usual comparison
  GridResult denominator;  ///< both
  std::vector<CellRatio> cells;
  double median_ratio = std::numeric_limits<double>::quiet_NaN();
};

/// Per cell, mean final zeros of `num` over mean final zeros of `den`, restricted to runs
/// that converged in both grids. Equal zero counts give ratio 1.
inline ModeComparison compare_grids(GridResult num, GridResult den) {
  if (num.cells.size() != den.cells.size()) throw std::invalid_argument("compare_grids: grids differ in shape");
  ModeComparison mc;
  std::vector<double> included;
  for (std::size_t c = 0; c < num.cells.size(); ++c) {
    const auto& a = num.cells[c];
    const auto& b = den.cells[c];
    if (a.d0 != b.d0 || a.d1 != b.d1 || a.runs.size() != b.runs.size())
      throw std::invalid_argument("compare_grids: grids differ in shape");
    CellRatio cr;
    cr.d0 = a.d0;
    cr.d1 = a.d1;
    double za = 0.0, zb = 0.0;
    for (std::size_t r = 0; r < a.runs.size(); ++r)
      if (a.runs[r].converged && b.runs[r].converged) {
        ++cr.paired_runs;
        za += static_cast<double>(a.runs[r].final_zeros);
        zb += static_cast<double>(b.runs[r].final_zeros);
      }
    if (cr.paired_runs == 0) {
      cr.flag = "no_converged_pair";
    } else {
      cr.ratio = zb == 0.0 ? (za == 0.0 ? 1.0 : std::numeric_limits<double>::infinity()) : za / zb;
      cr.included = true;
      included.push_back(cr.ratio);
    }
    mc.cells.push_back(cr);
  }
  mc.median_ratio = median(included);
  mc.numerator = std::move(num);
  mc.denominator = std::move(den);
  return mc;
}

/// Runs both grids (identical data and seeds) and compares final zeros w_only / both.
inline ModeComparison compare_training_modes(const GridSpec& w_only_spec, const GridSpec& both_spec) {
  if (w_only_spec.d0_values != both_spec.d0_values || w_only_spec.d1_values != both_spec.d1_values ||
      w_only_spec.master_seed != both_spec.master_seed || w_only_spec.n != both_spec.n ||
      w_only_spec.n_runs != both_spec.n_runs)
    throw std::invalid_argument("compare_training_modes: specs must share grid, N, runs and seed");
  return compare_grids(run_grid(w_only_spec), run_grid(both_spec));
}

// ---------------------------------------------------------------------------
// Export

/// One row of cells.csv.
struct CellRow {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::string mode;
  std::size_t n_runs = 0;
  std::size_t n_converged = 0;
  double p_converge = 0.0;
  double avg_final_zeros = 0.0;
  friend bool operator==(const CellRow& a, const CellRow& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.d0 == b.d0 && a.d1 == b.d1 && a.mode == b.mode && a.n_runs == b.n_runs &&
           a.n_converged == b.n_converged && same(a.p_converge, b.p_converge) &&
           same(a.avg_final_zeros, b.avg_final_zeros);
  }
};

inline std::vector<CellRow> cell_rows(const GridResult& g) {
  std::vector<CellRow> rows;
  for (const auto& c : g.cells)
    rows.push_back({c.d0, c.d1, to_string(c.mode), c.runs.size(), c.n_converged(), c.p_converge, c.avg_final_zeros});
  return rows;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

}  // namespace detail

inline constexpr const char* kCellsHeader = "d0,d1,mode,n_runs,n_converged,p_converge,avg_final_zeros";

inline void write_cells_csv(const std::filesystem::path& path, const std::vector<CellRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("export: no cells to write");
  auto out = detail::open_out(path);
  out << kCellsHeader << "\n";
  for (const auto& r : rows)
    out << r.d0 << "," << r.d1 << "," << r.mode << "," << r.n_runs << "," << r.n_converged << ","
        << detail::fmt(r.p_converge) << "," << detail::fmt(r.avg_final_zeros) << "\n";
}

inline std::vector<CellRow> read_cells_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kCellsHeader) throw std::runtime_error("cells CSV: unexpected header");
  std::vector<CellRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 7) throw std::runtime_error("cells CSV: malformed row");
    rows.push_back({std::stoul(c[0]), std::stoul(c[1]), c[2], std::stoul(c[3]), std::stoul(c[4]),
                    detail::parse_double(c[5]), detail::parse_double(c[6])});
  }
  return rows;
}

inline constexpr const char* kMetricsHeader = "k,loss,rel_residual,zeros,hamming,delta_L,delta_D";

inline void write_metrics_csv(const std::filesystem::path& path, const MetricSeries& s) {
  if (s.records.empty()) throw std::invalid_argument("export: empty metric series");
  auto out = detail::open_out(path);
  out << kMetricsHeader << "\n";
  for (const auto& r : s.records)
    out << r.k << "," << detail::fmt(r.loss) << "," << detail::fmt(r.rel_residual) << "," << r.zeros << ","
        << r.hamming << "," << detail::fmt(r.delta_L) << "," << detail::fmt(r.delta_D) << "\n";
}

inline MetricSeries read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw std::runtime_error("metrics CSV: unexpected header");
  MetricSeries s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 7) throw std::runtime_error("metrics CSV: malformed row");
    MetricRecord r;
    r.k = std::stoul(c[0]);
    r.loss = detail::parse_double(c[1]);
    r.rel_residual = detail::parse_double(c[2]);
    r.zeros = std::stoul(c[3]);
    r.hamming = std::stoul(c[4]);
    r.delta_L = detail::parse_double(c[5]);
    r.delta_D = detail::parse_double(c[6]);
    s.records.push_back(r);
  }
  return s;
}

inline void write_runs_csv(const std::filesystem::path& path, const GridResult& g) {
  if (g.cells.empty()) throw std::invalid_argument("export: no cells to write");
  auto out = detail::open_out(path);
  out << "d0,d1,mode,run,seed,converged,first_converged_k,final_loss,final_rel_residual,final_zeros,iterations,"
         "diverged\n";
  for (const auto& c : g.cells)
    for (const auto& r : c.runs)
      out << c.d0 << "," << c.d1 << "," << to_string(c.mode) << "," << r.run << "," << r.seed << ","
          << (r.converged ? 1 : 0) << "," << r.first_converged_k << "," << detail::fmt(r.final_loss) << ","
          << detail::fmt(r.final_rel_residual) << "," << r.final_zeros << "," << r.iterations << ","
          << (r.diverged ? 1 : 0) << "\n";
}

inline std::string metrics_svg(const std::string& title, const MetricSeries& s) {
  if (s.records.empty()) throw std::invalid_argument("export: empty metric series");
  std::vector<double> k, loss, zeros, ham, dl, dd;
  for (const auto& r : s.records) {
    k.push_back(static_cast<double>(r.k));
    loss.push_back(r.loss);
    zeros.push_back(static_cast<double>(r.zeros));
    ham.push_back(static_cast<double>(r.hamming));
    dl.push_back(r.delta_L);
    dd.push_back(r.delta_D);
  }
  return svg::line_panels(title, {{"loss", k, loss, true},
                                  {"zeros", k, zeros, false},
                                  {"hamming", k, ham, false},
                                  {"delta_L", k, dl, true},
                                  {"delta_D", k, dd, true}});
}

/// Heatmap over d0 (rows) x d1 (columns) of a per-cell quantity.
template <class Fn>
std::string grid_heatmap(const std::string& title, const GridResult& g, Fn value) {
  std::vector<double> rows(g.spec.d0_values.begin(), g.spec.d0_values.end());
  std::vector<double> cols(g.spec.d1_values.begin(), g.spec.d1_values.end());
  std::vector<std::vector<double>> vals(rows.size(), std::vector<double>(cols.size(), std::nan("")));
  for (const auto& c : g.cells) {
    const auto r = std::find(g.spec.d0_values.begin(), g.spec.d0_values.end(), c.d0) - g.spec.d0_values.begin();
    const auto q = std::find(g.spec.d1_values.begin(), g.spec.d1_values.end(), c.d1) - g.spec.d1_values.begin();
    vals[static_cast<std::size_t>(r)][static_cast<std::size_t>(q)] = value(c);
  }
  return svg::heatmap(title, "d0", rows, "d1", cols, vals);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = detail::open_out(path);
  out << text;
}

inline std::uint32_t file_crc32(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  boost::crc_32_type crc;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    crc.process_bytes(buf, static_cast<std::size_t>(in.gcount()));
  }
  return crc.checksum();
}

/// manifest.json: config echo, artifact version, CRC-32 of every listed file (relative paths, sorted).
inline void write_manifest(const std::filesystem::path& dir, const nlohmann::ordered_json& config,
                           std::vector<std::string> files) {
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json m;
  m["artifact_version"] = kArtifactVersion;
  m["config"] = config;
  nlohmann::ordered_json sums = nlohmann::ordered_json::object();
  for (const auto& f : files) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "%08x", file_crc32(dir / f));
    sums[f] = {{"crc32", hex}, {"bytes", std::filesystem::file_size(dir / f)}};
  }
  m["files"] = sums;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline std::string cell_id(const CellResult& c) {
  return to_string(c.mode) + "_d0-" + std::to_string(c.d0) + "_d1-" + std::to_string(c.d1);
}

/// Writes cells.csv, runs.csv, metrics/<cell>/run-<r>.csv and figures/*.svg for each grid;
/// returns the relative paths written.
inline std::vector<std::string> export_grids(const std::filesystem::path& dir, const std::vector<const GridResult*>& grids) {
  if (grids.empty()) throw std::invalid_argument("export: no results");
  std::vector<std::string> files;
  std::vector<CellRow> rows;
  GridResult all_runs;
  for (const GridResult* g : grids) {
    for (auto& r : cell_rows(*g)) rows.push_back(r);
    for (const auto& c : g->cells) all_runs.cells.push_back(c);
  }
  write_cells_csv(dir / "cells.csv", rows);
  files.push_back("cells.csv");
  write_runs_csv(dir / "runs.csv", all_runs);
  files.push_back("runs.csv");
  for (const GridResult* g : grids) {
    const std::string mode = to_string(g->spec.train_mode);
    const std::string pconv = "figures/p_converge_" + mode + ".svg";
    write_text(dir / pconv, grid_heatmap("probability of convergence (" + mode + ")", *g,
                                         [](const CellResult& c) { return c.p_converge; }));
    files.push_back(pconv);
    const std::string zer = "figures/zeros_" + mode + ".svg";
    write_text(dir / zer, grid_heatmap("avg final zeros, converged runs (" + mode + ")", *g,
                                       [](const CellResult& c) { return c.avg_final_zeros; }));
    files.push_back(zer);
    for (const auto& c : g->cells) {
      for (std::size_t r = 0; r < c.series.size(); ++r) {
        if (c.series[r].records.empty()) continue;
        const std::string rel = "metrics/" + cell_id(c) + "/run-" + std::to_string(r) + ".csv";
        write_metrics_csv(dir / rel, c.series[r]);
        files.push_back(rel);
      }
      if (!c.series.empty() && !c.series.front().records.empty()) {
        const std::string fig = "figures/metrics_" + cell_id(c) + ".svg";
        write_text(dir / fig, metrics_svg(cell_id(c) + " run 0", c.series.front()));
        files.push_back(fig);
      }
    }
  }
  return files;
}

// ---------------------------------------------------------------------------
// JSON configuration

inline nlohmann::ordered_json to_json(const GridSpec& s) {
  nlohmann::ordered_json j;
  j["d0_values"] = s.d0_values;
  j["d1_values"] = s.d1_values;
  j["n"] = s.n;
  j["n_runs"] = s.n_runs;
  j["train_mode"] = to_string(s.train_mode);
  j["eta"] = s.sgd.eta;
  j["batch_size"] = s.sgd.batch_size;
  j["momentum"] = s.sgd.momentum;
  j["convergence_threshold"] = s.convergence_threshold;
  j["zero_threshold"] = s.zero_threshold;
  j["max_iters"] = s.max_iters;
  j["log_every"] = s.log_every;
  j["beta_w"] = s.beta_w;
  j["convention"] = to_string(s.convention);
  j["master_seed"] = s.master_seed;
  j["eta_scale"] = s.eta_scale == EtaScale::ntk ? "ntk" : "absolute";
  j["delta_d"] = s.delta_d == DeltaDMethod::materialized ? "materialized"
                 : s.delta_d == DeltaDMethod::none     ? "none"
                                                       : "structured";
  return j;
}

/// Missing keys keep the defaults of GridSpec.
inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec s;
  s.d0_values = j.at("d0_values").get<std::vector<std::size_t>>();
  s.d1_values = j.at("d1_values").get<std::vector<std::size_t>>();
  s.n = j.value("n", s.n);
  s.n_runs = j.value("n_runs", s.n_runs);
  s.train_mode = train_layers_from_string(j.value("train_mode", std::string("both")));
  s.sgd.eta = j.value("eta", s.sgd.eta);
  s.sgd.batch_size = j.value("batch_size", std::size_t{0});
  s.sgd.momentum = j.value("momentum", 0.0);
  s.convergence_threshold = j.value("convergence_threshold", s.convergence_threshold);
  s.zero_threshold = j.value("zero_threshold", s.zero_threshold);
  s.max_iters = j.value("max_iters", s.max_iters);
  s.log_every = j.value("log_every", s.log_every);
  s.beta_w = j.value("beta_w", s.beta_w);
  s.convention = row_norm_from_string(j.value("convention", std::string("unit")));
  s.master_seed = j.value("master_seed", std::uint64_t{0});
  const std::string scale = j.value("eta_scale", std::string("absolute"));
  if (scale != "absolute" && scale != "ntk") throw std::invalid_argument("grid config: eta_scale must be absolute or ntk");
  s.eta_scale = scale == "ntk" ? EtaScale::ntk : EtaScale::absolute;
  const std::string dd = j.value("delta_d", std::string("structured"));
  if (dd == "structured") s.delta_d = DeltaDMethod::structured;
  else if (dd == "materialized") s.delta_d = DeltaDMethod::materialized;
  else if (dd == "none") s.delta_d = DeltaDMethod::none;
  else throw std::invalid_argument("grid config: delta_d must be structured, materialized or none");
  s.threads = j.value("threads", 1u);
  s.validate();
  return s;
}

}  // namespace relucert
