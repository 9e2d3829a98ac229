// Command-line front end: data generation, certificates, envelope sweeps,
// training logs, spectral statistics and experiment grids.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relucert/certificate.hpp"
#include "relucert/data.hpp"
#include "relucert/dynamics.hpp"
#include "relucert/harness.hpp"
#include "relucert/network.hpp"
#include "relucert/ode.hpp"
#include "relucert/spectral.hpp"
#include "relucert/svg.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace relucert;

namespace {

struct DataOpts {
  std::string path;
  std::size_t n = 32;
  std::size_t d0 = 8;
  std::size_t d2 = 1;
  std::string convention = "sqrt_d0";
  std::string labels = "pm_one";
  std::uint64_t seed = 0;
};

struct InitOpts {
  std::size_t d1 = 256;
  std::string scheme = "lecun";  // lecun | rho | fixed-signs
  double beta_w = -1.0;          // < 0: scheme default
  double rho = 1.0;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* app, DataOpts& d) {
  app->add_option("--data", d.path, "dataset CSV written by gen-data (overrides the generator flags)");
  app->add_option("--n", d.n, "number of samples N");
  app->add_option("--d0", d.d0, "input dimension");
  app->add_option("--d2", d.d2, "output dimension");
  app->add_option("--convention", d.convention, "row norm: sqrt_d0 | unit");
  app->add_option("--labels", d.labels, "pm_one | scaled");
  app->add_option("--data-seed", d.seed, "seed for X and Y");
}

void add_init_options(CLI::App* app, InitOpts& i) {
  app->add_option("--d1", i.d1, "hidden width");
  app->add_option("--init", i.scheme, "lecun | rho | fixed-signs");
  app->add_option("--beta-w", i.beta_w, "standard deviation of W0 entries");
  app->add_option("--rho", i.rho, "beta_v^2 = d1^-rho (init = rho)");
  app->add_option("--init-seed", i.seed, "seed for W0 and V0");
}

InitConfig make_init(const InitOpts& o, std::size_t d0, const Mat& y) {
  if (o.scheme == "lecun") {
    InitConfig c = InitConfig::lecun(d0, o.d1, o.seed);
    if (o.beta_w > 0.0) c.beta_w = o.beta_w;
    return c;
  }
  const double bw = o.beta_w > 0.0 ? o.beta_w : 1.0 / std::sqrt(static_cast<double>(d0));
  if (o.scheme == "rho") return InitConfig::with_rho(bw, o.rho, o.d1, o.seed);
  if (o.scheme == "fixed-signs") return InitConfig::fixed_signs(bw, frobenius_norm(y), y.rows(), o.seed);
  throw CLI::ValidationError("--init", "unknown scheme " + o.scheme);
}

Dataset load_or_generate(const DataOpts& d, const InitOpts* init = nullptr) {
  if (!d.path.empty()) return read_dataset(d.path);
  Dataset ds;
  ds.convention = row_norm_from_string(d.convention);
  ds.seed = d.seed;
  ds.X = sample_sphere_rows(d.n, d.d0, ds.convention, d.seed);
  LabelScale scale;
  scale.d0 = d.d0;
  if (init) {
    scale.d1 = init->d1;
    const InitConfig c = make_init(*init, d.d0, Mat(d.n, d.d2, 1.0));
    scale.beta_w = c.beta_w;
    scale.beta_v = c.scheme == InitScheme::gaussian_both ? c.beta_v : 1.0 / std::sqrt(static_cast<double>(init->d1));
  }
  const LabelMode mode = d.labels == "scaled" ? LabelMode::scaled : LabelMode::pm_one;
  if (d.labels != "scaled" && d.labels != "pm_one") throw CLI::ValidationError("--labels", "pm_one | scaled");
  ds.Y = gen_labels(d.n, d.d2, mode, d.seed, scale);
  return ds;
}

json nan_safe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json constants_json(const Constants& k) {
  return {{"a", k.a},   {"alpha", k.alpha}, {"c", k.c},           {"c1", k.c1},
          {"c2", k.c2}, {"x_op", k.x_op},   {"w0_fro", k.w0_fro}, {"v0_fro", k.v0_fro}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relucert: certificates, envelopes and training diagnostics for one-hidden-layer ReLU networks"};
  app.require_subcommand(1);

  // gen-data -----------------------------------------------------------------
  DataOpts gd;
  InitOpts gd_init;
  std::string gd_out = "data.csv";
  auto* gen = app.add_subcommand("gen-data", "sample X on a sphere and labels; writes CSV + JSON header");
  add_data_options(gen, gd);
  gen->add_option("--d1", gd_init.d1, "hidden width (sets the scale of 'scaled' labels)");
  gen->add_option("--beta-w", gd_init.beta_w, "W0 deviation used for the 'scaled' label norm");
  gen->add_option("--out", gd_out, "output CSV path");

  // certify ------------------------------------------------------------------
  DataOpts cd;
  InitOpts ci;
  std::string c_out = "certificate.json";
  double c_delta0 = 0.5, c_cdelta = 1.0, c_eps = 1e-3, c_eta = 1e-3, c_lconst = 1.0;
  std::size_t c_batch = 0;
  auto* cert = app.add_subcommand("certify", "initialization-time certificate and derived bounds");
  add_data_options(cert, cd);
  add_init_options(cert, ci);
  cert->add_option("--delta0", c_delta0, "exponent in d0 >= N^delta0 for the width requirement");
  cert->add_option("--c-delta", c_cdelta, "constant of the width requirement");
  cert->add_option("--eps", c_eps, "target loss for the iteration bound");
  cert->add_option("--eta", c_eta, "SGD step for the iteration bound");
  cert->add_option("--batch", c_batch, "SGD batch size for the iteration bound (0 = N)");
  cert->add_option("--loss-const", c_lconst, "constant of the initial-loss bound");
  cert->add_option("--out", c_out, "output JSON path");

  // ode-sweep ----------------------------------------------------------------
  EnvelopeParams ep{1.0, 1.0, 1.0, 1.0, 1.0};
  double o_lo = 1.5, o_hi = 4.0, o_horizon = 0.0;
  std::size_t o_n = 26, o_grid = 200;
  std::string o_dir = "ode_sweep";
  auto* ode = app.add_subcommand("ode-sweep", "integrate the scalar envelope over a range of alpha");
  ode->add_option("--a", ep.a, "initial root loss a");
  ode->add_option("--c", ep.c, "constant c");
  ode->add_option("--c1", ep.c1, "constant c1");
  ode->add_option("--c2", ep.c2, "constant c2");
  ode->add_option("--alpha-lo", o_lo, "smallest alpha");
  ode->add_option("--alpha-hi", o_hi, "largest alpha");
  ode->add_option("--points", o_n, "number of alpha values");
  ode->add_option("--horizon", o_horizon, "integration horizon (0 = 50/alpha^2)");
  ode->add_option("--grid", o_grid, "recorded time points per trajectory");
  ode->add_option("--out-dir", o_dir, "output directory");

  // train --------------------------------------------------------------------
  DataOpts td;
  InitOpts ti;
  SgdConfig tc;
  tc.steps = 1000;
  std::string t_layers = "both", t_out = "train";
  bool t_flow = false, t_alpha = false, t_validate = false;
  double t_max_time = 1.0, t_stop = 0.0;
  auto* train = app.add_subcommand("train", "SGD (or fine-step subgradient flow) with a per-iterate log");
  add_data_options(train, td);
  add_init_options(train, ti);
  train->add_option("--eta", tc.eta, "step size (flow: eta_ref)");
  train->add_option("--batch", tc.batch_size, "batch size b (0 = N)");
  train->add_option("--momentum", tc.momentum, "heavy-ball momentum in [0, 1)");
  train->add_option("--steps", tc.steps, "number of SGD steps");
  train->add_option("--layers", t_layers, "both | w-only");
  train->add_option("--seed", tc.seed, "batch sampling seed");
  train->add_option("--thin", tc.thin, "log every m-th step");
  train->add_flag("--flow", t_flow, "full-batch Euler flow up to --max-time (ignores --steps/--batch/--momentum)");
  train->add_option("--max-time", t_max_time, "flow horizon");
  train->add_option("--stop-loss", t_stop, "stop when the loss drops below this value");
  train->add_flag("--alpha0", t_alpha, "record alpha0 at logged iterates");
  train->add_flag("--validate", t_validate, "check the trajectory inequalities (flow, --thin 1)");
  train->add_option("--out-dir", t_out, "output directory");

  // spectral -----------------------------------------------------------------
  ThresholdSpec ts;
  int s_kmax = 40, s_r = 0;
  std::size_t s_conc_trials = 20;
  std::string s_dir = "spectral";
  auto* spec = app.add_subcommand("spectral", "Hermite table, lambda(X) bounds, alpha0 threshold and concentration");
  spec->add_option("--n", ts.n, "number of samples N");
  spec->add_option("--d0", ts.d0, "input dimension");
  spec->add_option("--d1", ts.d1, "hidden width");
  spec->add_option("--beta-w", ts.beta_w, "W0 deviation");
  spec->add_option("--trials", ts.n_trials, "W0 draws for the alpha0 threshold");
  spec->add_option("--n-mc", ts.n_mc, "Monte Carlo samples for the Gram estimate");
  spec->add_option("--seed", ts.seed, "seed");
  spec->add_option("--k-max", s_kmax, "largest Hermite index (even)");
  spec->add_option("--r", s_r, "Khatri-Rao power (0 = default from N and d0)");
  spec->add_option("--concentration-trials", s_conc_trials, "trials for the norm concentration ratios");
  spec->add_option("--out-dir", s_dir, "output directory");

  // grid ---------------------------------------------------------------------
  std::string g_config, g_out;
  auto* grid = app.add_subcommand("grid", "experiment grid over (d0, d1); writes CSV, SVG and a manifest");
  grid->add_option("--config", g_config, "grid JSON")->required();
  grid->add_option("--out-dir", g_out, "output directory (overrides output_dir in the config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      Dataset ds = load_or_generate(gd, &gd_init);
      write_dataset(ds, gd_out);
      std::cout << "wrote " << gd_out << "\n";
    } else if (*cert) {
      const Dataset ds = load_or_generate(cd, &ci);
      const InitConfig icfg = make_init(ci, ds.d0(), ds.Y);
      const Params theta0 = init_params(ds.d0(), ci.d1, ds.d2(), icfg);
      const Certificate c = certify(ds.X, ds.Y, theta0);
      json j;
      j["N"] = ds.n();
      j["d0"] = ds.d0();
      j["d1"] = ci.d1;
      j["d2"] = ds.d2();
      j["data_seed"] = ds.seed;
      j["init_scheme"] = ci.scheme;
      j["init_seed"] = ci.seed;
      j["beta_w"] = icfg.beta_w;
      j["beta_v"] = icfg.beta_v;
      j["constants"] = constants_json(c.constants);
      j["loss0"] = c.loss0;
      j["F_value"] = nan_safe(c.F_value);
      j["theorem_passes"] = c.theorem_passes;
      j["lemma_value"] = nan_safe(c.lemma_value);
      j["lemma_passes"] = c.lemma_passes;
      j["decay_rate"] = c.decay_rate;
      j["confinement_radius"] = nan_safe(c.confinement_radius);
      j["no_certificate_reason"] = c.no_certificate_reason ? json(*c.no_certificate_reason) : json(nullptr);
      const auto w = width_requirement(ds.n(), ds.d0(), ds.d2(), icfg.rho, icfg.beta_w, c_delta0, c_cdelta);
      j["width_requirement"] = {{"required_d1", w.required_d1}, {"d0_in_range", w.d0_in_range},
                                {"d1_sufficient", static_cast<double>(ci.d1) >= w.required_d1}};
      const std::size_t b = c_batch == 0 ? ds.n() : c_batch;
      if (c.decay_rate > 0.0)
        j["k_star"] = k_star_bound(ds.n(), b, c_eta, c_eps, c.decay_rate, c.loss0);
      else
        j["k_star"] = nullptr;
      j["loss0_bound_expression"] =
          loss0_bound_expression(ds.n(), ds.d0(), ci.d1, icfg.beta_w, icfg.beta_v, c_lconst);
      if (ds.d2() == 1) {
        const auto ol = one_layer_certificate(ds.X, ds.Y, theta0.W, theta0.V);
        j["one_layer"] = {{"beta0", ol.beta0},
                          {"width_required", ol.width_required},
                          {"width_ok", ol.width_ok},
                          {"condition_value", nan_safe(ol.condition_value)},
                          {"condition_small", ol.condition_small}};
      }
      write_json(c_out, j);
      std::cout << "wrote " << c_out << "\n";
    } else if (*ode) {
      StepControl ctl;
      const auto rows = sweep_alpha(ep, o_lo, o_hi, o_n, o_horizon, ctl);
      fs::create_directories(o_dir);
      std::ofstream csv(fs::path(o_dir) / "sweep.csv");
      csv << "alpha,condition_value,class,sup_y,t_blow,lemma_condition,sup_bound_ok,derivative_bound_ok\n";
      std::vector<svg::Panel> panels;
      for (const auto& r : rows) {
        csv << format_double(r.alpha) << "," << format_double(r.condition_value) << "," << (r.bounded ? "bounded" : "blowup") << ","
            << (r.bounded ? format_double(r.sup_y) : "nan") << "," << (r.bounded ? "nan" : format_double(r.t_blow))
            << "," << (r.lemma.condition_holds ? 1 : 0) << "," << (r.lemma.sup_bound_ok ? 1 : 0) << ","
            << (r.lemma.derivative_bound_ok ? 1 : 0) << "\n";
        // Resample each trajectory on a uniform grid for the CSV and the figure.
        const auto& tr = r.trajectory;
        std::vector<double> gt, gy;
        const double tmax = tr.times.back();
        std::size_t j = 0;
        for (std::size_t q = 0; q <= o_grid; ++q) {
          const double t = tmax * static_cast<double>(q) / static_cast<double>(o_grid);
          while (j + 1 < tr.times.size() && tr.times[j + 1] < t) ++j;
          double y = tr.y[j];
          if (j + 1 < tr.times.size() && tr.times[j + 1] > tr.times[j]) {
            const double f = (t - tr.times[j]) / (tr.times[j + 1] - tr.times[j]);
            y = tr.y[j] + std::clamp(f, 0.0, 1.0) * (tr.y[j + 1] - tr.y[j]);
          }
          gt.push_back(t);
          gy.push_back(y);
        }
        char name[64];
        std::snprintf(name, sizeof name, "alpha_%.4f.csv", r.alpha);
        std::ofstream tcsv(fs::path(o_dir) / "trajectories" / name);
        if (!tcsv) {
          fs::create_directories(fs::path(o_dir) / "trajectories");
          tcsv.open(fs::path(o_dir) / "trajectories" / name);
        }
        tcsv << "t,y\n";
        for (std::size_t q = 0; q < gt.size(); ++q) tcsv << format_double(gt[q]) << "," << format_double(gy[q]) << "\n";
        char title[96];
        std::snprintf(title, sizeof title, "alpha=%.3f %s", r.alpha, r.bounded ? "bounded" : "blowup");
        panels.push_back({title, gt, gy, false});
      }
      write_text(fs::path(o_dir) / "envelopes.svg", svg::line_panels("envelope y(t) per alpha", panels));
      json j;
      j["params"] = {{"a", ep.a}, {"c", ep.c}, {"c1", ep.c1}, {"c2", ep.c2}};
      j["alpha_range"] = {o_lo, o_hi};
      j["points"] = o_n;
      j["single_transition"] = has_single_transition(rows);
      j["transition_alpha"] = nan_safe(transition_alpha(rows));
      bool lemma_ok = true;
      for (const auto& r : rows)
        if (r.lemma.condition_holds) lemma_ok = lemma_ok && r.lemma.sup_bound_ok && r.lemma.derivative_bound_ok;
      j["lemma_bounds_hold"] = lemma_ok;
      // Rows where the condition holds but the integration still blew up.
      json conflicts = json::array();
      for (const auto& r : rows)
        if (r.lemma.condition_holds && !r.bounded) conflicts.push_back(r.alpha);
      j["condition_blowup_conflicts"] = conflicts;
      write_json(fs::path(o_dir) / "sweep.json", j);
      std::cout << "wrote " << o_dir << "\n";
    } else if (*train) {
      const Dataset ds = load_or_generate(td, &ti);
      const Params theta0 = init_params(ds.d0(), ti.d1, ds.d2(), make_init(ti, ds.d0(), ds.Y));
      const TrainLayers layers = train_layers_from_string(t_layers);
      TrajectoryLog log;
      if (t_flow) {
        FlowConfig fc;
        fc.eta_ref = tc.eta;
        fc.max_time = t_max_time;
        fc.stop_loss = t_stop;
        fc.thin = tc.thin;
        fc.compute_alpha0 = t_alpha || t_validate;
        log = run_flow(ds.X, ds.Y, theta0, fc);
      } else {
        if (tc.batch_size == 0) tc.batch_size = ds.n();
        tc.compute_alpha0 = t_alpha || t_validate;
        log = run_sgd(ds.X, ds.Y, theta0, tc, layers, t_stop);
      }
      fs::create_directories(t_out);
      std::ofstream csv(fs::path(t_out) / "trajectory.csv");
      csv << "k,t,loss,theta_dist,w_dist,alpha0,zeros\n";
      for (const auto& r : log.iterates)
        csv << r.k << "," << format_double(r.t) << "," << format_double(r.loss) << "," << format_double(r.theta_dist)
            << "," << format_double(r.w_dist) << "," << (std::isnan(r.alpha0) ? "nan" : format_double(r.alpha0))
            << "," << r.zeros << "\n";
      const Certificate c = certify(ds.X, ds.Y, theta0);
      json j;
      j["kind"] = t_flow ? "flow" : "sgd";
      j["layers"] = to_string(layers);
      j["step_size"] = log.step_size;
      j["thinning"] = log.thinning;
      j["logged"] = log.iterates.size();
      j["diverged"] = log.diverged;
      j["initial_loss"] = log.iterates.front().loss;
      j["final_loss"] = log.iterates.back().loss;
      j["final_k"] = log.iterates.back().k;
      j["constants"] = constants_json(c.constants);
      j["F_value"] = nan_safe(c.F_value);
      j["theorem_passes"] = c.theorem_passes;
      if (t_validate) {
        const auto rep = validate_trajectory(log, c.constants);
        json viol = json::array();
        for (const auto& v : rep.violations)
          viol.push_back({{"inequality", to_string(v.id)}, {"t", v.t}, {"lhs", v.lhs}, {"rhs", v.rhs}});
        j["validation"] = {{"points_checked", rep.points_checked}, {"violations", viol}};
      }
      write_json(fs::path(t_out) / "summary.json", j);
      std::cout << "wrote " << t_out << "\n";
    } else if (*spec) {
      fs::create_directories(s_dir);
      std::ofstream csv(fs::path(s_dir) / "hermite.csv");
      csv << "k,mu_k,ratio\n";
      const HermiteTable table = hermite_table(s_kmax);
      for (int k = 0; k <= s_kmax; ++k)
        csv << k << "," << format_double(table.mu[k]) << "," << (k == 0 ? "nan" : format_double(table.ratio(k)))
            << "\n";
      ts.threads = 1;
      const ThresholdResult thr = alpha_threshold_experiment(ts);
      const Mat x = sample_sphere_rows(ts.n, ts.d0, RowNorm::sqrt_d0, ts.seed);
      const GramEstimate g = estimate_gram(x, ts.n_mc, ts.seed);
      SpectralReport rep;
      rep.r = s_r > 0 ? s_r : default_r(ts.n, ts.d0);
      rep.lambda_lower = lambda_lower_bound(x, rep.r);
      rep.lambda_lower_exact = lambda_lower_bound(x, rep.r, LowerBoundMethod::exact);
      rep.lambda_mc = g.lambda_hat;
      rep.lambda_stderr = g.lambda_stderr;
      rep.alpha_threshold = thr.threshold;
      rep.pass_fraction = thr.pass_fraction;
      rep.alpha_empirical = thr.alpha_empirical;
      ConcentrationSpec cs;
      cs.n = ts.n;
      cs.d0 = ts.d0;
      cs.d1 = ts.d1;
      cs.init = InitConfig::lecun(ts.d0, ts.d1);
      cs.n_trials = s_conc_trials;
      cs.seed = ts.seed;
      cs.threads = 1;
      rep.concentration = concentration_report(cs);
      auto stats = [](const RatioStats& s) {
        return json{{"min", nan_safe(s.min)}, {"median", nan_safe(s.median)}, {"max", nan_safe(s.max)}};
      };
      json j;
      j["N"] = ts.n;
      j["d0"] = ts.d0;
      j["d1"] = ts.d1;
      j["beta_w"] = ts.beta_w;
      j["r"] = rep.r;
      j["lambda_lower"] = rep.lambda_lower;
      j["lambda_lower_exact"] = rep.lambda_lower_exact;
      j["lambda_mc"] = rep.lambda_mc;
      j["lambda_stderr"] = nan_safe(rep.lambda_stderr);
      j["alpha_threshold"] = rep.alpha_threshold;
      j["pass_fraction"] = rep.pass_fraction;
      j["alpha_empirical"] = rep.alpha_empirical;
      j["concentration"] = {{"w0", stats(rep.concentration.w0)},
                            {"v0", stats(rep.concentration.v0)},
                            {"x_op", stats(rep.concentration.x_op)},
                            {"loss0", stats(rep.concentration.loss)}};
      write_json(fs::path(s_dir) / "spectral.json", j);
      std::cout << "wrote " << s_dir << "\n";
    } else if (*grid) {
      std::ifstream in(g_config);
      if (!in) throw std::runtime_error("cannot read " + g_config);
      const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      const nlohmann::json cfg = nlohmann::json::parse(text);
      const fs::path out = !g_out.empty() ? fs::path(g_out) : fs::path(cfg.value("output_dir", std::string("grid_out")));
      const std::string mode = cfg.value("train_mode", std::string("both"));
      auto spec_for = [&](const std::string& m, const char* eta_key) {
        nlohmann::json c = cfg;
        c["train_mode"] = m;
        if (cfg.contains(eta_key)) c["eta"] = cfg[eta_key];
        return grid_spec_from_json(c);
      };
      const json echo = json::parse(text);
      std::vector<std::string> files;
      if (mode == "compare") {
        const GridSpec sw = spec_for("w_only", "eta_w_only");
        const GridSpec sb = spec_for("both", "eta_both");
        const ModeComparison mc = compare_training_modes(sw, sb);
        files = export_grids(out, {&mc.numerator, &mc.denominator});
        json cmp;
        cmp["median_zeros_ratio"] = nan_safe(mc.median_ratio);
        json cells = json::array();
        for (const auto& c : mc.cells)
          cells.push_back({{"d0", c.d0},
                           {"d1", c.d1},
                           {"paired_runs", c.paired_runs},
                           {"ratio", nan_safe(c.ratio)},
                           {"included", c.included},
                           {"flag", c.flag}});
        cmp["cells"] = cells;
        write_json(out / "comparison.json", cmp);
        files.push_back("comparison.json");
      } else {
        const GridSpec s = spec_for(mode, mode == "w_only" ? "eta_w_only" : "eta_both");
        const GridResult r = run_grid(s);
        files = export_grids(out, {&r});
      }
      write_manifest(out, echo, files);
      std::cout << "wrote " << out.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
