/**
 * @file data.hpp
 * @brief Synthetic datasets and network initializations.
 *
 * Inputs are rows drawn uniformly from a sphere (a normalized standard
 * Gaussian vector), of radius sqrt(d0) or 1. Labels are either a balanced
 * +-1 assignment or rows of a prescribed norm. Parameters are Gaussian in
 * both layers, or Gaussian in the hidden layer with a fixed +-c output
 * column for hidden-layer-only training.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linalg.hpp"
#include "rng.hpp"

namespace relucert {

enum class RowNorm { sqrt_d0, unit };
enum class LabelMode { pm_one, scaled };
enum class InitScheme { gaussian_both, fixed_v_signs };

inline std::string to_string(RowNorm c) { return c == RowNorm::unit ? "unit" : "sqrt_d0"; }
inline RowNorm row_norm_from_string(const std::string& s) {
  if (s == "unit") return RowNorm::unit;
  if (s == "sqrt_d0") return RowNorm::sqrt_d0;
  throw std::invalid_argument("unknown row-norm convention: " + s);
}

struct Dataset {
  Mat X;  ///< N x d0
  Mat Y;  ///< N x d2
  RowNorm convention = RowNorm::sqrt_d0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t n() const noexcept { return X.rows(); }
  [[nodiscard]] std::size_t d0() const noexcept { return X.cols(); }
  [[nodiscard]] std::size_t d2() const noexcept { return Y.cols(); }
};

/// Output-layer values for the fixed-sign scheme: +-||y|| / sqrt(N d1).
struct FixedOutputSpec {
  double y_norm = 0.0;
  std::size_t n_samples = 0;
};

struct InitConfig {
  double beta_w = 1.0;
  double beta_v = 1.0;
  double rho = 0.0;  ///< beta_v^2 = d1^{-rho} when built by with_rho()
  InitScheme scheme = InitScheme::gaussian_both;
  std::uint64_t seed = 0;
  std::optional<FixedOutputSpec> fixed_output;

  /// beta_w^2 = 1/d0, beta_v^2 = 1/d1 (rho = 1).
  static InitConfig lecun(std::size_t d0, std::size_t d1, std::uint64_t seed = 0) {
    InitConfig c;
    c.beta_w = 1.0 / std::sqrt(static_cast<double>(d0));
    c.beta_v = 1.0 / std::sqrt(static_cast<double>(d1));
    c.rho = 1.0;
    c.seed = seed;
    return c;
  }
  static InitConfig with_rho(double beta_w, double rho, std::size_t d1, std::uint64_t seed = 0) {
    InitConfig c;
    c.beta_w = beta_w;
    c.rho = rho;
    c.beta_v = std::pow(static_cast<double>(d1), -rho / 2.0);
    c.seed = seed;
    return c;
  }
  static InitConfig fixed_signs(double beta_w, double y_norm, std::size_t n_samples,
                                std::uint64_t seed = 0) {
    InitConfig c;
    c.beta_w = beta_w;
    c.scheme = InitScheme::fixed_v_signs;
    c.fixed_output = FixedOutputSpec{y_norm, n_samples};
    c.seed = seed;
    return c;
  }
};

struct Params {
  Mat W;  ///< d0 x d1
  Mat V;  ///< d1 x d2

  [[nodiscard]] std::size_t d0() const noexcept { return W.rows(); }
  [[nodiscard]] std::size_t d1() const noexcept { return W.cols(); }
  [[nodiscard]] std::size_t d2() const noexcept { return V.cols(); }
  [[nodiscard]] std::size_t dim() const noexcept { return W.size() + V.size(); }

  [[nodiscard]] double norm() const {
    const double w = vec_norm(W.data());
    const double v = vec_norm(V.data());
    return std::sqrt(w * w + v * v);
  }

  Params& operator-=(const Params& o) {
    W -= o.W;
    V -= o.V;
    return *this;
  }
  friend Params operator-(Params a, const Params& b) { return a -= b; }
  friend bool operator==(const Params&, const Params&) = default;
};

/// Euclidean distance between stacked parameter vectors.
inline double distance(const Params& a, const Params& b) { return (a - b).norm(); }

/// Rows i.i.d. uniform on the sphere of radius sqrt(d0) (or 1).
template <std::uniform_random_bit_generator Engine>
Mat sample_sphere_rows(std::size_t n, std::size_t d0, RowNorm convention, Engine& rng) {
  if (n == 0 || d0 == 0) throw DimensionError("sample_sphere_rows: zero dimension");
  const double radius = convention == RowNorm::unit ? 1.0 : std::sqrt(static_cast<double>(d0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat x(n, d0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    double nrm = 0.0;
    do {
      for (double& v : r) v = gauss(rng);
      nrm = vec_norm(r);
    } while (nrm == 0.0);
    for (double& v : r) v = v / nrm * radius;
  }
  return x;
}

inline Mat sample_sphere_rows(std::size_t n, std::size_t d0, RowNorm convention, std::uint64_t seed) {
  auto rng = make_stream(seed, StreamPurpose::inputs);
  return sample_sphere_rows(n, d0, convention, rng);
}

/// Scale for LabelMode::scaled rows: beta_w beta_v sqrt(d0 d1 d2).
struct LabelScale {
  double beta_w = 1.0;
  double beta_v = 1.0;
  std::size_t d0 = 1;
  std::size_t d1 = 1;

  [[nodiscard]] double row_norm(std::size_t d2) const {
    return beta_w * beta_v * std::sqrt(static_cast<double>(d0) * static_cast<double>(d1) *
                                       static_cast<double>(d2));
  }
};

template <std::uniform_random_bit_generator Engine>
Mat gen_labels(std::size_t n, std::size_t d2, LabelMode mode, Engine& rng,
               const LabelScale& scale = {}) {
  if (n == 0 || d2 == 0) throw DimensionError("gen_labels: zero dimension");
  if (mode == LabelMode::pm_one) {
    if (d2 != 1) throw DimensionError("gen_labels: pm_one requires d2 = 1");
    if (n % 2 != 0) throw std::invalid_argument("gen_labels: pm_one requires even N");
    std::vector<double> y(n, -1.0);
    std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n / 2), 1.0);
    std::shuffle(y.begin(), y.end(), rng);
    return Mat(n, 1, std::move(y));
  }
  const double target = scale.row_norm(d2);
  Mat y = sample_sphere_rows(n, d2, RowNorm::unit, rng);
  y *= target;
  return y;
}

inline Mat gen_labels(std::size_t n, std::size_t d2, LabelMode mode, std::uint64_t seed,
                      const LabelScale& scale = {}) {
  auto rng = make_stream(seed, StreamPurpose::labels);
  return gen_labels(n, d2, mode, rng, scale);
}

inline Params init_params(std::size_t d0, std::size_t d1, std::size_t d2, const InitConfig& cfg) {
  if (d0 == 0 || d1 == 0 || d2 == 0) throw DimensionError("init_params: zero dimension");
  if (cfg.beta_w < 0.0 || cfg.beta_v < 0.0) throw std::invalid_argument("init_params: negative deviation");
  Params p{Mat(d0, d1), Mat(d1, d2)};
  {
    auto rng = make_stream(cfg.seed, StreamPurpose::weights_w);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& w : p.W.data()) w = cfg.beta_w * gauss(rng);
  }
  if (cfg.scheme == InitScheme::gaussian_both) {
    auto rng = make_stream(cfg.seed, StreamPurpose::weights_v);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : p.V.data()) v = cfg.beta_v * gauss(rng);
    return p;
  }
  if (d2 != 1) throw DimensionError("init_params: fixed_v_signs requires d2 = 1");
  if (d1 % 2 != 0) throw std::invalid_argument("init_params: fixed_v_signs requires even d1");
  if (!cfg.fixed_output || cfg.fixed_output->n_samples == 0)
    throw std::invalid_argument("init_params: fixed_v_signs requires ||y|| and N");
  const double mag = cfg.fixed_output->y_norm /
                     std::sqrt(static_cast<double>(cfg.fixed_output->n_samples) * static_cast<double>(d1));
  for (std::size_t j = 0; j < d1; ++j) p.V(j, 0) = j < d1 / 2 ? mag : -mag;
  return p;
}

// ---------------------------------------------------------------------------
// CSV + JSON header I/O

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write " + csv_path.string());
  for (std::size_t j = 0; j < ds.d0(); ++j) out << (j ? "," : "") << "x" << j;
  for (std::size_t m = 0; m < ds.d2(); ++m) out << ",y" << m;
  out << "\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d0(); ++j) out << (j ? "," : "") << format_double(ds.X(i, j));
    for (std::size_t m = 0; m < ds.d2(); ++m) out << "," << format_double(ds.Y(i, m));
    out << "\n";
  }
  nlohmann::ordered_json header = {{"N", ds.n()},
                                   {"d0", ds.d0()},
                                   {"d2", ds.d2()},
                                   {"convention", to_string(ds.convention)},
                                   {"seed", ds.seed}};
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream jh(json_path);
  if (!jh) throw std::runtime_error("cannot write " + json_path.string());
  jh << header.dump(2) << "\n";
}

/// Reads the CSV and the JSON header next to it (same stem, .json).
inline Dataset read_dataset(const std::filesystem::path& csv_path) {
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ifstream jh(json_path);
  if (!jh) throw std::runtime_error("missing dataset header " + json_path.string());
  const auto header = nlohmann::json::parse(jh);
  const std::size_t n = header.at("N").get<std::size_t>();
  const std::size_t d0 = header.at("d0").get<std::size_t>();
  const std::size_t d2 = header.at("d2").get<std::size_t>();

  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot read " + csv_path.string());
  std::string line;
  std::getline(in, line);  // column names
  Dataset ds{Mat(n, d0), Mat(n, d2), row_norm_from_string(header.at("convention").get<std::string>()),
             header.at("seed").get<std::uint64_t>()};
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("dataset CSV: too few rows");
    std::istringstream ls(line);
    std::string cell;
    for (std::size_t j = 0; j < d0 + d2; ++j) {
      if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset CSV: too few columns");
      const double v = std::stod(cell);
      if (j < d0)
        ds.X(i, j) = v;
      else
        ds.Y(i, j - d0) = v;
    }
  }
  return ds;
}

}  // namespace relucert
