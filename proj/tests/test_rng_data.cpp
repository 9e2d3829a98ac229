#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "relucert/data.hpp"
#include "relucert/rng.hpp"

using namespace relucert;

// Known-answer vectors of Philox-4x32-10 (Random123 reference values).
TEST(Philox, KnownAnswerVectors) {
  using B = std::array<std::uint32_t, 4>;
  EXPECT_EQ(Philox(0).block({0, 0, 0, 0}), (B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox(~0ULL).block({~0U, ~0U, ~0U, ~0U}), (B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  const Philox pi(0x299f31d0a4093822ULL);
  EXPECT_EQ(pi.block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}),
            (B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
  auto a = make_stream(42, StreamPurpose::inputs);
  auto b = make_stream(42, StreamPurpose::inputs);
  auto c = make_stream(42, StreamPurpose::labels);
  auto d = make_stream(42, StreamPurpose::inputs, {1});
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  firsts.insert(b());
  firsts.insert(c());
  firsts.insert(d());
  EXPECT_EQ(firsts.size(), 3u);
  EXPECT_NE(stream_key(1, {2, 3}), stream_key(1, {3, 2}));
}

TEST(Philox, UniformMoments) {
  auto g = make_stream(7, StreamPurpose::misc);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = u(g);
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - 0.25, 1.0 / 12.0, 0.002);
}

TEST(Data, SphereRowsHaveRequestedNorm) {
  const Mat x = sample_sphere_rows(50, 9, RowNorm::sqrt_d0, 3);
  const Mat u = sample_sphere_rows(50, 9, RowNorm::unit, 3);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_NEAR(vec_norm(x.row(i)), 3.0, 1e-12);
    EXPECT_NEAR(vec_norm(u.row(i)), 1.0, 1e-12);
  }
  EXPECT_EQ(x, sample_sphere_rows(50, 9, RowNorm::sqrt_d0, 3));
  int seed = 3;  // an int lvalue must select the seed overload, not the engine template
  EXPECT_EQ(x, sample_sphere_rows(50, 9, RowNorm::sqrt_d0, seed));
  EXPECT_EQ(gen_labels(8, 1, LabelMode::pm_one, seed), gen_labels(8, 1, LabelMode::pm_one, 3));
}

TEST(Data, BalancedSignLabels) {
  const Mat y = gen_labels(40, 1, LabelMode::pm_one, 5);
  double s = 0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 1.0 || v == -1.0);
    s += v;
  }
  EXPECT_EQ(s, 0.0);
  EXPECT_THROW(gen_labels(41, 1, LabelMode::pm_one, 5), std::invalid_argument);
  EXPECT_THROW(gen_labels(40, 2, LabelMode::pm_one, 5), DimensionError);
}

TEST(Data, ScaledLabelRowNorm) {
  LabelScale sc{0.5, 0.25, 16, 64};
  const Mat y = gen_labels(10, 3, LabelMode::scaled, 1, sc);
  const double target = 0.5 * 0.25 * std::sqrt(16.0 * 64.0 * 3.0);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(vec_norm(y.row(i)), target, 1e-12);
}

TEST(Data, InitSchemes) {
  const auto lc = InitConfig::lecun(16, 400, 9);
  EXPECT_DOUBLE_EQ(lc.beta_w, 0.25);
  EXPECT_DOUBLE_EQ(lc.beta_v, 0.05);
  const Params p = init_params(16, 400, 1, lc);
  EXPECT_NEAR(frobenius_norm(p.W) / (0.25 * std::sqrt(16.0 * 400)), 1.0, 0.05);
  EXPECT_NEAR(frobenius_norm(p.V) / (0.05 * std::sqrt(400.0)), 1.0, 0.15);

  const auto rc = InitConfig::with_rho(1.0, 2.0, 100);
  EXPECT_DOUBLE_EQ(rc.beta_v, 0.01);

  const auto fs = InitConfig::fixed_signs(1.0, 6.0, 9);
  const Params q = init_params(4, 10, 1, fs);
  const double mag = 6.0 / std::sqrt(9.0 * 10.0);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_DOUBLE_EQ(q.V(j, 0), j < 5 ? mag : -mag);
  EXPECT_THROW(init_params(4, 9, 1, fs), std::invalid_argument);
  EXPECT_THROW(init_params(4, 10, 2, fs), DimensionError);
}

TEST(Data, DatasetRoundTripIsExact) {
  Dataset ds;
  ds.X = sample_sphere_rows(12, 5, RowNorm::sqrt_d0, 11);
  ds.Y = gen_labels(12, 2, LabelMode::scaled, 11);
  ds.seed = 11;
  const auto dir = std::filesystem::temp_directory_path() / "relucert_rt";
  std::filesystem::create_directories(dir);
  write_dataset(ds, dir / "d.csv");
  const Dataset back = read_dataset(dir / "d.csv");
  EXPECT_EQ(back.X, ds.X);
  EXPECT_EQ(back.Y, ds.Y);
  EXPECT_EQ(back.seed, 11u);
  EXPECT_EQ(back.convention, RowNorm::sqrt_d0);
  std::filesystem::remove_all(dir);
}
