#include <gtest/gtest.h>

#include <random>

#include "relucert/data.hpp"
#include "relucert/network.hpp"

using namespace relucert;

namespace {

struct Problem {
  Mat x, y;
  Params p;
};

Problem make_problem(std::uint64_t seed, std::size_t n = 8, std::size_t d0 = 3, std::size_t d1 = 6,
                     std::size_t d2 = 2) {
  Problem pr;
  pr.x = sample_sphere_rows(n, d0, RowNorm::sqrt_d0, seed);
  pr.y = gen_labels(n, d2, LabelMode::scaled, seed);
  pr.p = init_params(d0, d1, d2, InitConfig::lecun(d0, d1, seed));
  return pr;
}

std::vector<double> mat_vec(const Mat& j, const std::vector<double>& v) { return matvec_t(j.transpose(), v); }

}  // namespace

TEST(Network, SelectionRuleOnlyMattersAtZero) {
  EXPECT_EQ(relu_derivative(0.0, SelectionRule::zero), 0.0);
  EXPECT_EQ(relu_derivative(0.0, SelectionRule::half), 0.5);
  EXPECT_EQ(relu_derivative(0.0, SelectionRule::one), 1.0);
  for (auto r : {SelectionRule::zero, SelectionRule::half, SelectionRule::one}) {
    EXPECT_EQ(relu_derivative(1e-300, r), 1.0);
    EXPECT_EQ(relu_derivative(-1e-300, r), 0.0);
  }
}

TEST(Network, LossIsHalfSquaredFrobenius) {
  Mat x{{1, 0}, {0, 1}};
  Params p{Mat{{1, -1}, {2, 0}}, Mat{{1}, {3}}};
  Mat y{{0}, {1}};
  // XW = [[1,-1],[2,0]] -> relu [[1,0],[2,0]] -> out [1,2]
  EXPECT_DOUBLE_EQ(loss(x, y, p), 0.5 * (1.0 + 1.0));
}

TEST(Network, SubgradientMatchesFiniteDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Problem pr = make_problem(seed);
    const auto g = flatten(subgradient(pr.x, pr.y, pr.p));
    auto theta = flatten(pr.p);
    const double h = 1e-6;
    for (std::size_t k = 0; k < theta.size(); k += 5) {
      Params a = pr.p, b = pr.p;
      const std::size_t dw = pr.p.W.size();
      auto set = [&](Params& q, double d) {
        if (k < dw)
          q.W(k % q.W.rows(), k / q.W.rows()) += d;
        else
          q.V((k - dw) % q.V.rows(), (k - dw) / q.V.rows()) += d;
      };
      set(a, h);
      set(b, -h);
      const double fd = (loss(pr.x, pr.y, a) - loss(pr.x, pr.y, b)) / (2 * h);
      EXPECT_NEAR(fd, g[k], 1e-5 * std::max(1.0, std::abs(g[k])));
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Network, JacobianTransposeResidualIsSubgradient) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Problem pr = make_problem(seed);
    const Mat j = jacobian(pr.x, pr.p);
    const ForwardCache fc = forward(pr.x, pr.y, pr.p);
    std::vector<double> diff;
    for (double v : fc.residual.data()) diff.push_back(-v);
    const auto jt = matvec_t(j, diff);
    const auto g = flatten(subgradient(pr.x, pr.y, pr.p));
    ASSERT_EQ(jt.size(), g.size());
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(jt[k], g[k], 1e-10 * std::max(1.0, std::abs(g[k])));
  }
}

TEST(Network, JacobianIsDirectionalDerivative) {
  const Problem pr = make_problem(3);
  const Mat j = jacobian(pr.x, pr.p);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n;
  Params dir = pr.p;
  for (double& v : dir.W.data()) v = n(gen);
  for (double& v : dir.V.data()) v = n(gen);
  const auto jd = mat_vec(j, flatten(dir));
  const double h = 1e-6;
  Params a = pr.p, b = pr.p;
  for (std::size_t k = 0; k < a.W.size(); ++k) {
    a.W.data()[k] += h * dir.W.data()[k];
    b.W.data()[k] -= h * dir.W.data()[k];
  }
  for (std::size_t k = 0; k < a.V.size(); ++k) {
    a.V.data()[k] += h * dir.V.data()[k];
    b.V.data()[k] -= h * dir.V.data()[k];
  }
  const Mat oa = forward(pr.x, a).output, ob = forward(pr.x, b).output;
  for (std::size_t r = 0; r < oa.size(); ++r)
    EXPECT_NEAR((oa.data()[r] - ob.data()[r]) / (2 * h), jd[r], 1e-5);
}

TEST(Network, StructuredGramMatchesMaterialized) {
  for (auto blocks : {JacobianBlocks::both, JacobianBlocks::w_only}) {
    const Problem pr = make_problem(4);
    Problem q = make_problem(5);
    const Mat j = jacobian(pr.x, pr.p, SelectionRule::zero, blocks);
    const Mat jq = jacobian(pr.x, q.p, SelectionRule::zero, blocks);
    const Mat k = jacobian_gram(pr.x, pr.p, SelectionRule::zero, blocks);
    const Mat ref = matmul_nt(j, j);
    const Mat dk = jacobian_difference_gram(pr.x, pr.p, q.p, SelectionRule::zero, blocks);
    const Mat dj = jq - j;
    const Mat dref = matmul_nt(dj, dj);
    for (std::size_t t = 0; t < k.size(); ++t) {
      EXPECT_NEAR(k.data()[t], ref.data()[t], 1e-10 * (1 + std::abs(ref.data()[t])));
      EXPECT_NEAR(dk.data()[t], dref.data()[t], 1e-10 * (1 + std::abs(dref.data()[t])));
    }
  }
}

TEST(Network, BatchEvaluationMatchesGatheredRows) {
  const Problem pr = make_problem(6);
  const std::vector<std::size_t> batch{1, 4, 6};
  const auto e = evaluate_batch(pr.x, pr.y, pr.p, batch, SelectionRule::zero);
  Mat xb(3, pr.x.cols()), yb(3, pr.y.cols());
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < pr.x.cols(); ++c) xb(r, c) = pr.x(batch[r], c);
    for (std::size_t c = 0; c < pr.y.cols(); ++c) yb(r, c) = pr.y(batch[r], c);
  }
  EXPECT_DOUBLE_EQ(e.loss, loss(xb, yb, pr.p));
  EXPECT_DOUBLE_EQ(e.loss, batch_loss(pr.x, pr.y, pr.p, batch));
  const auto g = subgradient(xb, yb, pr.p);
  EXPECT_EQ(e.grad.gW, g.gW);
  EXPECT_EQ(e.grad.gV, g.gV);
  EXPECT_THROW(evaluate_batch(pr.x, pr.y, pr.p, std::vector<std::size_t>{0, 99}, SelectionRule::zero),
               std::exception);
}

TEST(Network, ActivationPatternAndHamming) {
  Mat x{{1, 0}, {0, 1}};
  Params p{Mat{{1, -1}, {0, 2}}, Mat{{1}, {1}}};
  const auto a = activation_pattern(x, p);
  EXPECT_EQ(a.mask, (std::vector<std::uint8_t>{1, 0, 0, 1}));
  EXPECT_EQ(a.zero_count, 1u);
  Params q = p;
  q.W(0, 1) = 1;
  EXPECT_EQ(hamming_distance(a, activation_pattern(x, q)), 1u);
}

TEST(Network, AlphaZeroWhenWidthBelowSamples) {
  const Problem pr = make_problem(7, 10, 3, 4, 1);
  EXPECT_EQ(alpha0(pr.x, pr.p), 0.0);
  const Problem wide = make_problem(7, 6, 3, 40, 1);
  EXPECT_GT(alpha0(wide.x, wide.p), 0.0);
}
