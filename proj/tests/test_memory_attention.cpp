#include "cntf/memory_attention.hpp"
#include "support/gradcheck.hpp"
#include "support/scalar_oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace cntf {
namespace {

constexpr double kTol = 1e-12;

struct Hops {
  ParameterStore store;
  std::vector<HopParams> hops;

  Hops(int hidden, int count, std::uint64_t seed = 1) {
    Rng rng(seed);
    hops = add_hops(store, "h", hidden, count, 0.5, rng);
  }
  void zero(int index) { store.value(index).setZero(); }
};

Matrix random(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

TEST(AttendHop, ZeroScoringWeightsGiveUniformWeightsAndMeanContext) {
  Hops h(3, 1);
  h.zero(h.hops[0].v1);
  ag::Graph g(false);
  Binder p(g, h.store);
  const Matrix dh = random(4, 3, 2);
  const HopOutput out = attend_hop(p, h.hops[0], g.constant(random(3, 1, 3)), g.constant(random(4, 3, 4)),
                                   g.constant(dh));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(out.alpha.value()(j), 0.25, kTol);
  EXPECT_LT((out.context.value() - dh.colwise().mean().transpose()).norm(), kTol);
}

TEST(AttendHop, TwoPositionExampleMatchesClosedForm) {
  Hops h(1, 1);
  h.store.value(h.hops[0].v1).setConstant(1.0);
  h.zero(h.hops[0].w1);
  h.store.value(h.hops[0].w2).setConstant(1.0);
  ag::Graph g(false);
  Binder p(g, h.store);
  Matrix ds(2, 1), dh(2, 1);
  ds << 0.0, 10.0;
  dh << 1.0, 2.0;
  const HopOutput out = attend_hop(p, h.hops[0], g.constant(Matrix::Constant(1, 1, 0.3)), g.constant(ds),
                                   g.constant(dh));
  const double a0 = 1.0 / (1.0 + std::exp(std::tanh(10.0)));
  EXPECT_NEAR(out.alpha.value()(0), a0, kTol);
  EXPECT_NEAR(out.alpha.value()(1), 1.0 - a0, kTol);
  EXPECT_NEAR(out.context.value()(0), a0 * 1.0 + (1.0 - a0) * 2.0, kTol);
}

TEST(AttendHop, WeightsAreSoftmaxOfTanhScores) {
  Hops h(1, 1);
  h.store.value(h.hops[0].v1).setConstant(1.0);
  h.store.value(h.hops[0].w2).setConstant(1.0);
  h.zero(h.hops[0].w1);
  ag::Graph g(false);
  Binder p(g, h.store);
  Matrix ds(3, 1);
  ds << 0.1, -0.4, 0.7;
  const Matrix a = attend_hop(p, h.hops[0], g.constant(Matrix::Zero(1, 1)), g.constant(ds), g.constant(ds))
                       .alpha.value();
  Matrix expected = ds.array().tanh().exp().matrix();
  expected /= expected.sum();
  EXPECT_LT((a - expected).cwiseAbs().maxCoeff(), kTol);
}

TEST(AttendHop, RejectsEmptyOrMismatchedBanks) {
  Hops h(2, 1);
  ag::Graph g(false);
  Binder p(g, h.store);
  Var q = g.constant(Matrix::Zero(2, 1));
  EXPECT_THROW(attend_hop(p, h.hops[0], q, g.constant(Matrix(0, 2)), g.constant(Matrix(0, 2))),
               std::invalid_argument);
  EXPECT_THROW(attend_hop(p, h.hops[0], q, g.constant(Matrix::Zero(3, 2)), g.constant(Matrix::Zero(2, 2))),
               std::invalid_argument);
}

TEST(UpdateState, OnlyAttendedRowsChange) {
  Hops h(3, 1);
  ag::Graph g(false);
  Binder p(g, h.store);
  const Matrix ds = random(3, 3, 7);
  Matrix alpha(3, 1);
  alpha << 0.0, 1.0, 0.0;
  const Matrix q = random(3, 1, 8);
  const Matrix c = random(3, 1, 9);
  const Matrix out =
      update_state(p, h.hops[0], g.constant(ds), g.constant(alpha), g.constant(c), g.constant(q)).value();
  EXPECT_EQ(out.row(0), ds.row(0));
  EXPECT_EQ(out.row(2), ds.row(2));

  const Matrix s = gru_cell(p, h.hops[0].update, g.constant(c), g.constant(q)).value();
  auto sig = [](const Matrix& m) { return (1.0 / (1.0 + (-m.array()).exp())).matrix(); };
  const Matrix f = sig(h.store.value(h.hops[0].w3) * s);
  const Matrix a = sig(h.store.value(h.hops[0].w4) * s);
  const Matrix row1 = (ds.row(1).array() * (1.0 - f.transpose().array()) + a.transpose().array()).matrix();
  EXPECT_LT((out.row(1) - row1).norm(), kTol);
}

TEST(UpdateState, SaturatedGatesLeaveStatesUnchanged) {
  Hops h(2, 1);
  // Forget gate -> 0 and add gate -> 0 through huge negative projections of a
  // positive intermediate state.
  h.zero(h.hops[0].update.w_n);
  h.zero(h.hops[0].update.u_n);
  h.store.value(h.hops[0].update.b_in).setConstant(50.0);
  h.store.value(h.hops[0].update.b_hn).setZero();
  h.store.value(h.hops[0].update.b_z).setConstant(-50.0);
  h.store.value(h.hops[0].w3).setConstant(-1e4);
  h.store.value(h.hops[0].w4).setConstant(-1e4);
  ag::Graph g(false);
  Binder p(g, h.store);
  const Matrix ds = random(4, 2, 10);
  Matrix alpha = Matrix::Constant(4, 1, 0.25);
  const Matrix out = update_state(p, h.hops[0], g.constant(ds), g.constant(alpha), g.constant(random(2, 1, 11)),
                                  g.constant(random(2, 1, 12)))
                         .value();
  EXPECT_LT((out - ds).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MultiHop, SingleRoundEqualsAttendThenUpdate) {
  Hops h(3, 1);
  ag::Graph g(false);
  Binder p(g, h.store);
  Var q = g.constant(random(3, 1, 1));
  Var ds = g.constant(random(5, 3, 2));
  Var dh = g.constant(random(5, 3, 3));
  const MultiHopOutput m = multi_hop(p, h.hops, q, ds, dh);
  const HopOutput a = attend_hop(p, h.hops[0], q, ds, dh);
  const Var u = update_state(p, h.hops[0], ds, a.alpha, a.context, q);
  EXPECT_EQ(m.context.value(), a.context.value());
  EXPECT_EQ(m.ds.value(), u.value());
  ASSERT_EQ(m.trace.size(), 1u);
  EXPECT_NEAR(m.trace[0].context_norm, a.context.value().norm(), kTol);
}

TEST(MultiHop, ZeroSecondRoundScoringGivesUniformSecondWeights) {
  Hops h(3, 2);
  h.zero(h.hops[1].v1);
  ag::Graph g(false);
  Binder p(g, h.store);
  const Matrix dh = random(4, 3, 6);
  const MultiHopOutput m =
      multi_hop(p, h.hops, g.constant(random(3, 1, 4)), g.constant(random(4, 3, 5)), g.constant(dh));
  ASSERT_EQ(m.trace.size(), 2u);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(m.trace[1].alpha(j), 0.25, kTol);
  EXPECT_GT((m.trace[0].alpha.array() - 0.25).abs().maxCoeff(), 1e-6);
}

TEST(MultiHop, HiddenStatesAreReadOnlyAndWeightsSumToOne) {
  Hops h(3, 3);
  ag::Graph g(false);
  Binder p(g, h.store);
  const Matrix dh = random(6, 3, 7);
  Var dh_var = g.constant(dh);
  const MultiHopOutput m = multi_hop(p, h.hops, g.constant(random(3, 1, 8)), g.constant(dh), dh_var);
  EXPECT_EQ(dh_var.value(), dh);
  EXPECT_NE(m.ds.value(), dh);
  for (const HopTrace& t : m.trace) {
    EXPECT_NEAR(t.alpha.sum(), 1.0, 1e-12);
    EXPECT_GE(t.alpha.minCoeff(), 0.0);
  }
}

TEST(InteractiveContext, UsesMeanKnowledgeStateAsQuery) {
  Hops h(3, 2);
  ag::Graph g(false);
  Binder p(g, h.store);
  const Matrix kb = random(5, 3, 9);
  Var ds = g.constant(random(4, 3, 10));
  Var dh = g.constant(random(4, 3, 11));
  const Matrix got = interactive_context(p, h.hops, ds, dh, g.constant(kb)).value();
  const Matrix expected =
      multi_hop(p, h.hops, g.constant(Matrix(kb.colwise().mean().transpose())), ds, dh).context.value();
  EXPECT_LT((got - expected).norm(), kTol);
}

TEST(TripleAttention, SingleTripleTakesAllWeight) {
  ag::Graph g(false);
  Matrix e(1, 3);
  e << 0.5, -1.0, 2.0;
  Matrix q(3, 1);
  q << 0.1, 0.2, 0.3;
  const TripleAttentionOutput out = triple_attention(g, g.constant(q), g.constant(e), 1);
  EXPECT_FALSE(out.empty);
  EXPECT_NEAR(out.alpha.value()(0), 1.0, kTol);
  EXPECT_LT((out.query.value() - (q + e.transpose())).norm(), kTol);
}

TEST(TripleAttention, ZeroQueryGivesUniformFirstRound) {
  ag::Graph g(false);
  const Matrix e = random(4, 3, 12);
  const TripleAttentionOutput out = triple_attention(g, g.constant(Matrix::Zero(3, 1)), g.constant(e), 2);
  ASSERT_EQ(out.trace.size(), 2u);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(out.trace[0].alpha(j), 0.25, kTol);
  // Second round scores against the updated query q + mean(E).
  const Matrix q2 = e.colwise().mean().transpose();
  Matrix s = (e * q2).array().exp().matrix();
  s /= s.sum();
  EXPECT_LT((out.alpha.value() - s).norm(), kTol);
}

TEST(TripleAttention, EmptyStoreYieldsZeroContext) {
  ag::Graph g(false);
  const TripleAttentionOutput out = triple_attention(g, g.constant(Matrix::Ones(3, 1)), Var(), 2);
  EXPECT_TRUE(out.empty);
  EXPECT_EQ(out.context.value(), Matrix::Zero(3, 1));
  EXPECT_TRUE(out.trace.empty());
}

TEST(TripleAttention, TopKRestrictsLaterRounds) {
  ag::Graph g(false);
  const Matrix e = random(6, 3, 13);
  const TripleAttentionOutput out = triple_attention(g, g.constant(random(3, 1, 14)), g.constant(e), 3, 2);
  ASSERT_EQ(out.trace.size(), 3u);
  EXPECT_EQ((out.trace[1].alpha.array() > 0).count(), 2);
  EXPECT_NEAR(out.trace[2].alpha.sum(), 1.0, 1e-12);
}

TEST(TraceJson, ReportsTopTriplesInWeightOrder) {
  std::vector<TripleHopTrace> trace = {{Eigen::Vector3d(0.2, 0.5, 0.3), 1.0, 2.0}};
  const std::vector<Triple> triples = {{"a", "r", "b"}, {"c", "r", "d"}, {"e", "r", "f"}};
  const auto j = triple_trace_json(trace, triples, 2);
  ASSERT_EQ(j[0]["top_triples"].size(), 2u);
  EXPECT_EQ(j[0]["top_triples"][0][0], "c");
  EXPECT_EQ(j[0]["top_triples"][1][0], "e");
}

TEST(Oracles, ScalarScenariosAgreeWithLonghandArithmetic) {
  for (const auto& c : testing::scalar_scenarios()) {
    EXPECT_NEAR(c.actual, c.expected, testing::kScalarTolerance) << c.name;
  }
}

TEST(Oracles, GradientsMatchFiniteDifferences) {
  for (const auto& c : testing::gradient_suite(7)) {
    EXPECT_GT(c.result.checked, 0u) << c.name;
    EXPECT_LT(c.result.max_rel_error, testing::kGradTolerance) << c.name << " worst " << c.result.worst;
  }
}

}  // namespace
}  // namespace cntf
