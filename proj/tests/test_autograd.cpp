#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace cntf {
namespace {

using testing::check_gradients;
using testing::kGradTolerance;

Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = d(rng);
  }
  return m;
}

struct OpCase {
  const char* name;
  std::vector<std::pair<int, int>> shapes;
  std::function<Var(const std::vector<Var>&)> op;
  bool positive = false;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  Rng rng(42);
  std::vector<Matrix> inputs;
  for (auto [r, k] : c.shapes) inputs.push_back(random_matrix(rng, r, k, c.positive ? 0.2 : -1.0, c.positive ? 2.0 : 1.0));
  const Matrix weights = random_matrix(rng, 16, 16);
  ParameterStore empty;
  auto result = check_gradients(empty, inputs, [&](Binder&, const std::vector<Var>& in) {
    Var out = c.op(in);
    return ag::sum(ag::cwise_mul(out, out.graph->constant(weights.topLeftCorner(out.rows(), out.cols()))));
  });
  EXPECT_GT(result.checked, 0u);
  EXPECT_LT(result.max_rel_error, kGradTolerance) << c.name << " worst " << result.worst;
}

const std::vector<int> kIds = {2, 0, 2, 1};
const std::vector<int> kScatter = {3, 1, 3};

INSTANTIATE_TEST_SUITE_P(
    Ops, OpGradient,
    ::testing::Values(
        OpCase{"matmul", {{3, 4}, {4, 2}}, [](auto& v) { return ag::matmul(v[0], v[1]); }},
        OpCase{"transpose", {{3, 2}}, [](auto& v) { return ag::transpose(v[0]); }},
        OpCase{"add", {{3, 2}, {3, 2}}, [](auto& v) { return ag::add(v[0], v[1]); }},
        OpCase{"sub", {{3, 2}, {3, 2}}, [](auto& v) { return ag::sub(v[0], v[1]); }},
        OpCase{"cwise_mul", {{3, 2}, {3, 2}}, [](auto& v) { return ag::cwise_mul(v[0], v[1]); }},
        OpCase{"add_row_broadcast", {{4, 3}, {3, 1}}, [](auto& v) { return ag::add_row_broadcast(v[0], v[1]); }},
        OpCase{"scale", {{3, 2}}, [](auto& v) { return ag::scale(v[0], -1.7); }},
        OpCase{"one_minus", {{3, 2}}, [](auto& v) { return ag::one_minus(v[0]); }},
        OpCase{"scalar_mul", {{1, 1}, {3, 2}}, [](auto& v) { return ag::scalar_mul(v[0], v[1]); }},
        OpCase{"tanh", {{3, 2}}, [](auto& v) { return ag::tanh(v[0]); }},
        OpCase{"sigmoid", {{3, 2}}, [](auto& v) { return ag::sigmoid(v[0]); }},
        OpCase{"gelu", {{3, 2}}, [](auto& v) { return ag::gelu(v[0]); }},
        OpCase{"log", {{3, 2}}, [](auto& v) { return ag::log(v[0]); }, true},
        OpCase{"softmax", {{5, 1}}, [](auto& v) { return ag::softmax(v[0]); }},
        OpCase{"softmax_rows", {{3, 4}}, [](auto& v) { return ag::softmax_rows(v[0]); }},
        OpCase{"layer_norm_rows", {{3, 4}, {4, 1}, {4, 1}},
               [](auto& v) { return ag::layer_norm_rows(v[0], v[1], v[2]); }},
        OpCase{"concat_rows", {{2, 1}, {3, 1}}, [](auto& v) { return ag::concat_rows(v); }},
        OpCase{"concat_cols", {{3, 1}, {3, 2}}, [](auto& v) { return ag::concat_cols(v); }},
        OpCase{"gather_rows", {{3, 2}}, [](auto& v) { return ag::gather_rows(v[0], kIds); }},
        OpCase{"mean_rows", {{4, 3}}, [](auto& v) { return ag::mean_rows(v[0]); }},
        OpCase{"sum", {{3, 2}}, [](auto& v) { return ag::sum(v[0]); }},
        OpCase{"pick", {{4, 1}}, [](auto& v) { return ag::pick(v[0], 2); }},
        OpCase{"scatter_add", {{3, 1}}, [](auto& v) { return ag::scatter_add(v[0], kScatter, 5); }}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Autograd, SoftmaxIsShiftInvariant) {
  ag::Graph g(false);
  Matrix e(3, 1);
  e << 0.3, -1.2, 2.0;
  const Matrix a = ag::softmax(g.constant(e)).value();
  const Matrix b = ag::softmax(g.constant((e.array() + 100.0).matrix())).value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(a.sum(), 1.0, 1e-15);
}

TEST(Autograd, SoftmaxOfLogTwoOneOneIsHalfQuarterQuarter) {
  ag::Graph g(false);
  Matrix e(3, 1);
  e << std::log(2.0), std::log(1.0), std::log(1.0);
  const Matrix p = ag::softmax(g.constant(e)).value();
  EXPECT_NEAR(p(0), 0.5, 1e-15);
  EXPECT_NEAR(p(1), 0.25, 1e-15);
  EXPECT_NEAR(p(2), 0.25, 1e-15);
}

TEST(Autograd, SparseEmbeddingAccumulatesRepeatedRows) {
  ParameterStore store;
  Rng rng(1);
  const int table = store.add_uniform("table", 4, 3, 0.5, rng, true);
  ag::Graph g(true);
  Binder p(g, store);
  const int ids[] = {1, 3, 1};
  g.backward(ag::sum(ag::gather_rows(p[table], ids)));
  Gradients grads(store);
  p.collect(grads);
  Matrix expected = Matrix::Zero(4, 3);
  expected.row(1).setConstant(2.0);
  expected.row(3).setConstant(1.0);
  EXPECT_EQ(grads.tensors[0], expected);
}

TEST(Autograd, NonRecordingGraphStillEvaluates) {
  ag::Graph g(false);
  Var x = g.leaf(Matrix::Ones(2, 2));
  Var y = ag::sum(ag::tanh(x));
  EXPECT_FALSE(g.recording());
  EXPECT_NEAR(y.scalar(), 4.0 * std::tanh(1.0), 1e-15);
}

TEST(Autograd, ShapeMismatchThrows) {
  ag::Graph g(false);
  EXPECT_THROW(ag::matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(2, 3))), std::invalid_argument);
  EXPECT_THROW(ag::add(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(3, 2))), std::invalid_argument);
}

TEST(Autograd, GradientsHelpersScaleAndNorm) {
  ParameterStore store;
  store.add("a", Matrix::Constant(1, 2, 0.0));
  store.add("b", Matrix::Constant(2, 1, 0.0));
  Gradients g(store);
  g.tensors[0] << 3.0, 0.0;
  g.tensors[1] << 0.0, 4.0;
  EXPECT_DOUBLE_EQ(g.norm(), 5.0);
  g.scale(0.5);
  EXPECT_DOUBLE_EQ(g.norm(), 2.5);
  EXPECT_TRUE(g.finite());
  g.tensors[1](0) = NAN;
  EXPECT_FALSE(g.finite());
}

}  // namespace
}  // namespace cntf
