#include <gtest/gtest.h>

#include "scgen/condops.hpp"
#include "scgen/gradcheck.hpp"
#include "scgen/ops.hpp"
#include "test_util.hpp"

using namespace scgen;
using testutil::randn;

TEST(Autodiff, SquareGradient) {
  Graph<double> g;
  const auto x = g.variable(Tensor<double>::vector({3.0}));
  g.backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Autodiff, SharedNodeAccumulates) {
  Graph<double> g;
  const auto x = g.variable(Tensor<double>::vector({2.0, -1.0}));
  g.backward(sum(add(mul(x, x), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 5.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -1.0);
}

TEST(Autodiff, IndependentLeafGetsZero) {
  Graph<double> g;
  const auto x = g.variable(Tensor<double>::vector({1.0, 2.0}));
  const auto y = g.variable(Tensor<double>::vector({3.0, 4.0}));
  g.backward(sum(square(y)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Autodiff, DetachBlocksGradient) {
  Graph<double> g;
  const auto x = g.variable(Tensor<double>::vector({2.0}));
  g.backward(mul(detach(x), x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Autodiff, FrozenStoreReceivesNoGradient) {
  ParamStore<double> store("m.");
  auto& w = store.add("w", Tensor<double>::vector({1.5}));
  Graph<double> g;
  g.freeze(store);
  const auto x = g.variable(Tensor<double>::vector({2.0}));
  g.backward(mul(g.param(w), x));
  EXPECT_DOUBLE_EQ(w.grad[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.5);
}

TEST(Autodiff, ParamGradientsAccumulateAcrossGraphs) {
  ParamStore<double> store;
  auto& w = store.add("w", Tensor<double>::vector({3.0}));
  for (int i = 0; i < 2; ++i) {
    Graph<double> g;
    g.backward(square(g.param(w)));
  }
  EXPECT_DOUBLE_EQ(w.grad[0], 12.0);
  store.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad[0], 0.0);
}

TEST(GradCheck, LinearObjectiveIsExact) {
  const auto x = randn<double>(Shape{1, 3, 2, 2}, 8);
  const auto c = randn<double>(Shape{1, 3, 2, 2}, 9);
  const auto r = finite_diff_check([&](Graph<double>& g, const Var<double>& v) { return sum(mul(v, g.constant(c))); }, x);
  EXPECT_EQ(r.checked, 12);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, SigmoidSum) {
  const auto x = randn<double>(Shape{2, 3, 4, 4}, 10);
  const auto r = finite_diff_check(
      [](Graph<double>&, const Var<double>& v) { return sum(activation(v, Activation::sigmoid)); }, x);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(GradCheck, ConvInput) {
  const auto x = randn<double>(Shape{2, 2, 5, 5}, 12);
  const auto k = randn<double>(Shape{3, 2, 3, 3}, 13);
  const auto w = randn<double>(Shape{2, 3, 5, 5}, 14);
  const auto r = finite_diff_check(
      [&](Graph<double>& g, const Var<double>& v) {
        return sum(mul(conv2d(v, g.constant(k), std::optional<Var<double>>{}, 1, 1), g.constant(w)));
      },
      x);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A custom node whose backward is off by a factor of two.
  const auto x = randn<double>(Shape{1, 2, 1, 1}, 15);
  const auto r = finite_diff_check(
      [](Graph<double>& g, const Var<double>& v) {
        const Var<double> y = g.record(v.value(), {v}, [v](Graph<double>& gg, const Tensor<double>& go) {
          auto& buf = gg.grad_buffer(v.id);
          for (std::int64_t i = 0; i < go.numel(); ++i) buf[i] += 2.0 * go[i];
        });
        return sum(y);
      },
      x);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(GradCheck, ScnCandidates) {
  const std::int64_t n = 3;
  const auto f = randn<double>(Shape{2, 2, 3, 3}, 20);
  auto raw = randn<double>(Shape{2, n, 3, 3}, 21);
  const auto means0 = randn<double>(Shape{n, 2, 1, 1}, 22, 0.3);
  const auto scales = randn<double>(Shape{n, 2, 1, 1}, 23, 0.3);
  const auto w = randn<double>(Shape{2, 2, 3, 3}, 24);
  Tensor<double> rm(Shape{1, 2, 1, 1}), rv(Shape{1, 2, 1, 1}, 1.0), tr(Shape{1, 1, 1, 1});
  RunningStats<double> running{&rm, &rv, &tr};
  auto obj = [&](Graph<double>& g, const Var<double>& m) {
    const auto v = semantic_gate(g.constant(raw), GateMode::softmax, 1.0);
    return sum(mul(scn_forward(g.constant(f), v, m, g.constant(scales), ForwardMode::frozen(), running), g.constant(w)));
  };
  EXPECT_LE(finite_diff_check(obj, means0).max_rel_error, 1e-4);
}
