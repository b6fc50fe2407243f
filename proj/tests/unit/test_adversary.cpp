#include <gtest/gtest.h>

#include "scgen/adversary.hpp"
#include "scgen/gradcheck.hpp"
#include "test_util.hpp"

using namespace scgen;
using testutil::randn;

namespace {

std::vector<Var<double>> filled(Graph<double>& g, std::initializer_list<std::pair<Shape, double>> maps) {
  std::vector<Var<double>> out;
  for (const auto& [s, v] : maps) out.push_back(g.constant(Tensor<double>(s, v)));
  return out;
}

Tensor<double> bars_layout(std::int64_t b, std::int64_t classes, std::int64_t res) {
  Tensor<double> t(Shape{b, classes, res, res});
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t y = 0; y < res; ++y)
      for (std::int64_t x = 0; x < res; ++x) t.at(n, (x / 3 + n) % classes, y, x) = 1.0;
  return t;
}

double scalar(const Var<double>& v) { return v.value()[0]; }

}  // namespace

TEST(Hinge, DiscriminatorExamples) {
  Graph<double> g;
  const Shape a{2, 1, 4, 4}, b{2, 1, 2, 2};
  EXPECT_DOUBLE_EQ(scalar(hinge_d(filled(g, {{a, 2.0}, {b, 2.0}}), filled(g, {{a, -2.0}, {b, -2.0}}))), 0.0);
  EXPECT_DOUBLE_EQ(scalar(hinge_d(filled(g, {{a, 0.0}, {b, 0.0}}), filled(g, {{a, 0.0}, {b, 0.0}}))), 2.0);
}

TEST(Hinge, DiscriminatorZeroOnlyWhenMarginsMet) {
  Graph<double> g;
  const Shape s{1, 1, 3, 3};
  EXPECT_DOUBLE_EQ(scalar(hinge_d(filled(g, {{s, 1.0}}), filled(g, {{s, -1.0}}))), 0.0);
  EXPECT_GT(scalar(hinge_d(filled(g, {{s, 0.99}}), filled(g, {{s, -1.0}}))), 0.0);
  EXPECT_GT(scalar(hinge_d(filled(g, {{s, 1.0}}), filled(g, {{s, -0.99}}))), 0.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = g.constant(randn<double>(s, seed, 3.0));
    const auto f = g.constant(randn<double>(s, seed + 100, 3.0));
    EXPECT_GE(scalar(hinge_d<double>({r}, {f})), 0.0);
  }
}

TEST(Hinge, GeneratorExamples) {
  Graph<double> g;
  const Shape s{2, 1, 3, 3};
  EXPECT_DOUBLE_EQ(scalar(hinge_g(filled(g, {{s, 0.5}}))), -0.5);
  EXPECT_DOUBLE_EQ(scalar(hinge_g(filled(g, {{s, 0.0}}))), 0.0);
  EXPECT_GT(scalar(hinge_g(filled(g, {{s, 0.1}}))), scalar(hinge_g(filled(g, {{s, 0.2}}))));
}

TEST(Perceptual, IdenticalAndSymmetric) {
  FeatureExtractor<double> phi;
  Graph<double> g;
  const auto a = g.constant(randn<double>(Shape{2, 3, 16, 16}, 1, 0.5));
  const auto b = g.constant(randn<double>(Shape{2, 3, 16, 16}, 2, 0.5));
  EXPECT_DOUBLE_EQ(scalar(perceptual_loss(a, a, phi)), 0.0);
  EXPECT_NEAR(scalar(perceptual_loss(a, b, phi)), scalar(perceptual_loss(b, a, phi)), 1e-12);
  EXPECT_GT(scalar(perceptual_loss(a, b, phi)), 0.0);
}

TEST(Perceptual, LinearExtractorScalesWithDifference) {
  FeatureExtractorConfig cfg;
  cfg.relu = false;
  FeatureExtractor<double> phi(cfg);
  const auto base = randn<double>(Shape{1, 3, 16, 16}, 3, 0.3);
  const auto d = randn<double>(Shape{1, 3, 16, 16}, 4, 0.1);
  auto shifted = [&](double t) {
    Tensor<double> x = base;
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] += t * d[i];
    return x;
  };
  Graph<double> g;
  const double l1 = scalar(perceptual_loss(g.constant(shifted(1.0)), g.constant(base), phi));
  const double l3 = scalar(perceptual_loss(g.constant(shifted(3.0)), g.constant(base), phi));
  EXPECT_NEAR(l3, 3.0 * l1, 1e-9 * l3);
}

TEST(Perceptual, ExtractorIsSeedStable) {
  FeatureExtractor<float> a, b;
  FeatureExtractorConfig other;
  other.seed = 7;
  FeatureExtractor<float> c(other);
  ASSERT_EQ(a.stages(), 5u);
  for (std::size_t i = 0; i < a.stages(); ++i) EXPECT_EQ(a.weight(i), b.weight(i));
  EXPECT_NE(a.weight(0), c.weight(0));
}

TEST(FeatureMatching, Examples) {
  Graph<double> g;
  const Shape s{1, 2, 2, 2};
  EXPECT_DOUBLE_EQ(scalar(feature_matching_loss<double>({filled(g, {{s, 1.0}})}, {filled(g, {{s, 3.0}})})), 2.0);
  const auto same = g.constant(randn<double>(s, 9));
  EXPECT_DOUBLE_EQ(scalar(feature_matching_loss<double>({{same}}, {{same}})), 0.0);
  // one mean over every (scale, layer) pair: (2 + 0 + 0) / 3
  EXPECT_DOUBLE_EQ(scalar(feature_matching_loss<double>({filled(g, {{s, 1.0}, {s, 0.0}}), filled(g, {{s, 5.0}})},
                                                        {filled(g, {{s, 3.0}, {s, 0.0}}), filled(g, {{s, 5.0}})})),
                   2.0 / 3.0);
}

TEST(FeatureMatching, RealBranchIsDetached) {
  DiscriminatorConfig cfg;
  cfg.channels = {4, 8};
  Discriminator<double> d(cfg, 3, 5);
  Graph<double> g;
  const auto layout = g.constant(bars_layout(2, 3, 16));
  const auto real = d.forward(g, g.constant(randn<double>(Shape{2, 3, 16, 16}, 1, 0.5)), layout, ForwardMode::frozen());
  std::vector<std::vector<Var<double>>> fake;
  for (const auto& scale : real.features) {
    std::vector<Var<double>> row;
    for (const auto& f : scale) row.push_back(g.constant(randn<double>(f.shape(), 77)));
    fake.push_back(row);
  }
  d.params().zero_grad();
  g.backward(feature_matching_loss(fake, real.features));
  for (const auto* p : d.params().all()) {
    for (std::int64_t i = 0; i < p->grad.numel(); ++i) ASSERT_EQ(p->grad[i], 0.0) << p->name;
  }
}

TEST(Regression, NormExamples) {
  Graph<double> g;
  const auto zero = g.constant(Tensor<double>(Shape{1, 3, 4, 4}, 0.0));
  const auto half = g.constant(Tensor<double>(Shape{1, 3, 4, 4}, 0.5));
  EXPECT_DOUBLE_EQ(scalar(svg_regression_loss(zero, zero, 1)), 0.0);
  EXPECT_DOUBLE_EQ(scalar(svg_regression_loss(zero, half, 1)), 0.5);
  EXPECT_DOUBLE_EQ(scalar(svg_regression_loss(zero, half, 2)), 0.25);
  EXPECT_THROW(svg_regression_loss(zero, g.constant(Tensor<double>(Shape{1, 3, 4, 2})), 1), ShapeError);
}

TEST(Regression, FeatureSpaceVariant) {
  FeatureExtractor<double> phi;
  Graph<double> g;
  const auto a = g.constant(randn<double>(Shape{1, 3, 16, 16}, 5, 0.4));
  const auto b = g.constant(randn<double>(Shape{1, 3, 16, 16}, 6, 0.4));
  EXPECT_DOUBLE_EQ(scalar(svg_regression_loss_features(a, a, phi)), 0.0);
  EXPECT_NEAR(scalar(svg_regression_loss_features(a, b, phi)), scalar(perceptual_loss(a, b, phi)), 1e-12);
}

TEST(TotalLoss, WeightedSum) {
  LossWeights w;
  EXPECT_DOUBLE_EQ(w.perceptual, 10.0);
  EXPECT_DOUBLE_EQ(w.gan, 1.0);
  EXPECT_DOUBLE_EQ(w.feature_matching, 10.0);
  EXPECT_DOUBLE_EQ(w.regression, 2.0);
  EXPECT_EQ(w.norm_p, 1);
  Graph<double> g;
  auto one = [&] { return g.constant(Tensor<double>::vector({1.0})); };
  GeneratorLossTerms<double> terms{one(), one(), one(), one()};
  EXPECT_DOUBLE_EQ(scalar(total_generator_loss(terms, w)), 23.0);
  EXPECT_DOUBLE_EQ(scalar(total_generator_loss(terms, LossWeights{0, 0, 0, 0})), 0.0);
}

TEST(TotalLoss, NonFiniteTermIsNamed) {
  Graph<double> g;
  auto v = [&](double x) { return g.constant(Tensor<double>::vector({x})); };
  GeneratorLossTerms<double> terms{v(1.0), v(1.0), v(std::nan("")), v(1.0)};
  try {
    total_generator_loss(terms, LossWeights{});
    FAIL() << "NaN accepted";
  } catch (const ValidityError& e) {
    EXPECT_NE(std::string(e.what()).find("feature_matching"), std::string::npos) << e.what();
  }
}

TEST(Discriminator, ScoreShapesPerScale) {
  Discriminator<float> d(DiscriminatorConfig{}, 4, 3);
  Graph<float> g;
  const auto out = d.forward(g, g.constant(randn<float>(Shape{2, 3, 32, 32}, 1, 0.5)),
                             g.constant(Tensor<float>(bars_layout(2, 4, 32).shape(), 0.0f)), ForwardMode::frozen());
  ASSERT_EQ(out.scores.size(), 2u);
  EXPECT_EQ(out.scores[0].shape(), (Shape{2, 1, 4, 4}));  // 32 / 2^3
  EXPECT_EQ(out.scores[1].shape(), (Shape{2, 1, 2, 2}));
  ASSERT_EQ(out.features[0].size(), 3u);
  EXPECT_EQ(out.features[0][2].shape(), (Shape{2, 64, 4, 4}));
}

TEST(Discriminator, BatchPermutationAndMismatch) {
  DiscriminatorConfig cfg;
  cfg.channels = {4, 8};
  Discriminator<double> d(cfg, 3, 2);
  const auto img = randn<double>(Shape{2, 3, 16, 16}, 4, 0.5);
  const auto lay = bars_layout(2, 3, 16);
  auto swap = [](const Tensor<double>& t) {
    Tensor<double> s(t.shape());
    const std::int64_t per = t.numel() / 2;
    for (std::int64_t i = 0; i < per; ++i) {
      s[i] = t[per + i];
      s[per + i] = t[i];
    }
    return s;
  };
  Graph<double> g;
  const auto a = d.forward(g, g.constant(img), g.constant(lay), ForwardMode::frozen());
  const auto b = d.forward(g, g.constant(swap(img)), g.constant(swap(lay)), ForwardMode::frozen());
  for (std::size_t s = 0; s < a.scores.size(); ++s) EXPECT_EQ(swap(a.scores[s].value()), b.scores[s].value());
  EXPECT_THROW(d.forward(g, g.constant(img), g.constant(bars_layout(2, 3, 8)), ForwardMode::frozen()), ShapeError);
}

TEST(Discriminator, ZeroEmbeddingIgnoresLayout) {
  DiscriminatorConfig cfg;
  cfg.channels = {4, 8};
  Discriminator<double> d(cfg, 3, 2);
  const auto img = randn<double>(Shape{1, 3, 16, 16}, 4, 0.5);
  Tensor<double> other(Shape{1, 3, 16, 16});
  for (std::int64_t i = 0; i < 256; ++i) other[2 * 256 + i] = 1.0;
  Graph<double> g;
  auto score = [&](const Tensor<double>& lay) {
    return d.forward(g, g.constant(img), g.constant(lay), ForwardMode::frozen()).scores[0].value();
  };
  EXPECT_NE(score(bars_layout(1, 3, 16)), score(other));
  for (int s = 0; s < cfg.scales; ++s) d.embedding_weight(s).value.fill(0.0);
  EXPECT_EQ(score(bars_layout(1, 3, 16)), score(other));
}

TEST(LossGradients, FakeImage) {
  FeatureExtractorConfig small;
  small.channels = {4, 4, 4, 4, 4};
  FeatureExtractor<double> phi(small);
  const auto real = randn<double>(Shape{1, 3, 16, 16}, 31, 0.4);
  const auto fake = randn<double>(Shape{1, 3, 16, 16}, 32, 0.4);
  GradCheckOptions opts;
  opts.max_coords = 48;
  auto check = [&](auto&& f) { return finite_diff_check(f, fake, opts).max_rel_error; };
  EXPECT_LE(check([&](Graph<double>& g, const Var<double>& v) { return perceptual_loss(v, g.constant(real), phi); }),
            1e-4);
  EXPECT_LE(check([&](Graph<double>& g, const Var<double>& v) { return svg_regression_loss(v, g.constant(real), 2); }),
            1e-4);
}
