#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "scgen/condops.hpp"
#include "test_util.hpp"

using namespace scgen;
using testutil::randn;

namespace {

Tensor<double> gate(const Tensor<double>& raw, GateMode mode, double tau) {
  Graph<double> g;
  return semantic_gate(g.constant(raw), mode, tau).values.value();
}

// Softmax over channels of random logits.
template <class T>
Tensor<T> random_vectors(Shape s, std::uint64_t seed, double scale = 2.0) {
  Graph<T> g;
  return semantic_gate(g.constant(randn<T>(s, seed, scale)), GateMode::softmax, 1.0).values.value();
}

template <class T>
Tensor<T> scc(const Tensor<T>& f, const Tensor<T>& v, const std::vector<Tensor<T>>& ks, const std::vector<Tensor<T>>& bs) {
  Graph<T> g;
  ConvCandidates<T> bank;
  for (const auto& k : ks) bank.kernels.push_back(g.constant(k));
  for (const auto& b : bs) bank.biases.push_back(g.constant(b));
  const SemanticVectorMap<T> map{g.constant(v), GateMode::softmax, 1.0};
  return scc_forward(g.constant(f), map, bank).value();
}

// Independent top singular value: 500 power iterations on W^T W in double.
double top_singular(const Eigen::MatrixXd& w) {
  Eigen::VectorXd x = Eigen::VectorXd::Ones(w.cols());
  for (int i = 0; i < 500; ++i) x = (w.transpose() * (w * x)).normalized();
  return (w * x).norm();
}

Tensor<double> scn_plain(const Tensor<double>& f, const Tensor<double>& v, const Tensor<double>& means,
                         const Tensor<double>& scales) {
  Graph<double> g;
  Tensor<double> rm(Shape{1, f.shape().c, 1, 1}), rv(Shape{1, f.shape().c, 1, 1}, 1.0), tr(Shape{1, 1, 1, 1});
  const SemanticVectorMap<double> map{g.constant(v), GateMode::softmax, 1.0};
  return scn_forward(g.constant(f), map, g.constant(means), g.constant(scales), ForwardMode::frozen(),
                     RunningStats<double>{&rm, &rv, &tr})
      .value();
}

}  // namespace

TEST(SemanticGate, UniformForZeroInput) {
  const auto y = gate(Tensor<double>(Shape{1, 3, 1, 1}), GateMode::softmax, 0.05);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], 1.0 / 3.0, 1e-15);
}

TEST(SemanticGate, TemperatureExample) {
  const auto y = gate(Tensor<double>(Shape{1, 3, 1, 1}, {10.0, 0.0, 0.0}), GateMode::softmax, 0.05);
  // e^0.5 / (e^0.5 + 2)
  const double a = std::exp(0.5) / (std::exp(0.5) + 2.0);
  EXPECT_NEAR(y[0], a, 1e-12);
  EXPECT_NEAR(y[0], 0.4519, 1e-4);
  EXPECT_NEAR(y[1], 0.2741, 1e-4);
  EXPECT_NEAR(y[2], 0.2741, 1e-4);
}

TEST(SemanticGate, RowsSumToOneAndShiftInvariant) {
  const auto raw = randn<double>(Shape{2, 5, 4, 3}, 31, 30.0);
  auto shifted = raw;
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t x = 0; x < 3; ++x)
        for (std::int64_t c = 0; c < 5; ++c) shifted.at(b, c, y, x) += 17.0 * (1 + b + y * x);
  const auto a = gate(raw, GateMode::softmax, 0.05);
  const auto s = gate(shifted, GateMode::softmax, 0.05);
  EXPECT_LT(testutil::max_abs_diff(a, s), 1e-12);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t x = 0; x < 3; ++x) {
        double sum = 0;
        std::int64_t arg_raw = 0, arg_gate = 0;
        for (std::int64_t c = 0; c < 5; ++c) {
          sum += a.at(b, c, y, x);
          if (raw.at(b, c, y, x) > raw.at(b, arg_raw, y, x)) arg_raw = c;
          if (a.at(b, c, y, x) > a.at(b, arg_gate, y, x)) arg_gate = c;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_EQ(arg_raw, arg_gate);
      }
}

TEST(SemanticGate, OtherModesAreElementwise) {
  const Tensor<double> raw(Shape{1, 2, 1, 1}, {-2.0, 0.5});
  EXPECT_NEAR(gate(raw, GateMode::sigmoid, 1.0)[0], 1.0 / (1.0 + std::exp(2.0)), 1e-15);
  EXPECT_NEAR(gate(raw, GateMode::tanh, 1.0)[1], std::tanh(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(gate(raw, GateMode::relu, 1.0)[0], 0.0);
  EXPECT_EQ(gate(raw, GateMode::none, 1.0), raw);
}

TEST(SemanticGate, ModeNamesRoundTrip) {
  for (auto m : {GateMode::softmax, GateMode::sigmoid, GateMode::tanh, GateMode::relu, GateMode::none}) {
    EXPECT_EQ(parse_gate_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_gate_mode("gelu"), ConfigError);
}

TEST(Scc, HandArithmetic) {
  const Tensor<double> f(Shape{1, 1, 1, 1}, 4.0);
  const Tensor<double> v(Shape{1, 2, 1, 1}, {0.5, 0.5});
  const std::vector<Tensor<double>> ks{Tensor<double>(Shape{1, 1, 1, 1}, 2.0), Tensor<double>(Shape{1, 1, 1, 1}, 3.0)};
  const std::vector<Tensor<double>> bs(2, Tensor<double>(Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(scc(f, v, ks, bs)[0], 10.0);
}

TEST(Scc, SingleCandidateEqualsConv) {
  const auto f = randn<float>(Shape{2, 3, 6, 5}, 40);
  const std::vector<Tensor<float>> ks{randn<float>(Shape{4, 3, 3, 3}, 41)};
  const std::vector<Tensor<float>> bs{randn<float>(Shape{1, 4, 1, 1}, 42)};
  const Tensor<float> v(Shape{2, 1, 6, 5}, 1.0f);
  const auto expect = testutil::naive_conv(f, ks[0], &bs[0], 1, 1);
  EXPECT_LE(testutil::max_abs_diff(scc(f, v, ks, bs), expect), 1e-5);
}

TEST(Scc, MatchesReferenceRandom) {
  const auto f = randn<float>(Shape{2, 4, 5, 5}, 50);
  const auto v = random_vectors<float>(Shape{2, 3, 5, 5}, 51);
  std::vector<Tensor<float>> ks, bs;
  for (int i = 0; i < 3; ++i) {
    ks.push_back(randn<float>(Shape{3, 4, 3, 3}, 52 + i));
    bs.push_back(randn<float>(Shape{1, 3, 1, 1}, 60 + i));
  }
  EXPECT_LE(testutil::max_rel_diff(scc(f, v, ks, bs), scc_reference(f, v, ks, bs)), 1e-5);
}

TEST(Scc, OneHotSelectsCandidate) {
  const auto f = randn<double>(Shape{1, 2, 4, 4}, 70);
  std::vector<Tensor<double>> ks{randn<double>(Shape{2, 2, 3, 3}, 71), randn<double>(Shape{2, 2, 3, 3}, 72)};
  std::vector<Tensor<double>> bs{randn<double>(Shape{1, 2, 1, 1}, 73), randn<double>(Shape{1, 2, 1, 1}, 74)};
  Tensor<double> v(Shape{1, 2, 4, 4});
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 0; x < 4; ++x) v.at(0, (y + x) % 2, y, x) = 1.0;
  const auto out = scc(f, v, ks, bs);
  const auto c0 = testutil::naive_conv(f, ks[0], &bs[0], 1, 1);
  const auto c1 = testutil::naive_conv(f, ks[1], &bs[1], 1, 1);
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 0; x < 4; ++x)
      for (std::int64_t c = 0; c < 2; ++c) {
        const auto& ref = (y + x) % 2 == 0 ? c0 : c1;
        EXPECT_NEAR(out.at(0, c, y, x), ref.at(0, c, y, x), 1e-12);
      }
}

TEST(Scc, ConstantBlendEqualsBlendedKernel) {
  const double alpha = 0.3;
  const auto f = randn<double>(Shape{1, 2, 5, 4}, 80);
  std::vector<Tensor<double>> ks{randn<double>(Shape{3, 2, 3, 3}, 81), randn<double>(Shape{3, 2, 3, 3}, 82)};
  std::vector<Tensor<double>> bs(2, Tensor<double>(Shape{1, 3, 1, 1}));
  Tensor<double> v(Shape{1, 2, 5, 4});
  for (std::int64_t i = 0; i < 20; ++i) {
    v[i] = alpha;
    v[20 + i] = 1.0 - alpha;
  }
  Tensor<double> blended(ks[0].shape());
  for (std::int64_t i = 0; i < blended.numel(); ++i) blended[i] = alpha * ks[0][i] + (1 - alpha) * ks[1][i];
  EXPECT_LT(testutil::max_abs_diff(scc(f, v, ks, bs), testutil::naive_conv<double>(f, blended, nullptr, 1, 1)), 1e-12);
}

TEST(Scn, ZeroCandidatesIsBatchNorm) {
  const auto f = randn<double>(Shape{3, 2, 4, 4}, 90);
  const auto v = random_vectors<double>(Shape{3, 3, 4, 4}, 91);
  const Tensor<double> zeros(Shape{3, 2, 1, 1});
  const auto y = scn_plain(f, v, zeros, zeros);
  // Plain per-channel normalization with population variance.
  for (std::int64_t c = 0; c < 2; ++c) {
    double m = 0, s2 = 0;
    const double count = 3 * 16;
    for (std::int64_t b = 0; b < 3; ++b)
      for (std::int64_t i = 0; i < 16; ++i) m += f.at(b, c, i / 4, i % 4);
    m /= count;
    for (std::int64_t b = 0; b < 3; ++b)
      for (std::int64_t i = 0; i < 16; ++i) s2 += std::pow(f.at(b, c, i / 4, i % 4) - m, 2);
    const double sd = std::sqrt(s2 / count + 1e-5);
    for (std::int64_t b = 0; b < 3; ++b)
      for (std::int64_t i = 0; i < 16; ++i) EXPECT_NEAR(y.at(b, c, i / 4, i % 4), (f.at(b, c, i / 4, i % 4) - m) / sd, 1e-6);
  }
}

TEST(Scn, AffineHandArithmetic) {
  // Two positions {-1, 1} normalize to about {-1, 1}; choose the candidates so
  // the mixed affine at position 1 is s_hat = 0.5, m_hat = 0.25.
  const Tensor<double> f(Shape{1, 1, 1, 2}, {-1.0, 1.0});
  const Tensor<double> v(Shape{1, 2, 1, 2}, {0.5, 0.5, 0.5, 0.5});
  const Tensor<double> means(Shape{2, 1, 1, 1}, {0.5, 0.0});
  const Tensor<double> scales(Shape{2, 1, 1, 1}, {1.0, 0.0});
  const auto y = scn_plain(f, v, means, scales);
  const double xhat = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[1], xhat * 1.5 + 0.25, 1e-12);
  EXPECT_NEAR(y[1], 1.75, 1e-5);
}

TEST(Scn, OneHotSelectsCandidateAffine) {
  const auto f = randn<double>(Shape{2, 3, 2, 2}, 100);
  Tensor<double> v(Shape{2, 2, 2, 2});
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t i = 0; i < 4; ++i) v.at(b, 1, i / 2, i % 2) = 1.0;
  const auto means = randn<double>(Shape{2, 3, 1, 1}, 101);
  const auto scales = randn<double>(Shape{2, 3, 1, 1}, 102);
  const Tensor<double> zeros(Shape{2, 3, 1, 1});
  const auto y = scn_plain(f, v, means, scales);
  const auto base = scn_plain(f, v, zeros, zeros);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < 4; ++i) {
        const double expect = base.at(b, c, i / 2, i % 2) * (1.0 + scales.at(1, c, 0, 0)) + means.at(1, c, 0, 0);
        EXPECT_NEAR(y.at(b, c, i / 2, i % 2), expect, 1e-12);
      }
}

TEST(Scn, RunningModeBeforeTrackingIsStateError) {
  Graph<double> g;
  Tensor<double> rm(Shape{1, 1, 1, 1}), rv(Shape{1, 1, 1, 1}, 1.0), tr(Shape{1, 1, 1, 1});
  const SemanticVectorMap<double> map{g.constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0)), GateMode::softmax, 1.0};
  const Tensor<double> t(Shape{1, 1, 1, 1});
  EXPECT_THROW(scn_forward(g.constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0)), map, g.constant(t), g.constant(t),
                           ForwardMode::inference(), RunningStats<double>{&rm, &rv, &tr}),
               StateError);
}

TEST(SpectralNorm, IdentityUnchanged) {
  Tensor<double> w(Shape{3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w.at(i, i, 0, 0) = 1.0;
  Tensor<double> u = randn<double>(Shape{1, 3, 1, 1}, 1), v = randn<double>(Shape{1, 3, 1, 1}, 2);
  Graph<double> g;
  const auto out = spectral_normalize(g.constant(w), u, v, 10).value();
  EXPECT_LT(testutil::max_abs_diff(out, w), 1e-9);
}

TEST(SpectralNorm, DiagonalConverges) {
  const Tensor<double> w(Shape{2, 2, 1, 1}, {3.0, 0.0, 0.0, 1.0});
  Tensor<double> u(Shape{1, 2, 1, 1}, {0.6, 0.8}), v(Shape{1, 2, 1, 1}, {0.8, 0.6});
  Graph<double> g;
  const auto out = spectral_normalize(g.constant(w), u, v, 50).value();
  EXPECT_NEAR(out[0], 1.0, 0.01);
  EXPECT_NEAR(out[3], 1.0 / 3.0, 0.01 / 3.0);
}

TEST(SpectralNorm, ScaleInvariant) {
  const auto w = randn<double>(Shape{4, 6, 1, 1}, 5);
  auto w3 = w;
  for (std::int64_t i = 0; i < w3.numel(); ++i) w3[i] *= 3.7;
  Tensor<double> u1 = randn<double>(Shape{1, 4, 1, 1}, 6), v1 = randn<double>(Shape{1, 6, 1, 1}, 7);
  Tensor<double> u2 = u1, v2 = v1;
  Graph<double> g;
  const auto a = spectral_normalize(g.constant(w), u1, v1, 30).value();
  const auto b = spectral_normalize(g.constant(w3), u2, v2, 30).value();
  EXPECT_LT(testutil::max_abs_diff(a, b), 1e-12);
}

TEST(SpectralNorm, RandomMatricesHaveUnitTopSingularValue) {
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = randn<double>(Shape{64, 64, 1, 1}, 200 + trial);
    Tensor<double> u = randn<double>(Shape{1, 64, 1, 1}, 300 + trial), v = randn<double>(Shape{1, 64, 1, 1}, 400 + trial);
    Graph<double> g;
    const auto out = spectral_normalize(g.constant(w), u, v, 200).value();
    Eigen::MatrixXd m(64, 64);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) m(r, c) = out[r * 64 + c];
    EXPECT_NEAR(top_singular(m), 1.0, 0.01);
  }
}
