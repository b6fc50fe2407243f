#include <gtest/gtest.h>

#include <filesystem>

#include "scgen/ops.hpp"
#include "scgen/tensor_io.hpp"
#include "test_util.hpp"

using namespace scgen;
using testutil::randn;

namespace {

Tensor<double> run_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>* b, int stride, int pad) {
  Graph<double> g;
  std::optional<Var<double>> bias;
  if (b) bias = g.constant(*b);
  return conv2d(g.constant(x), g.constant(k), bias, stride, pad).value();
}

}  // namespace

TEST(Conv2d, ScalarProduct) {
  const Tensor<double> x(Shape{1, 1, 1, 1}, 3.0);
  const Tensor<double> k(Shape{1, 1, 1, 1}, 2.0);
  const Tensor<double> b(Shape{1, 1, 1, 1}, 0.0);
  EXPECT_DOUBLE_EQ(run_conv(x, k, &b, 1, 0)[0], 6.0);
}

TEST(Conv2d, OnesWithPaddingCountsNeighbours) {
  const Tensor<double> x(Shape{1, 1, 3, 3}, 1.0);
  const Tensor<double> k(Shape{1, 1, 3, 3}, 1.0);
  const auto y = run_conv(x, k, nullptr, 1, 1);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.0);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  const auto x = randn<double>(Shape{2, 3, 5, 4}, 11);
  Tensor<double> k(Shape{3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0;
  EXPECT_EQ(run_conv(x, k, nullptr, 1, 1), x);
}

TEST(Conv2d, MatchesDirectLoopsWithStrideAndBias) {
  for (int stride : {1, 2}) {
    const auto x = randn<double>(Shape{2, 3, 7, 6}, 5 + stride);
    const auto k = randn<double>(Shape{4, 3, 3, 3}, 9 + stride);
    const auto b = randn<double>(Shape{1, 4, 1, 1}, 13);
    const auto expect = testutil::naive_conv(x, k, &b, stride, 1);
    const auto got = run_conv(x, k, &b, stride, 1);
    ASSERT_EQ(got.shape(), expect.shape());
    EXPECT_LT(testutil::max_abs_diff(got, expect), 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchThrows) {
  Graph<double> g;
  const auto x = g.constant(Tensor<double>(Shape{1, 2, 4, 4}));
  const auto k = g.constant(Tensor<double>(Shape{1, 3, 3, 3}));
  EXPECT_THROW(conv2d(x, k, std::optional<Var<double>>{}, 1, 1), ShapeError);
}

TEST(Resize, BilinearConstantField) {
  Graph<double> g;
  const auto y = resize_bilinear(g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 5.0)), 3, 4).value();
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 5.0);
}

TEST(Resize, BilinearWidenRow) {
  Graph<double> g;
  const auto y = resize_bilinear(g.constant(Tensor<double>(Shape{1, 1, 1, 2}, {0.0, 1.0})), 1, 4).value();
  const double expect[] = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);
}

TEST(Resize, BilinearHalveAverages) {
  Graph<double> g;
  const auto y = resize_bilinear(g.constant(Tensor<double>(Shape{1, 1, 2, 2}, {0.0, 2.0, 4.0, 6.0})), 1, 1).value();
  EXPECT_NEAR(y[0], 3.0, 1e-12);
}

TEST(Resize, NearestIdentityAndRightSample) {
  Graph<double> g;
  const auto x = randn<double>(Shape{1, 2, 3, 5}, 3);
  EXPECT_EQ(resize_nearest(g.constant(x), 3, 5).value(), x);
  const auto y = resize_nearest(g.constant(Tensor<double>(Shape{1, 1, 1, 2}, {0.0, 1.0})), 1, 1).value();
  EXPECT_DOUBLE_EQ(y[0], 1.0);
}

TEST(Resize, NearestKeepsOneHot) {
  Tensor<double> layout(Shape{1, 3, 8, 8});
  for (std::int64_t y = 0; y < 8; ++y)
    for (std::int64_t x = 0; x < 8; ++x) layout.at(0, (x + 2 * y) % 3, y, x) = 1.0;
  Graph<double> g;
  const auto small = resize_nearest(g.constant(layout), 3, 3).value();
  for (std::int64_t y = 0; y < 3; ++y)
    for (std::int64_t x = 0; x < 3; ++x) {
      double s = 0;
      for (int c = 0; c < 3; ++c) s += small.at(0, c, y, x);
      EXPECT_DOUBLE_EQ(s, 1.0);
    }
}

TEST(Activation, PointValues) {
  Graph<double> g;
  const auto x = g.constant(Tensor<double>::vector({-1.0, 3.0, -3.0, 0.0}));
  const auto lr = activation(x, Activation::leaky_relu).value();
  EXPECT_DOUBLE_EQ(lr[0], -0.2);
  const auto ht = activation(x, Activation::hardtanh).value();
  EXPECT_DOUBLE_EQ(ht[1], 1.0);
  EXPECT_DOUBLE_EQ(ht[2], -1.0);
  EXPECT_DOUBLE_EQ(activation(x, Activation::relu).value()[3], 0.0);
}

TEST(Activation, ReluSubgradientAtZeroIsZero) {
  Graph<double> g;
  const auto x = g.variable(Tensor<double>::vector({0.0}));
  g.backward(sum(activation(x, Activation::relu)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(BatchMoments, ConstantInput) {
  Graph<double> g;
  const auto [m, s] = batch_moments(g.constant(Tensor<double>(Shape{2, 1, 2, 2}, 4.0)));
  EXPECT_DOUBLE_EQ(m.value()[0], 4.0);
  EXPECT_NEAR(s.value()[0], std::sqrt(kMomentEps), 1e-15);
}

TEST(BatchMoments, TwoValues) {
  Graph<double> g;
  const auto [m, s] = batch_moments(g.constant(Tensor<double>(Shape{1, 1, 1, 2}, {1.0, 3.0})));
  EXPECT_DOUBLE_EQ(m.value()[0], 2.0);
  EXPECT_NEAR(s.value()[0], std::sqrt(1.0 + kMomentEps), 1e-15);
}

TEST(BatchMoments, ChannelsIndependent) {
  auto x = randn<double>(Shape{2, 2, 3, 3}, 4);
  Graph<double> g;
  const auto before = batch_moments(g.constant(x));
  for (std::int64_t y = 0; y < 3; ++y) x.at(1, 0, y, 2) += 7.0;
  const auto after = batch_moments(g.constant(x));
  EXPECT_EQ(before.first.value()[1], after.first.value()[1]);
  EXPECT_EQ(before.second.value()[1], after.second.value()[1]);
  EXPECT_NE(before.first.value()[0], after.first.value()[0]);
}

TEST(ChannelPool, GroupMeans) {
  Tensor<double> x(Shape{1, 4, 1, 1}, {1.0, 3.0, 5.0, 7.0});
  Graph<double> g;
  const auto y = channel_pool_to_n(g.constant(x), 2).value();
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(ChannelPool, UnevenGroupsAndIdentity) {
  Tensor<double> x(Shape{1, 5, 1, 1}, {1.0, 2.0, 3.0, 10.0, 20.0});
  Graph<double> g;
  const auto y = channel_pool_to_n(g.constant(x), 2).value();
  EXPECT_DOUBLE_EQ(y[0], 2.0);   // (1 + 2 + 3) / 3
  EXPECT_DOUBLE_EQ(y[1], 15.0);  // (10 + 20) / 2
  EXPECT_EQ(channel_pool_to_n(g.constant(x), 5).value(), x);
  EXPECT_THROW(channel_pool_to_n(g.constant(x), 6), ParameterError);
}

TEST(Scgt, RoundTripBothDtypes) {
  const auto dir = std::filesystem::temp_directory_path() / "scgen_scgt_test";
  std::filesystem::create_directories(dir);
  const auto f = randn<float>(Shape{2, 3, 4, 5}, 1);
  const auto d = randn<double>(Shape{1, 7, 1, 1}, 2);
  save_tensor((dir / "f.scgt").string(), f);
  save_tensor((dir / "d.scgt").string(), d, 1);
  EXPECT_EQ(load_tensor<float>((dir / "f.scgt").string()), f);
  EXPECT_EQ(load_tensor<double>((dir / "d.scgt").string()), d);
  std::filesystem::remove_all(dir);
}

TEST(Scgt, HeaderLayout) {
  ByteWriter w;
  write_scgt(w, Tensor<float>(Shape{1, 2, 1, 1}, {1.5f, -2.0f}), 1);
  const auto& b = w.buffer();
  ASSERT_EQ(b.size(), 4u + 1 + 1 + 4 + 8 + 2 * 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SCGT");
  EXPECT_EQ(b[4], 1);  // version
  EXPECT_EQ(b[5], 0);  // f32
  EXPECT_EQ(b[6], 1);  // ndim, little-endian
  EXPECT_EQ(b[10], 2);  // the single extent
}

TEST(Scgt, RejectsBadMagicAndTruncation) {
  ByteWriter w;
  write_scgt(w, randn<float>(Shape{1, 1, 2, 2}, 3));
  auto bad = w.buffer();
  bad[0] = 'X';
  ByteReader r1(bad, "bad.scgt");
  try {
    read_scgt<float>(r1);
    FAIL() << "bad magic accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.scgt"), std::string::npos);
  }
  auto cut = w.buffer();
  cut.resize(cut.size() - 3);
  ByteReader r2(cut, "cut.scgt");
  try {
    read_scgt<float>(r2);
    FAIL() << "truncated payload accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
}

TEST(Scgt, ConvertsPrecisionAndRejectsUnknownDtype) {
  ByteWriter w;
  write_scgt(w, Tensor<double>(Shape{1, 1, 1, 2}, {0.1, -3.0}));
  ByteReader r(w.buffer());
  const auto t = read_scgt<float>(r);
  EXPECT_EQ(t[0], static_cast<float>(0.1));
  EXPECT_EQ(t[1], -3.0f);
  auto bad = w.buffer();
  bad[5] = 7;
  ByteReader r2(bad);
  EXPECT_THROW(read_scgt<float>(r2), FormatError);
}
