#pragma once

#include <cmath>
#include <random>

#include "scgen/tensor.hpp"

namespace testutil {

template <class T = float>
scgen::Tensor<T> randn(scgen::Shape s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  scgen::Tensor<T> t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(d(rng));
  return t;
}

// Direct six-loop cross-correlation with zero padding.
template <class T>
scgen::Tensor<T> naive_conv(const scgen::Tensor<T>& x, const scgen::Tensor<T>& k, const scgen::Tensor<T>* bias,
                            int stride, int pad) {
  const auto xs = x.shape();
  const auto ks = k.shape();
  const std::int64_t oh = (xs.h + 2 * pad - ks.h) / stride + 1;
  const std::int64_t ow = (xs.w + 2 * pad - ks.w) / stride + 1;
  scgen::Tensor<T> out(scgen::Shape{xs.n, ks.n, oh, ow});
  for (std::int64_t b = 0; b < xs.n; ++b)
    for (std::int64_t o = 0; o < ks.n; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
          for (std::int64_t c = 0; c < xs.c; ++c)
            for (std::int64_t i = 0; i < ks.h; ++i)
              for (std::int64_t j = 0; j < ks.w; ++j) {
                const std::int64_t sy = y * stride + i - pad;
                const std::int64_t sx = xx * stride + j - pad;
                if (sy < 0 || sx < 0 || sy >= xs.h || sx >= xs.w) continue;
                acc += static_cast<double>(x.at(b, c, sy, sx)) * static_cast<double>(k.at(o, c, i, j));
              }
          out.at(b, o, y, xx) = static_cast<T>(acc);
        }
  return out;
}

template <class T>
double max_abs_diff(const scgen::Tensor<T>& a, const scgen::Tensor<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

template <class T>
double max_rel_diff(const scgen::Tensor<T>& a, const scgen::Tensor<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double x = a[i];
    const double y = b[i];
    m = std::max(m, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-6}));
  }
  return m;
}

}  // namespace testutil
