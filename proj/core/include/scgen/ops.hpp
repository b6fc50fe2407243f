#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "scgen/autodiff.hpp"

namespace scgen {

enum class Activation { leaky_relu, relu, tanh, sigmoid, hardtanh };

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kMomentEps = 1e-5;

// Cross-correlation with zero padding. kernel: c_out x c_in x ks x ks,
// bias: 1 x c_out x 1 x 1 (optional).
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const std::optional<Var<T>>& bias, int stride, int pad);

// Half-pixel-center sampling: src = (dst + 0.5) * in / out - 0.5.
template <class T>
Var<T> resize_bilinear(const Var<T>& input, std::int64_t out_h, std::int64_t out_w);
template <class T>
Var<T> resize_nearest(const Var<T>& input, std::int64_t out_h, std::int64_t out_w);

// Derivative at exactly 0 is the negative-side slope (0 for relu, 0.2 for
// leaky). hardtanh passes gradient only strictly inside (-1, 1).
template <class T>
Var<T> activation(const Var<T>& input, Activation mode);

// Per-channel population mean and sqrt(var + 1e-5), each 1 x c x 1 x 1.
template <class T>
std::pair<Var<T>, Var<T>> batch_moments(const Var<T>& input);

// Elementwise arithmetic; every extent must match or be 1 on one side.
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> add_scalar(const Var<T>& a, T s);
template <class T>
Var<T> mul_scalar(const Var<T>& a, T s);
template <class T>
Var<T> abs(const Var<T>& a);
template <class T>
Var<T> square(const Var<T>& a);

template <class T>
Var<T> sum(const Var<T>& a);
template <class T>
Var<T> mean(const Var<T>& a);
// b x c x h x w -> b x 1 x h x w
template <class T>
Var<T> sum_channels(const Var<T>& a);

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <class T>
Var<T> slice_channels(const Var<T>& a, std::int64_t start, std::int64_t count);
template <class T>
Var<T> slice_batch(const Var<T>& a, std::int64_t start, std::int64_t count);
template <class T>
Var<T> reshape(const Var<T>& a, Shape shape);

// Softmax across channels at each (batch, row, column).
template <class T>
Var<T> softmax_channels(const Var<T>& a);

// Contiguous channel groups, the first (c mod n) one channel larger; each
// output channel is its group's mean.
template <class T>
Var<T> channel_pool_to_n(const Var<T>& feat, std::int64_t n);

// out[b, k, y, x] = sum_i weights[b, i, y, x] * table[i, k], table shaped n x c x 1 x 1.
template <class T>
Var<T> channel_mix(const Var<T>& weights, const Var<T>& table);

// Per-sample affine map over flattened features. weight: out x in x 1 x 1,
// bias: 1 x out x 1 x 1. Result: b x out x 1 x 1.
template <class T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const std::optional<Var<T>>& bias);

template <class T>
Var<T> detach(const Var<T>& a);

}  // namespace scgen
