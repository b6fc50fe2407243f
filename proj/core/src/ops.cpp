#include "scgen/ops.hpp"

#include <Eigen/Core>
#include <array>
#include <string>
#include <algorithm>
#include <cmath>

#include "scgen/parallel.hpp"

namespace scgen {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
  std::int64_t cin, h, w, cout, ks, stride, pad, oh, ow;
  std::int64_t k() const { return cin * ks * ks; }
  std::int64_t p() const { return oh * ow; }
  bool pointwise() const { return ks == 1 && stride == 1 && pad == 0; }
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::int64_t p = g.p();
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = x + ci * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.ks; ++ky) {
      for (std::int64_t kx = 0; kx < g.ks; ++kx) {
        T* row = cols + ((ci * g.ks + ky) * g.ks + kx) * p;
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + iy * g.w;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* gx) {
  const std::int64_t p = g.p();
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    T* plane = gx + ci * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.ks; ++ky) {
      for (std::int64_t kx = 0; kx < g.ks; ++kx) {
        const T* row = cols + ((ci * g.ks + ky) * g.ks + kx) * p;
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = plane + iy * g.w;
          const T* src = row + oy * g.ow;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Strides of `s` viewed against an output shape; broadcast extents get 0.
std::array<std::int64_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
  const std::array<std::int64_t, 4> ext{s.n, s.c, s.h, s.w};
  const std::array<std::int64_t, 4> oext{out.n, out.c, out.h, out.w};
  std::array<std::int64_t, 4> natural{s.c * s.h * s.w, s.h * s.w, s.w, 1};
  std::array<std::int64_t, 4> st{};
  for (int d = 0; d < 4; ++d) st[d] = (ext[d] == oext[d]) ? natural[d] : 0;
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::array<std::int64_t, 4> ea{a.n, a.c, a.h, a.w};
  const std::array<std::int64_t, 4> eb{b.n, b.c, b.h, b.w};
  std::array<std::int64_t, 4> eo{};
  for (int d = 0; d < 4; ++d) {
    if (ea[d] == eb[d] || eb[d] == 1) {
      eo[d] = ea[d];
    } else if (ea[d] == 1) {
      eo[d] = eb[d];
    } else {
      throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
    }
  }
  return Shape{eo[0], eo[1], eo[2], eo[3]};
}

// fn(out_index, a_index, b_index) over every output element.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& fn) {
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  std::int64_t io = 0;
  for (std::int64_t n = 0; n < out.n; ++n) {
    for (std::int64_t c = 0; c < out.c; ++c) {
      for (std::int64_t y = 0; y < out.h; ++y) {
        std::int64_t ia = n * sa[0] + c * sa[1] + y * sa[2];
        std::int64_t ib = n * sb[0] + c * sb[1] + y * sb[2];
        for (std::int64_t x = 0; x < out.w; ++x, ++io) {
          fn(io, ia + x * sa[3], ib + x * sb[3]);
        }
      }
    }
  }
}

enum class BinOp { add, sub, mul, div };

template <class T>
Var<T> binary(const Var<T>& a, const Var<T>& b, BinOp op, const char* name) {
  const Tensor<T>& va = a.value();
  const Tensor<T>& vb = b.value();
  const Shape out_shape = broadcast_shape(va.shape(), vb.shape(), name);
  Tensor<T> out(out_shape);
  for_each_broadcast(out_shape, va.shape(), vb.shape(), [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
    switch (op) {
      case BinOp::add: out[io] = va[ia] + vb[ib]; break;
      case BinOp::sub: out[io] = va[ia] - vb[ib]; break;
      case BinOp::mul: out[io] = va[ia] * vb[ib]; break;
      case BinOp::div: out[io] = va[ia] / vb[ib]; break;
    }
  });
  const auto ida = a.id;
  const auto idb = b.id;
  return a.graph->record(std::move(out), {a, b}, [ida, idb, op, out_shape](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& xa = g.value(ida);
    const Tensor<T>& xb = g.value(idb);
    const bool need_a = g.requires_grad(ida);
    const bool need_b = g.requires_grad(idb);
    Tensor<T>* ga = need_a ? &g.grad_buffer(ida) : nullptr;
    Tensor<T>* gb = need_b ? &g.grad_buffer(idb) : nullptr;
    for_each_broadcast(out_shape, xa.shape(), xb.shape(), [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
      const T d = go[io];
      switch (op) {
        case BinOp::add:
          if (ga) (*ga)[ia] += d;
          if (gb) (*gb)[ib] += d;
          break;
        case BinOp::sub:
          if (ga) (*ga)[ia] += d;
          if (gb) (*gb)[ib] -= d;
          break;
        case BinOp::mul:
          if (ga) (*ga)[ia] += d * xb[ib];
          if (gb) (*gb)[ib] += d * xa[ia];
          break;
        case BinOp::div:
          if (ga) (*ga)[ia] += d / xb[ib];
          if (gb) (*gb)[ib] -= d * xa[ia] / (xb[ib] * xb[ib]);
          break;
      }
    });
  });
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

struct AxisTap {
  std::int64_t i0;
  std::int64_t i1;
  double frac;
};

std::vector<AxisTap> bilinear_taps(std::int64_t in, std::int64_t out) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(d)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

std::vector<std::int64_t> nearest_taps(std::int64_t in, std::int64_t out) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    const auto s = static_cast<std::int64_t>(std::floor((static_cast<double>(d) + 0.5) * scale));
    idx[static_cast<std::size_t>(d)] = std::clamp<std::int64_t>(s, 0, in - 1);
  }
  return idx;
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const std::optional<Var<T>>& bias, int stride, int pad) {
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw ParameterError("conv2d: padding must be >= 0, got " + std::to_string(pad));
  const Shape xs = input.shape();
  const Shape ws = kernel.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels but kernel expects " +
                     std::to_string(ws.c) + " (kernel " + ws.str() + ")");
  }
  if (bias) require_shape(bias->shape(), Shape{1, ws.n, 1, 1}, "conv2d bias");
  ConvGeom g{xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad, 0, 0};
  g.oh = (xs.h + 2 * pad - g.ks) / stride + 1;
  g.ow = (xs.w + 2 * pad - g.ks) / stride + 1;
  if (g.oh < 1 || g.ow < 1) throw ShapeError("conv2d: empty output for input " + xs.str());

  const Tensor<T>& x = input.value();
  const Tensor<T>& w = kernel.value();
  Tensor<T> out(Shape{xs.n, g.cout, g.oh, g.ow});
  const T* bptr = bias ? bias->value().data() : nullptr;
  parallel_for(xs.n, [&](std::int64_t n) {
    const T* xn = x.data() + n * xs.c * xs.h * xs.w;
    std::vector<T> buf;
    const T* cols = xn;
    if (!g.pointwise()) {
      buf.resize(static_cast<std::size_t>(g.k() * g.p()));
      im2col(xn, g, buf.data());
      cols = buf.data();
    }
    Eigen::Map<const RowMat<T>> W(w.data(), g.cout, g.k());
    Eigen::Map<const RowMat<T>> C(cols, g.k(), g.p());
    Eigen::Map<RowMat<T>> O(out.data() + n * g.cout * g.p(), g.cout, g.p());
    O.noalias() = W * C;
    if (bptr) {
      for (std::int64_t co = 0; co < g.cout; ++co) O.row(co).array() += bptr[co];
    }
  });

  std::vector<Var<T>> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const auto ix = input.id;
  const auto iw = kernel.id;
  const auto ib = bias ? bias->id : -1;
  return input.graph->record(std::move(out), inputs, [ix, iw, ib, g](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& xv = gr.value(ix);
    const Tensor<T>& wv = gr.value(iw);
    const std::int64_t nb = xv.shape().n;
    const bool need_x = gr.requires_grad(ix);
    const bool need_w = gr.requires_grad(iw);
    const bool need_b = ib >= 0 && gr.requires_grad(ib);
    Tensor<T>* gx = need_x ? &gr.grad_buffer(ix) : nullptr;
    std::vector<std::vector<T>> gw_parts(need_w ? static_cast<std::size_t>(nb) : 0);
    const std::int64_t in_plane = g.cin * g.h * g.w;
    parallel_for(nb, [&](std::int64_t n) {
      Eigen::Map<const RowMat<T>> G(go.data() + n * g.cout * g.p(), g.cout, g.p());
      Eigen::Map<const RowMat<T>> W(wv.data(), g.cout, g.k());
      if (need_w) {
        std::vector<T> buf;
        const T* cols = xv.data() + n * in_plane;
        if (!g.pointwise()) {
          buf.resize(static_cast<std::size_t>(g.k() * g.p()));
          im2col(xv.data() + n * in_plane, g, buf.data());
          cols = buf.data();
        }
        Eigen::Map<const RowMat<T>> C(cols, g.k(), g.p());
        auto& part = gw_parts[static_cast<std::size_t>(n)];
        part.resize(static_cast<std::size_t>(g.cout * g.k()));
        Eigen::Map<RowMat<T>> GW(part.data(), g.cout, g.k());
        GW.noalias() = G * C.transpose();
      }
      if (need_x) {
        T* gxn = gx->data() + n * in_plane;
        if (g.pointwise()) {
          Eigen::Map<RowMat<T>> GX(gxn, g.k(), g.p());
          GX.noalias() += W.transpose() * G;
        } else {
          std::vector<T> gcols(static_cast<std::size_t>(g.k() * g.p()));
          Eigen::Map<RowMat<T>> GC(gcols.data(), g.k(), g.p());
          GC.noalias() = W.transpose() * G;
          col2im_add(gcols.data(), g, gxn);
        }
      }
    });
    if (need_w) {
      Tensor<T>& gw = gr.grad_buffer(iw);
      for (const auto& part : gw_parts) {
        for (std::size_t i = 0; i < part.size(); ++i) gw[static_cast<std::int64_t>(i)] += part[i];
      }
    }
    if (need_b) {
      Tensor<T>& gb = gr.grad_buffer(ib);
      for (std::int64_t n = 0; n < nb; ++n) {
        for (std::int64_t co = 0; co < g.cout; ++co) {
          const T* row = go.data() + (n * g.cout + co) * g.p();
          T acc = T(0);
          for (std::int64_t i = 0; i < g.p(); ++i) acc += row[i];
          gb[co] += acc;
        }
      }
    }
  });
}

template <class T>
Var<T> resize_bilinear(const Var<T>& input, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: output size must be >= 1");
  const Shape s = input.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("resize_bilinear: empty input " + s.str());
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  const Tensor<T>& x = input.value();
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T* src = x.data() + p * s.h * s.w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      const T fy = static_cast<T>(a.frac);
      for (std::int64_t xo = 0; xo < out_w; ++xo) {
        const auto& b = tx[static_cast<std::size_t>(xo)];
        const T fx = static_cast<T>(b.frac);
        const T v00 = src[a.i0 * s.w + b.i0];
        const T v01 = src[a.i0 * s.w + b.i1];
        const T v10 = src[a.i1 * s.w + b.i0];
        const T v11 = src[a.i1 * s.w + b.i1];
        const T top = v00 + fx * (v01 - v00);
        const T bot = v10 + fx * (v11 - v10);
        dst[y * out_w + xo] = top + fy * (bot - top);
      }
    }
  }
  const auto id = input.id;
  return input.graph->record(std::move(out), {input}, [id, s, out_h, out_w, ty, tx](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
      T* dst = gx.data() + p * s.h * s.w;
      const T* src = go.data() + p * out_h * out_w;
      for (std::int64_t y = 0; y < out_h; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        const T fy = static_cast<T>(a.frac);
        for (std::int64_t xo = 0; xo < out_w; ++xo) {
          const auto& b = tx[static_cast<std::size_t>(xo)];
          const T fx = static_cast<T>(b.frac);
          const T d = src[y * out_w + xo];
          dst[a.i0 * s.w + b.i0] += d * (T(1) - fy) * (T(1) - fx);
          dst[a.i0 * s.w + b.i1] += d * (T(1) - fy) * fx;
          dst[a.i1 * s.w + b.i0] += d * fy * (T(1) - fx);
          dst[a.i1 * s.w + b.i1] += d * fy * fx;
        }
      }
    }
  });
}

template <class T>
Var<T> resize_nearest(const Var<T>& input, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_nearest: output size must be >= 1");
  const Shape s = input.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("resize_nearest: empty input " + s.str());
  const auto iy = nearest_taps(s.h, out_h);
  const auto ix = nearest_taps(s.w, out_w);
  const Tensor<T>& x = input.value();
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T* src = x.data() + p * s.h * s.w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      for (std::int64_t xo = 0; xo < out_w; ++xo) {
        dst[y * out_w + xo] = src[iy[static_cast<std::size_t>(y)] * s.w + ix[static_cast<std::size_t>(xo)]];
      }
    }
  }
  const auto id = input.id;
  return input.graph->record(std::move(out), {input}, [id, s, out_h, out_w, iy, ix](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
      T* dst = gx.data() + p * s.h * s.w;
      const T* src = go.data() + p * out_h * out_w;
      for (std::int64_t y = 0; y < out_h; ++y) {
        for (std::int64_t xo = 0; xo < out_w; ++xo) {
          dst[iy[static_cast<std::size_t>(y)] * s.w + ix[static_cast<std::size_t>(xo)]] += src[y * out_w + xo];
        }
      }
    }
  });
}

template <class T>
Var<T> activation(const Var<T>& input, Activation mode) {
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  const T slope = static_cast<T>(kLeakySlope);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    switch (mode) {
      case Activation::leaky_relu: out[i] = v > T(0) ? v : slope * v; break;
      case Activation::relu: out[i] = v > T(0) ? v : T(0); break;
      case Activation::tanh: out[i] = std::tanh(v); break;
      case Activation::sigmoid: out[i] = T(1) / (T(1) + std::exp(-v)); break;
      case Activation::hardtanh: out[i] = std::clamp(v, T(-1), T(1)); break;
    }
  }
  const auto id = input.id;
  return input.graph->record(std::move(out), {input}, [id, mode, slope](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& xv = g.value(id);
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
      const T v = xv[i];
      T d = T(0);
      switch (mode) {
        case Activation::leaky_relu: d = v > T(0) ? T(1) : slope; break;
        case Activation::relu: d = v > T(0) ? T(1) : T(0); break;
        case Activation::tanh: {
          const T t = std::tanh(v);
          d = T(1) - t * t;
          break;
        }
        case Activation::sigmoid: {
          const T s = T(1) / (T(1) + std::exp(-v));
          d = s * (T(1) - s);
          break;
        }
        case Activation::hardtanh: d = (v > T(-1) && v < T(1)) ? T(1) : T(0); break;
      }
      gx[i] += go[i] * d;
    }
  });
}

template <class T>
std::pair<Var<T>, Var<T>> batch_moments(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  const Shape s = x.shape();
  const std::int64_t m = s.n * s.h * s.w;
  if (m < 1) throw ShapeError("batch_moments: need at least one sample per channel, got " + s.str());
  Tensor<T> mean_t(Shape{1, s.c, 1, 1});
  Tensor<T> std_t(Shape{1, s.c, 1, 1});
  for (std::int64_t c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* p = x.data() + (n * s.c + c) * s.plane();
      for (std::int64_t i = 0; i < s.plane(); ++i) acc += static_cast<double>(p[i]);
    }
    const double mu = acc / static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* p = x.data() + (n * s.c + c) * s.plane();
      for (std::int64_t i = 0; i < s.plane(); ++i) {
        const double d = static_cast<double>(p[i]) - mu;
        var += d * d;
      }
    }
    var /= static_cast<double>(m);
    mean_t[c] = static_cast<T>(mu);
    std_t[c] = static_cast<T>(std::sqrt(var + kMomentEps));
  }
  Graph<T>& g = *input.graph;
  const auto id = input.id;
  Var<T> mean_v = g.record(mean_t, {input}, [id, s, m](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>& gx = gr.grad_buffer(id);
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T d = go[c] / static_cast<T>(m);
        T* p = gx.data() + (n * s.c + c) * s.plane();
        for (std::int64_t i = 0; i < s.plane(); ++i) p[i] += d;
      }
    }
  });
  Var<T> std_v = g.record(std_t, {input}, [id, s, m, mean_t, std_t](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& xv = gr.value(id);
    Tensor<T>& gx = gr.grad_buffer(id);
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T k = go[c] / (static_cast<T>(m) * std_t[c]);
        const T mu = mean_t[c];
        const T* xp = xv.data() + (n * s.c + c) * s.plane();
        T* p = gx.data() + (n * s.c + c) * s.plane();
        for (std::int64_t i = 0; i < s.plane(); ++i) p[i] += k * (xp[i] - mu);
      }
    }
  });
  return {mean_v, std_v};
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinOp::add, "add");
}
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinOp::sub, "sub");
}
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinOp::mul, "mul");
}
template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinOp::div, "div");
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id](Graph<T>& g, const Tensor<T>& go) { add_into(g.grad_buffer(id), go); });
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id, s](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += s * go[i];
  });
}

template <class T>
Var<T> abs(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& x = g.value(id);
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t i = 0; i < gx.numel(); ++i) {
      const T v = x[i];
      gx[i] += v > T(0) ? go[i] : (v < T(0) ? -go[i] : T(0));
    }
  });
}

template <class T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& x = g.value(id);
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += T(2) * x[i] * go[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  const auto id = a.id;
  return a.graph->record(Tensor<T>::scalar(static_cast<T>(acc)), {a}, [id](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    const T d = go[0];
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += d;
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  const auto count = x.numel();
  const auto id = a.id;
  return a.graph->record(Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))), {a},
                         [id, count](Graph<T>& g, const Tensor<T>& go) {
                           Tensor<T>& gx = g.grad_buffer(id);
                           const T d = go[0] / static_cast<T>(count);
                           for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += d;
                         });
}

template <class T>
Var<T> sum_channels(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  for (std::int64_t n = 0; n < s.n; ++n) {
    T* dst = out.data() + n * s.plane();
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* src = x.data() + (n * s.c + c) * s.plane();
      for (std::int64_t i = 0; i < s.plane(); ++i) dst[i] += src[i];
    }
  }
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id, s](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* src = go.data() + n * s.plane();
      for (std::int64_t c = 0; c < s.c; ++c) {
        T* dst = gx.data() + (n * s.c + c) * s.plane();
        for (std::int64_t i = 0; i < s.plane(); ++i) dst[i] += src[i];
      }
    }
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape s0 = parts.front().shape();
  std::int64_t total = 0;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("concat_channels: mismatched shapes " + s0.str() + " and " + s.str());
    }
    widths.push_back(s.c);
    total += s.c;
  }
  Tensor<T> out(Shape{s0.n, total, s0.h, s0.w});
  const std::int64_t plane = s0.plane();
  for (std::int64_t n = 0; n < s0.n; ++n) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Tensor<T>& v = parts[k].value();
      std::copy_n(v.data() + n * widths[k] * plane, widths[k] * plane, out.data() + (n * total + off) * plane);
      off += widths[k];
    }
  }
  std::vector<std::int32_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return parts.front().graph->record(std::move(out), parts, [ids, widths, total, s0, plane](Graph<T>& g, const Tensor<T>& go) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) {
        Tensor<T>& gx = g.grad_buffer(ids[k]);
        for (std::int64_t n = 0; n < s0.n; ++n) {
          const T* src = go.data() + (n * total + off) * plane;
          T* dst = gx.data() + n * widths[k] * plane;
          for (std::int64_t i = 0; i < widths[k] * plane; ++i) dst[i] += src[i];
        }
      }
      off += widths[k];
    }
  });
}

template <class T>
Var<T> slice_channels(const Var<T>& a, std::int64_t start, std::int64_t count) {
  const Shape s = a.shape();
  if (start < 0 || count < 1 || start + count > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + s.str());
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::int64_t plane = s.plane();
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(a.value().data() + (n * s.c + start) * plane, count * plane, out.data() + n * count * plane);
  }
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id, s, start, count, plane](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* src = go.data() + n * count * plane;
      T* dst = gx.data() + (n * s.c + start) * plane;
      for (std::int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
}

template <class T>
Var<T> slice_batch(const Var<T>& a, std::int64_t start, std::int64_t count) {
  const Shape s = a.shape();
  if (start < 0 || count < 1 || start + count > s.n) throw ShapeError("slice_batch: range outside " + s.str());
  const std::int64_t per = s.c * s.plane();
  Tensor<T> out(Shape{count, s.c, s.h, s.w});
  std::copy_n(a.value().data() + start * per, count * per, out.data());
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id, start, count, per](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t i = 0; i < count * per; ++i) gx[start * per + i] += go[i];
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(shape);
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += go[i];
  });
}

template <class T>
Var<T> softmax_channels(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  const Shape s = x.shape();
  const std::int64_t plane = s.plane();
  Tensor<T> out(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const T* base = x.data() + n * s.c * plane + p;
      T* ob = out.data() + n * s.c * plane + p;
      T mx = base[0];
      for (std::int64_t c = 1; c < s.c; ++c) mx = std::max(mx, base[c * plane]);
      T z = T(0);
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T e = std::exp(base[c * plane] - mx);
        ob[c * plane] = e;
        z += e;
      }
      for (std::int64_t c = 0; c < s.c; ++c) ob[c * plane] /= z;
    }
  }
  Tensor<T> saved = out;
  const auto id = a.id;
  return a.graph->record(std::move(out), {a}, [id, s, plane, saved](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t p = 0; p < plane; ++p) {
        const std::int64_t base = n * s.c * plane + p;
        T dot = T(0);
        for (std::int64_t c = 0; c < s.c; ++c) dot += go[base + c * plane] * saved[base + c * plane];
        for (std::int64_t c = 0; c < s.c; ++c) {
          gx[base + c * plane] += saved[base + c * plane] * (go[base + c * plane] - dot);
        }
      }
    }
  });
}

template <class T>
Var<T> channel_pool_to_n(const Var<T>& feat, std::int64_t n) {
  const Shape s = feat.shape();
  if (n < 1) throw ParameterError("channel_pool_to_n: n must be >= 1");
  if (s.c < n) {
    throw ParameterError("channel_pool_to_n: cannot pool " + std::to_string(s.c) + " channels into " +
                         std::to_string(n) + " groups");
  }
  std::vector<std::int64_t> start(static_cast<std::size_t>(n)), size(static_cast<std::size_t>(n));
  const std::int64_t base = s.c / n;
  const std::int64_t extra = s.c % n;
  std::int64_t off = 0;
  for (std::int64_t j = 0; j < n; ++j) {
    size[static_cast<std::size_t>(j)] = base + (j < extra ? 1 : 0);
    start[static_cast<std::size_t>(j)] = off;
    off += size[static_cast<std::size_t>(j)];
  }
  const std::int64_t plane = s.plane();
  const Tensor<T>& x = feat.value();
  Tensor<T> out(Shape{s.n, n, s.h, s.w});
  for (std::int64_t b = 0; b < s.n; ++b) {
    for (std::int64_t j = 0; j < n; ++j) {
      T* dst = out.data() + (b * n + j) * plane;
      const auto sz = size[static_cast<std::size_t>(j)];
      for (std::int64_t c = 0; c < sz; ++c) {
        const T* src = x.data() + (b * s.c + start[static_cast<std::size_t>(j)] + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
      const T inv = T(1) / static_cast<T>(sz);
      for (std::int64_t i = 0; i < plane; ++i) dst[i] *= inv;
    }
  }
  const auto id = feat.id;
  return feat.graph->record(std::move(out), {feat}, [id, s, n, start, size, plane](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(id);
    for (std::int64_t b = 0; b < s.n; ++b) {
      for (std::int64_t j = 0; j < n; ++j) {
        const auto sz = size[static_cast<std::size_t>(j)];
        const T inv = T(1) / static_cast<T>(sz);
        const T* src = go.data() + (b * n + j) * plane;
        for (std::int64_t c = 0; c < sz; ++c) {
          T* dst = gx.data() + (b * s.c + start[static_cast<std::size_t>(j)] + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i] * inv;
        }
      }
    }
  });
}

template <class T>
Var<T> channel_mix(const Var<T>& weights, const Var<T>& table) {
  const Shape vs = weights.shape();
  const Shape ts = table.shape();
  if (ts.h != 1 || ts.w != 1 || ts.n != vs.c) {
    throw ShapeError("channel_mix: table " + ts.str() + " incompatible with weights " + vs.str());
  }
  const std::int64_t n = vs.c;
  const std::int64_t c = ts.c;
  const std::int64_t plane = vs.plane();
  const Tensor<T>& v = weights.value();
  const Tensor<T>& a = table.value();
  Tensor<T> out(Shape{vs.n, c, vs.h, vs.w});
  for (std::int64_t b = 0; b < vs.n; ++b) {
    for (std::int64_t i = 0; i < n; ++i) {
      const T* vp = v.data() + (b * n + i) * plane;
      for (std::int64_t k = 0; k < c; ++k) {
        const T coef = a[i * c + k];
        T* op = out.data() + (b * c + k) * plane;
        for (std::int64_t p = 0; p < plane; ++p) op[p] += vp[p] * coef;
      }
    }
  }
  const auto iv = weights.id;
  const auto ia = table.id;
  return weights.graph->record(std::move(out), {weights, table}, [iv, ia, vs, n, c, plane](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& v2 = g.value(iv);
    const Tensor<T>& a2 = g.value(ia);
    const bool need_v = g.requires_grad(iv);
    const bool need_a = g.requires_grad(ia);
    Tensor<T>* gv = need_v ? &g.grad_buffer(iv) : nullptr;
    Tensor<T>* ga = need_a ? &g.grad_buffer(ia) : nullptr;
    for (std::int64_t b = 0; b < vs.n; ++b) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* vp = v2.data() + (b * n + i) * plane;
        for (std::int64_t k = 0; k < c; ++k) {
          const T* gp = go.data() + (b * c + k) * plane;
          if (gv) {
            const T coef = a2[i * c + k];
            T* gvp = gv->data() + (b * n + i) * plane;
            for (std::int64_t p = 0; p < plane; ++p) gvp[p] += gp[p] * coef;
          }
          if (ga) {
            T acc = T(0);
            for (std::int64_t p = 0; p < plane; ++p) acc += gp[p] * vp[p];
            (*ga)[i * c + k] += acc;
          }
        }
      }
    }
  });
}

template <class T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const std::optional<Var<T>>& bias) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  const std::int64_t in_features = xs.c * xs.h * xs.w;
  if (ws.h != 1 || ws.w != 1 || ws.c != in_features) {
    throw ShapeError("linear: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  const std::int64_t out_features = ws.n;
  if (bias) require_shape(bias->shape(), Shape{1, out_features, 1, 1}, "linear bias");
  Tensor<T> out(Shape{xs.n, out_features, 1, 1});
  Eigen::Map<const RowMat<T>> X(input.value().data(), xs.n, in_features);
  Eigen::Map<const RowMat<T>> W(weight.value().data(), out_features, in_features);
  Eigen::Map<RowMat<T>> O(out.data(), xs.n, out_features);
  O.noalias() = X * W.transpose();
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(bias->value().data(), out_features);
    O.rowwise() += B;
  }
  std::vector<Var<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const auto ix = input.id;
  const auto iw = weight.id;
  const auto ib = bias ? bias->id : -1;
  return input.graph->record(std::move(out), inputs,
                             [ix, iw, ib, nb = xs.n, in_features, out_features](Graph<T>& g, const Tensor<T>& go) {
                               Eigen::Map<const RowMat<T>> G(go.data(), nb, out_features);
                               if (g.requires_grad(ix)) {
                                 Eigen::Map<const RowMat<T>> W2(g.value(iw).data(), out_features, in_features);
                                 Eigen::Map<RowMat<T>> GX(g.grad_buffer(ix).data(), nb, in_features);
                                 GX.noalias() += G * W2;
                               }
                               if (g.requires_grad(iw)) {
                                 Eigen::Map<const RowMat<T>> X2(g.value(ix).data(), nb, in_features);
                                 Eigen::Map<RowMat<T>> GW(g.grad_buffer(iw).data(), out_features, in_features);
                                 GW.noalias() += G.transpose() * X2;
                               }
                               if (ib >= 0 && g.requires_grad(ib)) {
                                 Tensor<T>& gb = g.grad_buffer(ib);
                                 for (std::int64_t r = 0; r < nb; ++r) {
                                   for (std::int64_t k = 0; k < out_features; ++k) gb[k] += go[r * out_features + k];
                                 }
                               }
                             });
}

template <class T>
Var<T> detach(const Var<T>& a) {
  return a.graph->constant(a.value());
}

#define SCGEN_INSTANTIATE_OPS(T)                                                                           \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, int, int);            \
  template Var<T> resize_bilinear(const Var<T>&, std::int64_t, std::int64_t);                              \
  template Var<T> resize_nearest(const Var<T>&, std::int64_t, std::int64_t);                               \
  template Var<T> activation(const Var<T>&, Activation);                                                   \
  template std::pair<Var<T>, Var<T>> batch_moments(const Var<T>&);                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> div(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> add_scalar(const Var<T>&, T);                                                            \
  template Var<T> mul_scalar(const Var<T>&, T);                                                            \
  template Var<T> abs(const Var<T>&);                                                                      \
  template Var<T> square(const Var<T>&);                                                                   \
  template Var<T> sum(const Var<T>&);                                                                      \
  template Var<T> mean(const Var<T>&);                                                                     \
  template Var<T> sum_channels(const Var<T>&);                                                             \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                             \
  template Var<T> slice_channels(const Var<T>&, std::int64_t, std::int64_t);                               \
  template Var<T> slice_batch(const Var<T>&, std::int64_t, std::int64_t);                                  \
  template Var<T> reshape(const Var<T>&, Shape);                                                           \
  template Var<T> softmax_channels(const Var<T>&);                                                         \
  template Var<T> channel_pool_to_n(const Var<T>&, std::int64_t);                                          \
  template Var<T> channel_mix(const Var<T>&, const Var<T>&);                                               \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                      \
  template Var<T> detach(const Var<T>&);

SCGEN_INSTANTIATE_OPS(float)
SCGEN_INSTANTIATE_OPS(double)

}  // namespace scgen
