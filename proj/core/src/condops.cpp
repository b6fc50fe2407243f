#include "scgen/condops.hpp"

#include <cmath>

namespace scgen {

GateMode parse_gate_mode(const std::string& name) {
  if (name == "softmax") return GateMode::softmax;
  if (name == "sigmoid") return GateMode::sigmoid;
  if (name == "tanh") return GateMode::tanh;
  if (name == "relu") return GateMode::relu;
  if (name == "none") return GateMode::none;
  throw ConfigError("unknown gate mode '" + name + "' (expected softmax, sigmoid, tanh, relu or none)");
}

std::string to_string(GateMode mode) {
  switch (mode) {
    case GateMode::softmax: return "softmax";
    case GateMode::sigmoid: return "sigmoid";
    case GateMode::tanh: return "tanh";
    case GateMode::relu: return "relu";
    case GateMode::none: return "none";
  }
  return "none";
}

template <class T>
SemanticVectorMap<T> semantic_gate(const Var<T>& raw, GateMode mode, double temperature) {
  raw.value().check_finite("semantic_gate input");
  if (raw.shape().c < 1) throw ParameterError("semantic_gate: need at least one candidate channel");
  if (mode == GateMode::softmax && !(temperature > 0.0)) {
    throw ParameterError("semantic_gate: softmax temperature must be positive");
  }
  SemanticVectorMap<T> out;
  out.mode = mode;
  out.temperature = temperature;
  if (mode == GateMode::none) {
    out.values = raw;
    return out;
  }
  const Var<T> scaled = mul_scalar(raw, static_cast<T>(temperature));
  switch (mode) {
    case GateMode::softmax: out.values = softmax_channels(scaled); break;
    case GateMode::sigmoid: out.values = activation(scaled, Activation::sigmoid); break;
    case GateMode::tanh: out.values = activation(scaled, Activation::tanh); break;
    case GateMode::relu: out.values = activation(scaled, Activation::relu); break;
    case GateMode::none: break;
  }
  return out;
}

template <class T>
SemanticVectorMap<T> resize_semantic_map(const SemanticVectorMap<T>& map, std::int64_t h, std::int64_t w) {
  const Shape s = map.values.shape();
  if (s.h == h && s.w == w) return map;
  SemanticVectorMap<T> out = map;
  out.values = resize_bilinear(map.values, h, w);
  if (map.mode == GateMode::softmax) out.values = div(out.values, sum_channels(out.values));
  return out;
}

template <class T>
Var<T> spectral_normalize(const Var<T>& weight, Tensor<T>& u, Tensor<T>& v, int iterations) {
  const Tensor<T>& w = weight.value();
  const std::int64_t rows = w.shape().n;
  if (rows < 1) throw ShapeError("spectral_normalize: empty weight");
  const std::int64_t cols = w.numel() / rows;
  if (u.numel() != rows || v.numel() != cols) {
    throw ShapeError("spectral_normalize: state vectors (" + std::to_string(u.numel()) + ", " +
                     std::to_string(v.numel()) + ") do not match weight " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  auto normalize = [](Tensor<T>& x) {
    double nrm = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) nrm += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    nrm = std::max(std::sqrt(nrm), kSpectralEps);
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<T>(static_cast<double>(x[i]) / nrm);
  };
  for (int it = 0; it < iterations; ++it) {
    Tensor<T> nv(v.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      const T ur = u[r];
      const T* row = w.data() + r * cols;
      for (std::int64_t c = 0; c < cols; ++c) nv[c] += row[c] * ur;
    }
    normalize(nv);
    Tensor<T> nu(u.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = w.data() + r * cols;
      double acc = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * static_cast<double>(nv[c]);
      nu[r] = static_cast<T>(acc);
    }
    normalize(nu);
    v = std::move(nv);
    u = std::move(nu);
  }
  double sigma = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = w.data() + r * cols;
    double acc = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * static_cast<double>(v[c]);
    sigma += static_cast<double>(u[r]) * acc;
  }
  const bool guarded = !(sigma > kSpectralEps);
  const T denom = static_cast<T>(guarded ? kSpectralEps : sigma);
  Tensor<T> out(w.shape());
  for (std::int64_t i = 0; i < w.numel(); ++i) out[i] = w[i] / denom;
  const auto id = weight.id;
  return weight.graph->record(std::move(out), {weight},
                              [id, u, v, denom, guarded, rows, cols](Graph<T>& g, const Tensor<T>& go) {
                                const Tensor<T>& wv = g.value(id);
                                Tensor<T>& gw = g.grad_buffer(id);
                                double inner = 0.0;
                                if (!guarded) {
                                  for (std::int64_t i = 0; i < wv.numel(); ++i) {
                                    inner += static_cast<double>(go[i]) * static_cast<double>(wv[i]);
                                  }
                                }
                                const T k = static_cast<T>(inner / (static_cast<double>(denom) * denom));
                                for (std::int64_t r = 0; r < rows; ++r) {
                                  for (std::int64_t c = 0; c < cols; ++c) {
                                    const std::int64_t i = r * cols + c;
                                    gw[i] += go[i] / denom - k * u[r] * v[c];
                                  }
                                }
                              });
}

template <class T>
Var<T> scc_forward(const Var<T>& features, const SemanticVectorMap<T>& vectors, const ConvCandidates<T>& bank) {
  const Shape fs = features.shape();
  const Shape vs = vectors.values.shape();
  const auto n = static_cast<std::int64_t>(bank.kernels.size());
  if (n < 1 || static_cast<std::int64_t>(bank.biases.size()) != n) {
    throw ParameterError("scc: bank needs matching kernel and bias candidates");
  }
  if (vs.c != n) {
    throw ParameterError("scc: semantic vectors have " + std::to_string(vs.c) + " channels but the bank has " +
                         std::to_string(n) + " candidates");
  }
  if (vs.n != fs.n || vs.h != fs.h || vs.w != fs.w) {
    throw ShapeError("scc: semantic vectors " + vs.str() + " do not match features " + fs.str());
  }
  const auto ks = bank.kernels.front().shape().h;
  const int pad = static_cast<int>((ks - 1) / 2);
  Var<T> acc;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& k = bank.kernels[static_cast<std::size_t>(i)];
    if (!(k.shape() == bank.kernels.front().shape())) throw ParameterError("scc: candidate kernels differ in shape");
    Var<T> y = conv2d(features, k, std::optional<Var<T>>(bank.biases[static_cast<std::size_t>(i)]), 1, pad);
    Var<T> term = n == 1 ? mul(y, vectors.values) : mul(y, slice_channels(vectors.values, i, 1));
    acc = i == 0 ? term : add(acc, term);
  }
  return acc;
}

template <class T>
Tensor<T> scc_reference(const Tensor<T>& features, const Tensor<T>& vectors, const std::vector<Tensor<T>>& kernels,
                        const std::vector<Tensor<T>>& biases) {
  const Shape fs = features.shape();
  const Shape vs = vectors.shape();
  const auto n = static_cast<std::int64_t>(kernels.size());
  if (n < 1 || static_cast<std::int64_t>(biases.size()) != n) {
    throw ParameterError("scc_reference: bank needs matching kernel and bias candidates");
  }
  if (vs.c != n) throw ParameterError("scc_reference: candidate count mismatch");
  if (vs.n != fs.n || vs.h != fs.h || vs.w != fs.w) {
    throw ShapeError("scc_reference: semantic vectors " + vs.str() + " do not match features " + fs.str());
  }
  const Shape ks = kernels.front().shape();
  if (ks.c != fs.c) throw ShapeError("scc_reference: kernel input channels do not match features");
  const std::int64_t cout = ks.n;
  const std::int64_t k = ks.h;
  const std::int64_t pad = (k - 1) / 2;
  Tensor<T> out(Shape{fs.n, cout, fs.h, fs.w});
  Tensor<T> mixed(ks);
  std::vector<T> mixed_bias(static_cast<std::size_t>(cout));
  for (std::int64_t b = 0; b < fs.n; ++b) {
    for (std::int64_t r = 0; r < fs.h; ++r) {
      for (std::int64_t c = 0; c < fs.w; ++c) {
        mixed.fill(T(0));
        std::fill(mixed_bias.begin(), mixed_bias.end(), T(0));
        for (std::int64_t i = 0; i < n; ++i) {
          const T weight = vectors.at(b, i, r, c);
          const auto& ki = kernels[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < mixed.numel(); ++j) mixed[j] += weight * ki[j];
          for (std::int64_t co = 0; co < cout; ++co) {
            mixed_bias[static_cast<std::size_t>(co)] += weight * biases[static_cast<std::size_t>(i)][co];
          }
        }
        for (std::int64_t co = 0; co < cout; ++co) {
          T acc = mixed_bias[static_cast<std::size_t>(co)];
          for (std::int64_t ci = 0; ci < fs.c; ++ci) {
            for (std::int64_t ky = 0; ky < k; ++ky) {
              const std::int64_t y = r + ky - pad;
              if (y < 0 || y >= fs.h) continue;
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t x = c + kx - pad;
                if (x < 0 || x >= fs.w) continue;
                acc += mixed.at(co, ci, ky, kx) * features.at(b, ci, y, x);
              }
            }
          }
          out.at(b, co, r, c) = acc;
        }
      }
    }
  }
  return out;
}

template <class T>
Var<T> scn_forward(const Var<T>& features, const SemanticVectorMap<T>& vectors, const Var<T>& means,
                   const Var<T>& scales, const ForwardMode& mode, const RunningStats<T>& running) {
  const Shape fs = features.shape();
  const Shape vs = vectors.values.shape();
  if (vs.n != fs.n || vs.h != fs.h || vs.w != fs.w) {
    throw ShapeError("scn: semantic vectors " + vs.str() + " do not match features " + fs.str());
  }
  const Shape table{vs.c, fs.c, 1, 1};
  if (!(means.shape() == table) || !(scales.shape() == table)) {
    throw ParameterError("scn: candidate tables must be " + table.str() + ", got " + means.shape().str() + " and " +
                         scales.shape().str());
  }
  Graph<T>& g = *features.graph;
  Var<T> normalized;
  if (mode.stats == NormStats::batch) {
    auto [mu, sd] = batch_moments(features);
    normalized = div(sub(features, mu), sd);
    if (mode.update_running && running.mean && running.var && running.tracked) {
      const T m = static_cast<T>(kRunningMomentum);
      for (std::int64_t c = 0; c < fs.c; ++c) {
        const T s = sd.value()[c];
        const T var = s * s - static_cast<T>(kMomentEps);
        (*running.mean)[c] = (T(1) - m) * (*running.mean)[c] + m * mu.value()[c];
        (*running.var)[c] = (T(1) - m) * (*running.var)[c] + m * var;
      }
      (*running.tracked)[0] += T(1);
    }
  } else {
    if (!running.mean || !running.var || !running.tracked || (*running.tracked)[0] <= T(0)) {
      throw StateError("scn: running statistics requested but none have been accumulated");
    }
    Tensor<T> sd(running.var->shape());
    for (std::int64_t c = 0; c < sd.numel(); ++c) {
      sd[c] = std::sqrt((*running.var)[c] + static_cast<T>(kMomentEps));
    }
    normalized = div(sub(features, g.constant(*running.mean)), g.constant(sd));
  }
  const Var<T> scale_hat = channel_mix(vectors.values, scales);
  const Var<T> shift_hat = channel_mix(vectors.values, means);
  return add(mul(normalized, add_scalar(scale_hat, T(1))), shift_hat);
}

template <class T>
SpectralWeight<T>::SpectralWeight(ParamStore<T>& store, const std::string& name, Tensor<T> init, bool spectral,
                                  std::mt19937_64& rng) {
  const std::int64_t rows = init.shape().n;
  const std::int64_t cols = rows > 0 ? init.numel() / rows : 0;
  w_ = &store.add(name, std::move(init));
  if (spectral) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto unit = [&](std::int64_t len) {
      Tensor<T> t(Shape{1, len, 1, 1});
      double nrm = 0.0;
      for (std::int64_t i = 0; i < len; ++i) {
        const double x = normal(rng);
        t[i] = static_cast<T>(x);
        nrm += x * x;
      }
      nrm = std::max(std::sqrt(nrm), kSpectralEps);
      for (std::int64_t i = 0; i < len; ++i) t[i] = static_cast<T>(static_cast<double>(t[i]) / nrm);
      return t;
    };
    u_ = &store.add(name + ".sn_u", unit(rows), false);
    v_ = &store.add(name + ".sn_v", unit(cols), false);
  }
}

template <class T>
Var<T> SpectralWeight<T>::bind(Graph<T>& g, const ForwardMode& mode) {
  Var<T> w = g.param(*w_);
  if (!u_) return w;
  return spectral_normalize(w, u_->value, v_->value, mode.update_spectral ? 1 : 0);
}

namespace {

template <class T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor<T> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(rng));
  return t;
}

}  // namespace

template <class T>
ConvLayer<T>::ConvLayer(ParamStore<T>& store, const std::string& name, std::int64_t cin, std::int64_t cout, int ks,
                        double init_std, bool spectral, bool with_bias, std::mt19937_64& rng)
    : cout_(cout), ks_(ks) {
  weight_ = SpectralWeight<T>(store, name + ".weight", normal_tensor<T>(Shape{cout, cin, ks, ks}, init_std, rng),
                              spectral, rng);
  if (with_bias) bias_ = &store.add(name + ".bias", Tensor<T>(Shape{1, cout, 1, 1}));
}

template <class T>
Var<T> ConvLayer<T>::forward(Graph<T>& g, const Var<T>& x, const ForwardMode& mode, int stride) {
  Var<T> w = weight_.bind(g, mode);
  std::optional<Var<T>> b;
  if (bias_) b = g.param(*bias_);
  return conv2d(x, w, b, stride, (ks_ - 1) / 2);
}

template <class T>
ConvCandidateBank<T>::ConvCandidateBank(ParamStore<T>& store, const std::string& name, std::int64_t n,
                                        std::int64_t cin, std::int64_t cout, int ks, double init_std, bool spectral,
                                        std::mt19937_64& rng)
    : cin_(cin), cout_(cout), ks_(ks) {
  if (n < 1) throw ConfigError(name + ": candidate count must be >= 1");
  for (std::int64_t i = 0; i < n; ++i) {
    const std::string base = name + ".k" + std::to_string(i);
    kernels_.emplace_back(store, base + ".weight", normal_tensor<T>(Shape{cout, cin, ks, ks}, init_std, rng), spectral,
                          rng);
    biases_.push_back(&store.add(base + ".bias", Tensor<T>(Shape{1, cout, 1, 1})));
  }
}

template <class T>
ConvCandidates<T> ConvCandidateBank<T>::bind(Graph<T>& g, const ForwardMode& mode) {
  ConvCandidates<T> out;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    out.kernels.push_back(kernels_[i].bind(g, mode));
    out.biases.push_back(g.param(*biases_[i]));
  }
  return out;
}

template <class T>
NormCandidateBank<T>::NormCandidateBank(ParamStore<T>& store, const std::string& name, std::int64_t n,
                                        std::int64_t channels) {
  if (n < 1) throw ConfigError(name + ": candidate count must be >= 1");
  means_ = &store.add(name + ".means", Tensor<T>(Shape{n, channels, 1, 1}));
  scales_ = &store.add(name + ".scales", Tensor<T>(Shape{n, channels, 1, 1}));
  running_mean_ = &store.add(name + ".running_mean", Tensor<T>(Shape{1, channels, 1, 1}), false);
  running_var_ = &store.add(name + ".running_var", Tensor<T>(Shape{1, channels, 1, 1}, T(1)), false);
  tracked_ = &store.add(name + ".tracked", Tensor<T>(Shape{1, 1, 1, 1}), false);
}

template <class T>
RunningStats<T> NormCandidateBank<T>::running() {
  return {&running_mean_->value, &running_var_->value, &tracked_->value};
}

template <class T>
Var<T> NormCandidateBank<T>::forward(Graph<T>& g, const Var<T>& x, const SemanticVectorMap<T>& v,
                                     const ForwardMode& mode) {
  return scn_forward(x, v, g.param(*means_), g.param(*scales_), mode, running());
}

#define SCGEN_INSTANTIATE_CONDOPS(T)                                                                          \
  template SemanticVectorMap<T> semantic_gate(const Var<T>&, GateMode, double);                               \
  template SemanticVectorMap<T> resize_semantic_map(const SemanticVectorMap<T>&, std::int64_t, std::int64_t); \
  template Var<T> spectral_normalize(const Var<T>&, Tensor<T>&, Tensor<T>&, int);                             \
  template Var<T> scc_forward(const Var<T>&, const SemanticVectorMap<T>&, const ConvCandidates<T>&);          \
  template Tensor<T> scc_reference(const Tensor<T>&, const Tensor<T>&, const std::vector<Tensor<T>>&,         \
                                   const std::vector<Tensor<T>>&);                                            \
  template Var<T> scn_forward(const Var<T>&, const SemanticVectorMap<T>&, const Var<T>&, const Var<T>&,       \
                              const ForwardMode&, const RunningStats<T>&);                                    \
  template class SpectralWeight<T>;                                                                           \
  template class ConvLayer<T>;                                                                                \
  template class ConvCandidateBank<T>;                                                                        \
  template class NormCandidateBank<T>;

SCGEN_INSTANTIATE_CONDOPS(float)
SCGEN_INSTANTIATE_CONDOPS(double)

}  // namespace scgen
