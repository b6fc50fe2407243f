#pragma once

#include <random>
#include <string>
#include <vector>

#include "scgen/ops.hpp"

namespace scgen {

enum class GateMode { softmax, sigmoid, tanh, relu, none };

GateMode parse_gate_mode(const std::string& name);
std::string to_string(GateMode mode);

inline constexpr double kDefaultTemperature = 0.05;
inline constexpr double kSpectralEps = 1e-12;
inline constexpr double kRunningMomentum = 0.1;

enum class NormStats { batch, running };

// How a forward pass treats persistent state.
struct ForwardMode {
  bool update_spectral = true;  // one power iteration per weight per forward
  NormStats stats = NormStats::batch;
  bool update_running = true;

  static ForwardMode training() { return {}; }
  // Pure batch-statistics forward: repeatable, used by gradient checks.
  static ForwardMode frozen() { return {false, NormStats::batch, false}; }
  static ForwardMode inference() { return {false, NormStats::running, false}; }
};

// Gated semantic vectors: b x n x h x w plus the gate that produced them.
template <class T>
struct SemanticVectorMap {
  Var<T> values;
  GateMode mode = GateMode::softmax;
  double temperature = kDefaultTemperature;

  std::int64_t candidates() const { return values.shape().c; }
};

// softmax: exp(tau v_i) / sum_j exp(tau v_j) per position (max-subtracted).
// sigmoid / tanh / relu: the named map applied to tau v. none: identity.
template <class T>
SemanticVectorMap<T> semantic_gate(const Var<T>& raw, GateMode mode, double temperature);

// Bilinear resize to (h, w); in softmax mode the result is renormalized so
// that every position sums to 1 again.
template <class T>
SemanticVectorMap<T> resize_semantic_map(const SemanticVectorMap<T>& map, std::int64_t h, std::int64_t w);

// W / sigma(W) with sigma estimated as u^T W v. `iterations` power steps
// update the persistent vectors first (0 keeps them fixed). The weight is
// viewed as rows = shape.n, cols = numel / rows.
template <class T>
Var<T> spectral_normalize(const Var<T>& weight, Tensor<T>& u, Tensor<T>& v, int iterations);

// Bound (graph-resident) candidates for one SCC call.
template <class T>
struct ConvCandidates {
  std::vector<Var<T>> kernels;  // each c_out x c_in x ks x ks
  std::vector<Var<T>> biases;   // each 1 x c_out x 1 x 1
};

// sum_i V[:, i] * (k_i * F + b_i): n standard convolutions mixed per position.
template <class T>
Var<T> scc_forward(const Var<T>& features, const SemanticVectorMap<T>& vectors, const ConvCandidates<T>& bank);

// Forward-only oracle: at each output position the kernel sum_i V_i k_i and
// bias sum_i V_i b_i are formed explicitly and applied to the receptive field.
template <class T>
Tensor<T> scc_reference(const Tensor<T>& features, const Tensor<T>& vectors, const std::vector<Tensor<T>>& kernels,
                        const std::vector<Tensor<T>>& biases);

// Running statistics of one SCN layer. `tracked` counts batch updates; a
// running-mode forward before the first update is a state error.
template <class T>
struct RunningStats {
  Tensor<T>* mean = nullptr;     // 1 x c x 1 x 1
  Tensor<T>* var = nullptr;      // 1 x c x 1 x 1
  Tensor<T>* tracked = nullptr;  // 1 x 1 x 1 x 1
};

// Normalizes F per channel, then applies x * (1 + s_hat) + m_hat where
// s_hat, m_hat are the V-weighted mixtures of the n x c candidate tables.
template <class T>
Var<T> scn_forward(const Var<T>& features, const SemanticVectorMap<T>& vectors, const Var<T>& means,
                   const Var<T>& scales, const ForwardMode& mode, const RunningStats<T>& running);

// ---------------------------------------------------------------------------
// Parameter-owning building blocks.

// A convolution weight with optional spectral normalization state stored as
// buffers "<name>.sn_u" / "<name>.sn_v".
template <class T>
class SpectralWeight {
 public:
  SpectralWeight() = default;
  SpectralWeight(ParamStore<T>& store, const std::string& name, Tensor<T> init, bool spectral, std::mt19937_64& rng);

  Var<T> bind(Graph<T>& g, const ForwardMode& mode);
  Parameter<T>& weight() { return *w_; }
  bool spectral() const { return u_ != nullptr; }

 private:
  Parameter<T>* w_ = nullptr;
  Parameter<T>* u_ = nullptr;
  Parameter<T>* v_ = nullptr;
};

// Plain convolution layer: weight (optionally spectrally normalized) + bias.
template <class T>
class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(ParamStore<T>& store, const std::string& name, std::int64_t cin, std::int64_t cout, int ks, double init_std,
            bool spectral, bool with_bias, std::mt19937_64& rng);

  Var<T> forward(Graph<T>& g, const Var<T>& x, const ForwardMode& mode, int stride = 1);
  std::int64_t out_channels() const { return cout_; }

 private:
  SpectralWeight<T> weight_;
  Parameter<T>* bias_ = nullptr;
  std::int64_t cout_ = 0;
  int ks_ = 3;
};

// n kernel candidates with their own biases (the shared weights SCC mixes).
template <class T>
class ConvCandidateBank {
 public:
  ConvCandidateBank() = default;
  ConvCandidateBank(ParamStore<T>& store, const std::string& name, std::int64_t n, std::int64_t cin, std::int64_t cout,
                    int ks, double init_std, bool spectral, std::mt19937_64& rng);

  ConvCandidates<T> bind(Graph<T>& g, const ForwardMode& mode);
  std::int64_t candidates() const { return static_cast<std::int64_t>(kernels_.size()); }
  std::int64_t in_channels() const { return cin_; }
  std::int64_t out_channels() const { return cout_; }
  int kernel_size() const { return ks_; }
  Parameter<T>& kernel(std::int64_t i) { return kernels_[static_cast<std::size_t>(i)].weight(); }
  Parameter<T>& bias(std::int64_t i) { return *biases_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<SpectralWeight<T>> kernels_;
  std::vector<Parameter<T>*> biases_;
  std::int64_t cin_ = 0;
  std::int64_t cout_ = 0;
  int ks_ = 3;
};

// n mean and n scale candidates (n x c tables), zero-initialized so the
// effective affine starts at scale 1, shift 0. Owns the running statistics.
template <class T>
class NormCandidateBank {
 public:
  NormCandidateBank() = default;
  NormCandidateBank(ParamStore<T>& store, const std::string& name, std::int64_t n, std::int64_t channels);

  Var<T> forward(Graph<T>& g, const Var<T>& x, const SemanticVectorMap<T>& v, const ForwardMode& mode);
  Parameter<T>& means() { return *means_; }
  Parameter<T>& scales() { return *scales_; }
  RunningStats<T> running();

 private:
  Parameter<T>* means_ = nullptr;
  Parameter<T>* scales_ = nullptr;
  Parameter<T>* running_mean_ = nullptr;
  Parameter<T>* running_var_ = nullptr;
  Parameter<T>* tracked_ = nullptr;
};

}  // namespace scgen
