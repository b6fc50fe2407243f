#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "scgen/condops.hpp"

namespace scgen {

// Architecture of the two-network generator.
//
// SVG runs svg_channels.size() stages; stage t (1-based, T stages) works at
// resolution / 2^(T - t), so the last stage is at full resolution. Each stage
// is Conv -> LReLU -> Conv; the second conv is tapped, channel-pooled to
// `candidates` and gated into pyramid level t. Between stages the tap is
// upsampled 2x, concatenated with the layout at the next scale and passed
// through LReLU. The head (Conv -> LReLU -> Conv -> Hardtanh) predicts an
// RGB image from LReLU([last tap, layout]).
//
// SRG projects z onto a (resolution / 2^B) grid with srg_channels[0]
// channels and runs B residual blocks, each followed by 2x upsampling; block
// i reads pyramid level vector_taps[i] (1-based) and outputs srg_channels[i].
struct GeneratorConfig {
  std::vector<std::int64_t> svg_channels{32, 32, 16};
  std::int64_t svg_head_channels = 16;
  std::vector<std::int64_t> srg_channels{64, 32, 16};
  std::vector<std::int64_t> vector_taps{1, 2, 3};
  std::int64_t candidates = 3;
  double temperature = kDefaultTemperature;
  GateMode gate = GateMode::softmax;
  std::int64_t z_dim = 64;
  std::int64_t resolution = 32;
  std::int64_t classes = 4;
  int kernel_size = 3;
  bool spectral_norm = true;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::int64_t stage_resolution(std::size_t stage) const;
  std::int64_t initial_grid() const;

  static GeneratorConfig families4();
  // Full-size channel lists (256x256 output, 19 classes).
  static GeneratorConfig paper_full();
};

template <class T>
struct SvgOutput {
  std::vector<SemanticVectorMap<T>> pyramid;
  Var<T> predicted_image;
};

// Residual block: SCN -> LReLU -> SCC -> SCN -> LReLU -> SCC, plus an
// identity skip (or a 1x1 SCC when the channel count changes).
template <class T>
class ScResBlock {
 public:
  ScResBlock() = default;
  ScResBlock(ParamStore<T>& store, const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t n,
             int ks, bool spectral, std::mt19937_64& rng);

  std::int64_t in_channels() const { return cin_; }
  std::int64_t out_channels() const { return cout_; }
  bool has_skip() const { return skip_.has_value(); }

  NormCandidateBank<T>& norm1() { return norm1_; }
  NormCandidateBank<T>& norm2() { return norm2_; }
  ConvCandidateBank<T>& conv1() { return conv1_; }
  ConvCandidateBank<T>& conv2() { return conv2_; }
  ConvCandidateBank<T>* skip() { return skip_ ? &*skip_ : nullptr; }

 private:
  template <class U>
  friend Var<U> scresblock_forward(Graph<U>&, const Var<U>&, const SemanticVectorMap<U>&, ScResBlock<U>&,
                                   const ForwardMode&);

  std::int64_t cin_ = 0;
  std::int64_t cout_ = 0;
  NormCandidateBank<T> norm1_;
  NormCandidateBank<T> norm2_;
  ConvCandidateBank<T> conv1_;
  ConvCandidateBank<T> conv2_;
  std::optional<ConvCandidateBank<T>> skip_;
};

// `vectors` must already match the spatial size of `features`.
template <class T>
Var<T> scresblock_forward(Graph<T>& g, const Var<T>& features, const SemanticVectorMap<T>& vectors,
                          ScResBlock<T>& block, const ForwardMode& mode);

template <class T>
class SvgNetwork {
 public:
  SvgNetwork(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  SvgOutput<T> forward(Graph<T>& g, const Var<T>& layout, const ForwardMode& mode);

 private:
  GeneratorConfig cfg_;
  ParamStore<T> store_{"svg."};
  std::vector<ConvLayer<T>> first_;
  std::vector<ConvLayer<T>> tap_;
  ConvLayer<T> head1_;
  ConvLayer<T> head2_;
};

template <class T>
class SrgNetwork {
 public:
  SrgNetwork(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  ScResBlock<T>& block(std::size_t i) { return blocks_[i]; }
  std::size_t block_count() const { return blocks_.size(); }

  // z: b x z_dim x 1 x 1. Output: b x 3 x resolution x resolution in [-1, 1].
  Var<T> forward(Graph<T>& g, const Var<T>& z, const std::vector<SemanticVectorMap<T>>& pyramid,
                 const ForwardMode& mode);

 private:
  GeneratorConfig cfg_;
  ParamStore<T> store_{"srg."};
  Parameter<T>* proj_w_ = nullptr;
  Parameter<T>* proj_b_ = nullptr;
  std::vector<ScResBlock<T>> blocks_;
  ConvLayer<T> out_;
};

template <class T>
struct Generator {
  SvgNetwork<T> svg;
  SrgNetwork<T> srg;
};

// Deterministic given (cfg, seed).
template <class T>
Generator<T> build_from_config(const GeneratorConfig& cfg, std::uint64_t seed);

// Free-function spellings of the network passes.
template <class T>
SvgOutput<T> svg_forward(Graph<T>& g, const Var<T>& layout, SvgNetwork<T>& svg, const ForwardMode& mode);
template <class T>
Var<T> srg_forward(Graph<T>& g, const Var<T>& z, const std::vector<SemanticVectorMap<T>>& pyramid,
                   SrgNetwork<T>& srg, const ForwardMode& mode);

// Conv candidates and the SVG head start from N(0, 2 / fan_in); the final
// RGB convolutions start from N(0, 1e-3^2).
inline constexpr double kOutputInitStd = 1e-3;

}  // namespace scgen
