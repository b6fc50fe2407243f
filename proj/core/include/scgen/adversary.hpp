#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scgen/condops.hpp"

namespace scgen {

struct DiscriminatorConfig {
  std::vector<std::int64_t> channels{32, 64, 64};  // one stride-2 conv per entry
  int scales = 2;                                  // full, x0.5, x0.25, ...
  int kernel_size = 3;
};

template <class T>
struct DiscriminatorOutput {
  std::vector<Var<T>> scores;                 // one b x 1 x h' x w' map per scale
  std::vector<std::vector<Var<T>>> features;  // per scale, per layer (post-activation)
};

// Multi-scale patch discriminator with a projection-style semantics head:
// score = head(f) + <embed(S), f> per position, where f is the last feature
// map and embed is a 1x1 convolution of the resized one-hot layout.
template <class T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::int64_t classes, std::uint64_t seed);

  DiscriminatorOutput<T> forward(Graph<T>& g, const Var<T>& image, const Var<T>& layout, const ForwardMode& mode);

  const DiscriminatorConfig& config() const { return cfg_; }
  std::int64_t classes() const { return classes_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  // Weight of the semantics embedding of one scale (for ablation).
  Parameter<T>& embedding_weight(int scale);

 private:
  struct Branch {
    std::vector<ConvLayer<T>> convs;
    ConvLayer<T> head;
    ConvLayer<T> embed;
    std::string embed_name;
  };

  DiscriminatorConfig cfg_;
  std::int64_t classes_;
  ParamStore<T> store_{"disc."};
  std::vector<Branch> branches_;
};

// Fixed conv pyramid standing in for a pretrained perceptual network. Stage 0
// keeps the resolution, later stages halve it.
struct FeatureExtractorConfig {
  std::vector<std::int64_t> channels{8, 16, 32, 64, 64};
  std::uint64_t seed = 0x5eed;
  bool relu = true;          // false gives a purely linear extractor
  std::string weights_path;  // optional SCGT stream: w1, b1, ..., w5, b5
};

template <class T>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureExtractorConfig& cfg = {});

  std::vector<Var<T>> forward(Graph<T>& g, const Var<T>& image) const;
  std::size_t stages() const { return weights_.size(); }
  const FeatureExtractorConfig& config() const { return cfg_; }
  const Tensor<T>& weight(std::size_t i) const { return weights_[i]; }
  const Tensor<T>& bias(std::size_t i) const { return biases_[i]; }

 private:
  FeatureExtractorConfig cfg_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

struct LossWeights {
  double perceptual = 10.0;
  double gan = 1.0;
  double feature_matching = 10.0;
  double regression = 2.0;
  int norm_p = 1;
  bool regression_in_feature_space = false;

  void validate() const;
};

template <class T>
Var<T> hinge_d(const std::vector<Var<T>>& real_scores, const std::vector<Var<T>>& fake_scores);
template <class T>
Var<T> hinge_g(const std::vector<Var<T>>& fake_scores);

template <class T>
Var<T> perceptual_loss(const Var<T>& fake, const Var<T>& real, const FeatureExtractor<T>& phi);

// Real features are detached here, so the discriminator receives nothing
// through this term.
template <class T>
Var<T> feature_matching_loss(const std::vector<std::vector<Var<T>>>& fake_feats,
                             const std::vector<std::vector<Var<T>>>& real_feats);

template <class T>
Var<T> svg_regression_loss(const Var<T>& predicted, const Var<T>& real, int norm_p);
template <class T>
Var<T> svg_regression_loss_features(const Var<T>& predicted, const Var<T>& real, const FeatureExtractor<T>& phi);

template <class T>
struct GeneratorLossTerms {
  Var<T> perceptual;
  Var<T> gan;
  Var<T> feature_matching;
  Var<T> regression;
};

template <class T>
Var<T> total_generator_loss(const GeneratorLossTerms<T>& terms, const LossWeights& weights);

}  // namespace scgen
