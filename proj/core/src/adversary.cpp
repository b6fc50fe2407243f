#include "scgen/adversary.hpp"

#include <cmath>

#include "scgen/random.hpp"
#include "scgen/tensor_io.hpp"

namespace scgen {

namespace {

double he_std(std::int64_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  return mean(abs(sub(a, b)));
}

template <class T>
Var<T> average(const std::vector<Var<T>>& parts) {
  Var<T> total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  return parts.size() == 1 ? total : mul_scalar(total, static_cast<T>(1.0 / static_cast<double>(parts.size())));
}

}  // namespace

template <class T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::int64_t classes, std::uint64_t seed)
    : cfg_(cfg), classes_(classes) {
  if (cfg_.channels.empty()) throw ConfigError("discriminator.channels: must list at least one layer");
  if (cfg_.scales < 1) throw ConfigError("discriminator.scales: must be >= 1");
  if (cfg_.kernel_size < 1 || cfg_.kernel_size % 2 == 0) {
    throw ConfigError("discriminator.kernel_size: must be odd and positive");
  }
  if (classes_ < 1) throw ConfigError("discriminator: class count must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, 0xd15c));
  const int ks = cfg_.kernel_size;
  for (int s = 0; s < cfg_.scales; ++s) {
    Branch br;
    const std::string base = "scale" + std::to_string(s);
    std::int64_t cin = 3;
    for (std::size_t l = 0; l < cfg_.channels.size(); ++l) {
      const std::int64_t c = cfg_.channels[l];
      br.convs.emplace_back(store_, base + ".conv" + std::to_string(l + 1), cin, c, ks, he_std(cin * ks * ks), true,
                            true, rng);
      cin = c;
    }
    br.head = ConvLayer<T>(store_, base + ".score", cin, 1, ks, he_std(cin * ks * ks), true, true, rng);
    br.embed_name = base + ".embed";
    br.embed = ConvLayer<T>(store_, br.embed_name, classes_, cin, 1, he_std(classes_), true, false, rng);
    branches_.push_back(std::move(br));
  }
}

template <class T>
Parameter<T>& Discriminator<T>::embedding_weight(int scale) {
  return store_.get(store_.prefix() + branches_.at(static_cast<std::size_t>(scale)).embed_name + ".weight");
}

template <class T>
DiscriminatorOutput<T> Discriminator<T>::forward(Graph<T>& g, const Var<T>& image, const Var<T>& layout,
                                                 const ForwardMode& mode) {
  const Shape is = image.shape();
  const Shape ls = layout.shape();
  if (is.c != 3) throw ShapeError("discriminator: image must have 3 channels, got " + is.str());
  if (ls.n != is.n || ls.h != is.h || ls.w != is.w) {
    throw ShapeError("discriminator: layout " + ls.str() + " does not match image " + is.str());
  }
  if (ls.c != classes_) {
    throw ShapeError("discriminator: layout has " + std::to_string(ls.c) + " classes, expected " +
                     std::to_string(classes_));
  }
  DiscriminatorOutput<T> out;
  for (int s = 0; s < cfg_.scales; ++s) {
    Branch& br = branches_[static_cast<std::size_t>(s)];
    const std::int64_t h = is.h >> s;
    const std::int64_t w = is.w >> s;
    if (h < 1 || w < 1) throw ShapeError("discriminator: image " + is.str() + " too small for scale " + std::to_string(s));
    Var<T> x = s == 0 ? image : resize_bilinear(image, h, w);
    std::vector<Var<T>> feats;
    for (auto& conv : br.convs) {
      x = activation(conv.forward(g, x, mode, 2), Activation::leaky_relu);
      feats.push_back(x);
    }
    const Shape fs = x.shape();
    Var<T> seg = resize_nearest(layout, fs.h, fs.w);
    Var<T> proj = sum_channels(mul(br.embed.forward(g, seg, mode), x));
    out.scores.push_back(add(br.head.forward(g, x, mode), proj));
    out.features.push_back(std::move(feats));
  }
  return out;
}

template <class T>
FeatureExtractor<T>::FeatureExtractor(const FeatureExtractorConfig& cfg) : cfg_(cfg) {
  if (cfg_.channels.empty()) throw ConfigError("perceptual.channels: must list at least one stage");
  if (!cfg_.weights_path.empty()) {
    ByteReader in(read_file_bytes(cfg_.weights_path), cfg_.weights_path);
    std::int64_t cin = 3;
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
      Tensor<T> w = read_scgt<T>(in);
      Tensor<T> b = read_scgt<T>(in);
      const Shape want{cfg_.channels[i], cin, 3, 3};
      if (!(w.shape() == want)) {
        throw FormatError(cfg_.weights_path + ": stage " + std::to_string(i + 1) + " weight is " + w.shape().str() +
                          ", expected " + want.str());
      }
      if (b.numel() != cfg_.channels[i]) {
        throw FormatError(cfg_.weights_path + ": stage " + std::to_string(i + 1) + " bias has " +
                          std::to_string(b.numel()) + " entries, expected " + std::to_string(cfg_.channels[i]));
      }
      weights_.push_back(std::move(w));
      biases_.push_back(b.reshaped(Shape{1, cfg_.channels[i], 1, 1}));
      cin = cfg_.channels[i];
    }
    if (!in.at_end()) throw FormatError(cfg_.weights_path + ": trailing bytes after the last stage");
    return;
  }
  std::mt19937_64 rng(derive_seed(cfg_.seed, 0xfea7));
  std::int64_t cin = 3;
  for (auto c : cfg_.channels) {
    std::normal_distribution<double> normal(0.0, he_std(cin * 9));
    Tensor<T> w(Shape{c, cin, 3, 3});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(normal(rng));
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{1, c, 1, 1});
    cin = c;
  }
}

template <class T>
std::vector<Var<T>> FeatureExtractor<T>::forward(Graph<T>& g, const Var<T>& image) const {
  if (image.shape().c != 3) throw ShapeError("perceptual: expected a 3-channel image, got " + image.shape().str());
  std::vector<Var<T>> out;
  Var<T> x = image;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const int stride = i == 0 ? 1 : 2;
    x = conv2d(x, g.constant(weights_[i]), std::optional<Var<T>>(g.constant(biases_[i])), stride, 1);
    if (cfg_.relu) x = activation(x, Activation::relu);
    out.push_back(x);
  }
  return out;
}

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("loss.") + name + ": must be finite and >= 0");
  };
  check(perceptual, "lambda_p");
  check(gan, "lambda_gan");
  check(feature_matching, "lambda_fm");
  check(regression, "lambda_s");
  if (norm_p != 1 && norm_p != 2) throw ConfigError("loss.norm_p: must be 1 or 2");
}

template <class T>
Var<T> hinge_d(const std::vector<Var<T>>& real_scores, const std::vector<Var<T>>& fake_scores) {
  if (real_scores.empty() || real_scores.size() != fake_scores.size()) {
    throw ShapeError("hinge_d: real and fake score lists must be non-empty and aligned");
  }
  std::vector<Var<T>> parts;
  for (std::size_t s = 0; s < real_scores.size(); ++s) {
    Var<T> r = activation(add_scalar(mul_scalar(real_scores[s], T(-1)), T(1)), Activation::relu);
    Var<T> f = activation(add_scalar(fake_scores[s], T(1)), Activation::relu);
    parts.push_back(add(mean(r), mean(f)));
  }
  return average(parts);
}

template <class T>
Var<T> hinge_g(const std::vector<Var<T>>& fake_scores) {
  if (fake_scores.empty()) throw ShapeError("hinge_g: empty score list");
  std::vector<Var<T>> parts;
  for (const auto& f : fake_scores) parts.push_back(mul_scalar(mean(f), T(-1)));
  return average(parts);
}

template <class T>
Var<T> perceptual_loss(const Var<T>& fake, const Var<T>& real, const FeatureExtractor<T>& phi) {
  require_shape(fake.shape(), real.shape(), "perceptual_loss");
  Graph<T>& g = *fake.graph;
  const auto ff = phi.forward(g, fake);
  const auto rf = phi.forward(g, real);
  Var<T> total = mean_abs_diff(ff[0], rf[0]);
  for (std::size_t i = 1; i < ff.size(); ++i) total = add(total, mean_abs_diff(ff[i], rf[i]));
  return total;
}

template <class T>
Var<T> feature_matching_loss(const std::vector<std::vector<Var<T>>>& fake_feats,
                             const std::vector<std::vector<Var<T>>>& real_feats) {
  if (fake_feats.empty() || fake_feats.size() != real_feats.size()) {
    throw ShapeError("feature_matching_loss: scale lists are empty or misaligned");
  }
  std::vector<Var<T>> parts;
  for (std::size_t s = 0; s < fake_feats.size(); ++s) {
    if (fake_feats[s].empty() || fake_feats[s].size() != real_feats[s].size()) {
      throw ShapeError("feature_matching_loss: layer lists of scale " + std::to_string(s) + " are misaligned");
    }
    for (std::size_t l = 0; l < fake_feats[s].size(); ++l) {
      require_shape(fake_feats[s][l].shape(), real_feats[s][l].shape(), "feature_matching_loss");
      parts.push_back(mean_abs_diff(fake_feats[s][l], detach(real_feats[s][l])));
    }
  }
  return average(parts);
}

template <class T>
Var<T> svg_regression_loss(const Var<T>& predicted, const Var<T>& real, int norm_p) {
  require_shape(predicted.shape(), real.shape(), "svg_regression_loss");
  if (norm_p == 1) return mean_abs_diff(predicted, real);
  if (norm_p == 2) return mean(square(sub(predicted, real)));
  throw ParameterError("svg_regression_loss: norm_p must be 1 or 2, got " + std::to_string(norm_p));
}

template <class T>
Var<T> svg_regression_loss_features(const Var<T>& predicted, const Var<T>& real, const FeatureExtractor<T>& phi) {
  return perceptual_loss(predicted, real, phi);
}

template <class T>
Var<T> total_generator_loss(const GeneratorLossTerms<T>& terms, const LossWeights& weights) {
  const std::pair<const char*, const Var<T>*> named[] = {
      {"perceptual", &terms.perceptual},
      {"gan", &terms.gan},
      {"feature_matching", &terms.feature_matching},
      {"regression", &terms.regression},
  };
  for (const auto& [name, v] : named) {
    if (v->value().numel() != 1) throw ShapeError(std::string("total_generator_loss: term ") + name + " is not a scalar");
    if (!std::isfinite(static_cast<double>(v->value()[0]))) {
      throw ValidityError(std::string("total_generator_loss: term ") + name + " is not finite");
    }
  }
  Var<T> total = mul_scalar(terms.perceptual, static_cast<T>(weights.perceptual));
  total = add(total, mul_scalar(terms.gan, static_cast<T>(weights.gan)));
  total = add(total, mul_scalar(terms.feature_matching, static_cast<T>(weights.feature_matching)));
  return add(total, mul_scalar(terms.regression, static_cast<T>(weights.regression)));
}

#define SCGEN_INSTANTIATE_ADVERSARY(T)                                                                        \
  template class Discriminator<T>;                                                                            \
  template class FeatureExtractor<T>;                                                                         \
  template Var<T> hinge_d(const std::vector<Var<T>>&, const std::vector<Var<T>>&);                            \
  template Var<T> hinge_g(const std::vector<Var<T>>&);                                                        \
  template Var<T> perceptual_loss(const Var<T>&, const Var<T>&, const FeatureExtractor<T>&);                  \
  template Var<T> feature_matching_loss(const std::vector<std::vector<Var<T>>>&,                              \
                                        const std::vector<std::vector<Var<T>>>&);                             \
  template Var<T> svg_regression_loss(const Var<T>&, const Var<T>&, int);                                     \
  template Var<T> svg_regression_loss_features(const Var<T>&, const Var<T>&, const FeatureExtractor<T>&);     \
  template Var<T> total_generator_loss(const GeneratorLossTerms<T>&, const LossWeights&);

SCGEN_INSTANTIATE_ADVERSARY(float)
SCGEN_INSTANTIATE_ADVERSARY(double)

}  // namespace scgen
