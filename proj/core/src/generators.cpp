#include "scgen/generators.hpp"

#include <cmath>

#include "scgen/random.hpp"

namespace scgen {

namespace {

double he_std(std::int64_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

bool power_of_two_divides(std::int64_t value, std::size_t exponent) {
  if (exponent >= 62) return false;
  const std::int64_t d = std::int64_t{1} << exponent;
  return value % d == 0;
}

}  // namespace

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("generator." + field + ": " + why);
  };
  if (svg_channels.empty()) fail("svg_channels", "must list at least one stage");
  for (auto c : svg_channels) {
    if (c < candidates) fail("svg_channels", "every stage needs at least `candidates` channels for pooling");
  }
  if (svg_head_channels < 1) fail("svg_head_channels", "must be >= 1");
  if (srg_channels.empty()) fail("srg_channels", "must list at least one block");
  for (auto c : srg_channels) {
    if (c < 1) fail("srg_channels", "channel counts must be >= 1");
  }
  if (vector_taps.size() != srg_channels.size()) {
    fail("vector_taps", "needs one entry per SRG block (" + std::to_string(srg_channels.size()) + ")");
  }
  for (auto t : vector_taps) {
    if (t < 1 || t > static_cast<std::int64_t>(svg_channels.size())) {
      fail("vector_taps", "entries must name an SVG level in 1.." + std::to_string(svg_channels.size()));
    }
  }
  if (candidates < 1) fail("candidates", "must be >= 1");
  if (gate == GateMode::softmax && !(temperature > 0.0)) fail("temperature", "must be positive for softmax gating");
  if (z_dim < 1) fail("z_dim", "must be >= 1");
  if (classes < 1) fail("classes", "must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size", "must be odd and positive");
  if (resolution < 1) fail("resolution", "must be >= 1");
  if (!power_of_two_divides(resolution, svg_channels.size())) {
    fail("resolution", "must be divisible by 2^" + std::to_string(svg_channels.size()) + " for the SVG stages");
  }
  if (!power_of_two_divides(resolution, srg_channels.size())) {
    fail("resolution", "must be divisible by 2^" + std::to_string(srg_channels.size()) + " for the SRG blocks");
  }
}

std::int64_t GeneratorConfig::stage_resolution(std::size_t stage) const {
  return resolution >> (svg_channels.size() - 1 - stage);
}

std::int64_t GeneratorConfig::initial_grid() const { return resolution >> srg_channels.size(); }

GeneratorConfig GeneratorConfig::families4() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::paper_full() {
  GeneratorConfig cfg;
  cfg.svg_channels = {512, 256, 128, 64, 32, 32};
  cfg.svg_head_channels = 16;
  cfg.srg_channels = {512, 512, 512, 256, 128, 64, 32};
  cfg.vector_taps = {1, 2, 2, 3, 4, 5, 6};
  cfg.candidates = 3;
  cfg.temperature = kDefaultTemperature;
  cfg.z_dim = 256;
  cfg.resolution = 256;
  cfg.classes = 19;
  return cfg;
}

template <class T>
ScResBlock<T>::ScResBlock(ParamStore<T>& store, const std::string& name, std::int64_t cin, std::int64_t cout,
                          std::int64_t n, int ks, bool spectral, std::mt19937_64& rng)
    : cin_(cin), cout_(cout) {
  norm1_ = NormCandidateBank<T>(store, name + ".norm1", n, cin);
  conv1_ = ConvCandidateBank<T>(store, name + ".conv1", n, cin, cout, ks, he_std(cin * ks * ks), spectral, rng);
  norm2_ = NormCandidateBank<T>(store, name + ".norm2", n, cout);
  conv2_ = ConvCandidateBank<T>(store, name + ".conv2", n, cout, cout, ks, he_std(cout * ks * ks), spectral, rng);
  if (cin != cout) skip_.emplace(store, name + ".skip", n, cin, cout, 1, he_std(cin), spectral, rng);
}

template <class T>
Var<T> scresblock_forward(Graph<T>& g, const Var<T>& features, const SemanticVectorMap<T>& vectors,
                          ScResBlock<T>& block, const ForwardMode& mode) {
  const Shape fs = features.shape();
  if (fs.c != block.cin_) {
    throw ConfigError("scresblock: input has " + std::to_string(fs.c) + " channels, block expects " +
                      std::to_string(block.cin_));
  }
  if (block.cin_ != block.cout_ && !block.skip_) {
    throw ConfigError("scresblock: channel change without a skip projection");
  }
  Var<T> h = block.norm1_.forward(g, features, vectors, mode);
  h = activation(h, Activation::leaky_relu);
  h = scc_forward(h, vectors, block.conv1_.bind(g, mode));
  h = block.norm2_.forward(g, h, vectors, mode);
  h = activation(h, Activation::leaky_relu);
  h = scc_forward(h, vectors, block.conv2_.bind(g, mode));
  const Var<T> skip = block.skip_ ? scc_forward(features, vectors, block.skip_->bind(g, mode)) : features;
  return add(h, skip);
}

template <class T>
SvgNetwork<T>::SvgNetwork(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x5f6));
  const int ks = cfg_.kernel_size;
  std::int64_t cin = cfg_.classes;
  for (std::size_t t = 0; t < cfg_.svg_channels.size(); ++t) {
    const std::int64_t c = cfg_.svg_channels[t];
    const std::string base = "stage" + std::to_string(t + 1);
    first_.emplace_back(store_, base + ".conv_a", cin, c, ks, he_std(cin * ks * ks), cfg_.spectral_norm, true, rng);
    tap_.emplace_back(store_, base + ".conv_b", c, c, ks, he_std(c * ks * ks), cfg_.spectral_norm, true, rng);
    cin = c + cfg_.classes;
  }
  head1_ = ConvLayer<T>(store_, "head.conv_a", cin, cfg_.svg_head_channels, ks, he_std(cin * ks * ks),
                        cfg_.spectral_norm, true, rng);
  head2_ = ConvLayer<T>(store_, "head.conv_out", cfg_.svg_head_channels, 3, ks, kOutputInitStd, false, true, rng);
}

template <class T>
SvgOutput<T> SvgNetwork<T>::forward(Graph<T>& g, const Var<T>& layout, const ForwardMode& mode) {
  const Shape ls = layout.shape();
  if (ls.c != cfg_.classes || ls.h != cfg_.resolution || ls.w != cfg_.resolution) {
    throw ShapeError("svg: layout " + ls.str() + " does not match " + std::to_string(cfg_.classes) + " classes at " +
                     std::to_string(cfg_.resolution) + "x" + std::to_string(cfg_.resolution));
  }
  const std::size_t stages = cfg_.svg_channels.size();
  auto layout_at = [&](std::int64_t r) { return r == ls.h ? layout : resize_nearest(layout, r, r); };

  SvgOutput<T> out;
  Var<T> x = layout_at(cfg_.stage_resolution(0));
  Var<T> tap;
  for (std::size_t t = 0; t < stages; ++t) {
    Var<T> h = first_[t].forward(g, x, mode);
    h = activation(h, Activation::leaky_relu);
    tap = tap_[t].forward(g, h, mode);
    out.pyramid.push_back(semantic_gate(channel_pool_to_n(tap, cfg_.candidates), cfg_.gate, cfg_.temperature));
    if (t + 1 < stages) {
      const std::int64_t next = cfg_.stage_resolution(t + 1);
      Var<T> up = resize_bilinear(tap, next, next);
      x = activation(concat_channels<T>({up, layout_at(next)}), Activation::leaky_relu);
    }
  }
  Var<T> h = activation(concat_channels<T>({tap, layout}), Activation::leaky_relu);
  h = activation(head1_.forward(g, h, mode), Activation::leaky_relu);
  out.predicted_image = activation(head2_.forward(g, h, mode), Activation::hardtanh);
  return out;
}

template <class T>
SrgNetwork<T>::SrgNetwork(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x526));
  const std::int64_t grid = cfg_.initial_grid();
  const std::int64_t c0 = cfg_.srg_channels.front();
  const std::int64_t proj_out = c0 * grid * grid;
  {
    std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(cfg_.z_dim)));
    Tensor<T> w(Shape{proj_out, cfg_.z_dim, 1, 1});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(normal(rng));
    proj_w_ = &store_.add("proj.weight", std::move(w));
    proj_b_ = &store_.add("proj.bias", Tensor<T>(Shape{1, proj_out, 1, 1}));
  }
  std::int64_t cin = c0;
  for (std::size_t i = 0; i < cfg_.srg_channels.size(); ++i) {
    const std::int64_t cout = cfg_.srg_channels[i];
    blocks_.emplace_back(store_, "block" + std::to_string(i + 1), cin, cout, cfg_.candidates, cfg_.kernel_size,
                         cfg_.spectral_norm, rng);
    cin = cout;
  }
  out_ = ConvLayer<T>(store_, "conv_out", cin, 3, cfg_.kernel_size, kOutputInitStd, false, true, rng);
}

template <class T>
Var<T> SrgNetwork<T>::forward(Graph<T>& g, const Var<T>& z, const std::vector<SemanticVectorMap<T>>& pyramid,
                              const ForwardMode& mode) {
  const Shape zs = z.shape();
  if (zs.c * zs.h * zs.w != cfg_.z_dim) {
    throw ParameterError("srg: z has " + std::to_string(zs.c * zs.h * zs.w) + " features, expected z_dim " +
                         std::to_string(cfg_.z_dim));
  }
  if (pyramid.size() < cfg_.svg_channels.size()) {
    throw ParameterError("srg: pyramid has " + std::to_string(pyramid.size()) + " levels, expected " +
                         std::to_string(cfg_.svg_channels.size()));
  }
  const std::int64_t grid = cfg_.initial_grid();
  Var<T> x = linear(z, g.param(*proj_w_), std::optional<Var<T>>(g.param(*proj_b_)));
  x = reshape(x, Shape{zs.n, cfg_.srg_channels.front(), grid, grid});
  std::int64_t res = grid;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& level = pyramid[static_cast<std::size_t>(cfg_.vector_taps[i] - 1)];
    if (level.values.shape().n != zs.n) throw ShapeError("srg: pyramid batch does not match z batch");
    const SemanticVectorMap<T> v = resize_semantic_map(level, res, res);
    x = scresblock_forward(g, x, v, blocks_[i], mode);
    res *= 2;
    x = resize_bilinear(x, res, res);
  }
  return activation(out_.forward(g, x, mode), Activation::hardtanh);
}

template <class T>
Generator<T> build_from_config(const GeneratorConfig& cfg, std::uint64_t seed) {
  return Generator<T>{SvgNetwork<T>(cfg, seed), SrgNetwork<T>(cfg, seed)};
}

template <class T>
SvgOutput<T> svg_forward(Graph<T>& g, const Var<T>& layout, SvgNetwork<T>& svg, const ForwardMode& mode) {
  return svg.forward(g, layout, mode);
}

template <class T>
Var<T> srg_forward(Graph<T>& g, const Var<T>& z, const std::vector<SemanticVectorMap<T>>& pyramid,
                   SrgNetwork<T>& srg, const ForwardMode& mode) {
  return srg.forward(g, z, pyramid, mode);
}

#define SCGEN_INSTANTIATE_GENERATORS(T)                                                                         \
  template class ScResBlock<T>;                                                                                 \
  template Var<T> scresblock_forward(Graph<T>&, const Var<T>&, const SemanticVectorMap<T>&, ScResBlock<T>&,     \
                                     const ForwardMode&);                                                       \
  template class SvgNetwork<T>;                                                                                 \
  template class SrgNetwork<T>;                                                                                 \
  template Generator<T> build_from_config(const GeneratorConfig&, std::uint64_t);                               \
  template SvgOutput<T> svg_forward(Graph<T>&, const Var<T>&, SvgNetwork<T>&, const ForwardMode&);              \
  template Var<T> srg_forward(Graph<T>&, const Var<T>&, const std::vector<SemanticVectorMap<T>>&, SrgNetwork<T>&, \
                              const ForwardMode&);

SCGEN_INSTANTIATE_GENERATORS(float)
SCGEN_INSTANTIATE_GENERATORS(double)

}  // namespace scgen
