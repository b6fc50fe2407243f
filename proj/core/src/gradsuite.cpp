#include "scgen/gradsuite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "scgen/adversary.hpp"
#include "scgen/generators.hpp"
#include "scgen/gradcheck.hpp"
#include "scgen/random.hpp"

namespace scgen {

namespace {

using Rng = std::mt19937_64;
using D = double;

std::int64_t pick(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

Tensor<D> randn(Rng& rng, Shape s, double scale = 1.0) {
  Tensor<D> t = standard_normal<D>(s, rng());
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] *= scale;
  return t;
}

// Pushes values out of the +-margin band around each kink.
Tensor<D> avoid(Tensor<D> t, std::initializer_list<double> kinks, double margin = 1e-3) {
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    for (double k : kinks) {
      const double d = t[i] - k;
      if (std::abs(d) < margin) t[i] = k + (d < 0 ? -2.0 * margin : 2.0 * margin);
    }
  }
  return t;
}

// sum(y * R) with a fixed random R, so every output coordinate matters.
struct Projector {
  std::uint64_t seed;
  Var<D> operator()(const Var<D>& y) const {
    Graph<D>& g = *y.graph;
    return sum(mul(y, g.constant(standard_normal<D>(y.shape(), seed))));
  }
};

Tensor<D> softmax_rows(Rng& rng, Shape s) {
  Graph<D> g;
  return softmax_channels(g.constant(randn(rng, s))).value();
}

void merge(GradCheckResult& acc, const GradCheckResult& r) {
  if (r.max_rel_error > acc.max_rel_error || acc.worst_index < 0) {
    acc.max_rel_error = r.max_rel_error;
    acc.worst_index = r.worst_index;
    acc.analytic = r.analytic;
    acc.numeric = r.numeric;
  }
  acc.checked += r.checked;
}

using Check = std::function<GradCheckResult(Rng&, const GradCheckOptions&)>;

struct Op {
  std::string name;
  Check run;
};

GradCheckResult check_conv2d(Rng& rng, const GradCheckOptions& o) {
  const int ks = pick(rng, 0, 1) ? 3 : 1;
  const int stride = static_cast<int>(pick(rng, 1, 2));
  const int pad = pick(rng, 0, 1) ? ks / 2 : 0;
  const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 6), pick(rng, 4, 6)};
  const std::int64_t cout = pick(rng, 1, 3);
  const Tensor<D> x = randn(rng, xs);
  const Tensor<D> k = randn(rng, Shape{cout, xs.c, ks, ks});
  const Tensor<D> b = randn(rng, Shape{1, cout, 1, 1});
  const Projector p{rng()};
  GradCheckResult r;
  merge(r, finite_diff_check(
               [&](Graph<D>& g, const Var<D>& v) {
                 return p(conv2d(v, g.constant(k), std::optional<Var<D>>(g.constant(b)), stride, pad));
               },
               x, o));
  merge(r, finite_diff_check(
               [&](Graph<D>& g, const Var<D>& v) {
                 return p(conv2d(g.constant(x), v, std::optional<Var<D>>(g.constant(b)), stride, pad));
               },
               k, o));
  merge(r, finite_diff_check(
               [&](Graph<D>& g, const Var<D>& v) {
                 return p(conv2d(g.constant(x), g.constant(k), std::optional<Var<D>>(v), stride, pad));
               },
               b, o));
  return r;
}

GradCheckResult check_resize(Rng& rng, const GradCheckOptions& o, bool bilinear) {
  const Shape xs{pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 3, 6), pick(rng, 3, 6)};
  const std::int64_t oh = pick(rng, 2, 9);
  const std::int64_t ow = pick(rng, 2, 9);
  const Projector p{rng()};
  return finite_diff_check(
      [&](Graph<D>&, const Var<D>& v) {
        return p(bilinear ? resize_bilinear(v, oh, ow) : resize_nearest(v, oh, ow));
      },
      randn(rng, xs), o);
}

Check check_activation(Activation mode) {
  return [mode](Rng& rng, const GradCheckOptions& o) {
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
    const Tensor<D> x = avoid(randn(rng, xs, 1.5), {0.0, 1.0, -1.0});
    const Projector p{rng()};
    return finite_diff_check([&](Graph<D>&, const Var<D>& v) { return p(activation(v, mode)); }, x, o);
  };
}

GradCheckResult check_batch_moments(Rng& rng, const GradCheckOptions& o) {
  const Shape xs{pick(rng, 2, 3), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
  const Projector pm{rng()};
  const Projector ps{rng()};
  return finite_diff_check(
      [&](Graph<D>&, const Var<D>& v) {
        auto [m, s] = batch_moments(v);
        return add(pm(m), ps(s));
      },
      randn(rng, xs), o);
}

Check check_gate(GateMode mode) {
  return [mode](Rng& rng, const GradCheckOptions& o) {
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 2, 4), pick(rng, 2, 4)};
    const double taus[] = {kDefaultTemperature, 0.5, 1.0};
    const double tau = mode == GateMode::softmax ? taus[pick(rng, 0, 2)] : 1.0;
    const double scale = mode == GateMode::softmax ? 1.0 / tau : 1.5;
    const Tensor<D> x = avoid(randn(rng, xs, scale), {0.0});
    const Projector p{rng()};
    return finite_diff_check(
        [&](Graph<D>&, const Var<D>& v) { return p(semantic_gate(v, mode, tau).values); }, x, o);
  };
}

GradCheckResult check_scc(Rng& rng, const GradCheckOptions& o) {
  const std::int64_t n = pick(rng, 1, 3);
  const int ks = pick(rng, 0, 1) ? 3 : 1;
  const Shape fs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 3, 5), pick(rng, 3, 5)};
  const std::int64_t cout = pick(rng, 1, 3);
  const Tensor<D> f = randn(rng, fs);
  const Tensor<D> vv = softmax_rows(rng, Shape{fs.n, n, fs.h, fs.w});
  std::vector<Tensor<D>> ks_t;
  std::vector<Tensor<D>> bs_t;
  for (std::int64_t i = 0; i < n; ++i) {
    ks_t.push_back(randn(rng, Shape{cout, fs.c, ks, ks}));
    bs_t.push_back(randn(rng, Shape{1, cout, 1, 1}));
  }
  const auto j = static_cast<std::size_t>(pick(rng, 0, n - 1));
  const Projector p{rng()};
  // which: 0 = F, 1 = V, 2 = kernel j, 3 = bias j
  auto build = [&](int which) {
    return [&, which](Graph<D>& g, const Var<D>& leaf) {
      ConvCandidates<D> bank;
      for (std::size_t i = 0; i < ks_t.size(); ++i) {
        bank.kernels.push_back(which == 2 && i == j ? leaf : g.constant(ks_t[i]));
        bank.biases.push_back(which == 3 && i == j ? leaf : g.constant(bs_t[i]));
      }
      SemanticVectorMap<D> v{which == 1 ? leaf : g.constant(vv), GateMode::softmax, 1.0};
      return p(scc_forward(which == 0 ? leaf : g.constant(f), v, bank));
    };
  };
  GradCheckResult r;
  merge(r, finite_diff_check(build(0), f, o));
  merge(r, finite_diff_check(build(1), vv, o));
  merge(r, finite_diff_check(build(2), ks_t[j], o));
  merge(r, finite_diff_check(build(3), bs_t[j], o));
  return r;
}

GradCheckResult check_scn(Rng& rng, const GradCheckOptions& o) {
  const std::int64_t n = pick(rng, 1, 3);
  const Shape fs{pick(rng, 2, 3), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
  const Tensor<D> f = randn(rng, fs);
  const Tensor<D> vv = softmax_rows(rng, Shape{fs.n, n, fs.h, fs.w});
  const Tensor<D> means = randn(rng, Shape{n, fs.c, 1, 1}, 0.5);
  const Tensor<D> scales = randn(rng, Shape{n, fs.c, 1, 1}, 0.5);
  Tensor<D> rm(Shape{1, fs.c, 1, 1});
  Tensor<D> rv(Shape{1, fs.c, 1, 1}, 1.0);
  Tensor<D> tracked(Shape{1, 1, 1, 1});
  const RunningStats<D> running{&rm, &rv, &tracked};
  const Projector p{rng()};
  auto build = [&](int which) {
    return [&, which](Graph<D>& g, const Var<D>& leaf) {
      SemanticVectorMap<D> v{which == 1 ? leaf : g.constant(vv), GateMode::softmax, 1.0};
      return p(scn_forward(which == 0 ? leaf : g.constant(f), v, which == 2 ? leaf : g.constant(means),
                           which == 3 ? leaf : g.constant(scales), ForwardMode::frozen(), running));
    };
  };
  GradCheckResult r;
  merge(r, finite_diff_check(build(0), f, o));
  merge(r, finite_diff_check(build(1), vv, o));
  merge(r, finite_diff_check(build(2), means, o));
  merge(r, finite_diff_check(build(3), scales, o));
  return r;
}

GradCheckResult check_spectral(Rng& rng, const GradCheckOptions& o) {
  const std::int64_t rows = pick(rng, 2, 5);
  const Shape ws{rows, pick(rng, 1, 3), pick(rng, 1, 2), pick(rng, 1, 2)};
  const Tensor<D> w = randn(rng, ws);
  Tensor<D> u = randn(rng, Shape{rows, 1, 1, 1});
  Tensor<D> v = randn(rng, Shape{ws.c * ws.h * ws.w, 1, 1, 1});
  {
    // Converge the persistent vectors first; the check itself holds them fixed.
    Graph<D> g;
    spectral_normalize(g.constant(w), u, v, 30);
  }
  const Projector p{rng()};
  return finite_diff_check(
      [&](Graph<D>&, const Var<D>& leaf) {
        Tensor<D> uu = u;
        Tensor<D> vv = v;
        return p(spectral_normalize(leaf, uu, vv, 0));
      },
      w, o);
}

GradCheckResult check_channel_pool(Rng& rng, const GradCheckOptions& o) {
  const Shape xs{pick(rng, 1, 2), pick(rng, 1, 7), pick(rng, 2, 3), pick(rng, 2, 3)};
  const std::int64_t n = pick(rng, 1, xs.c);
  const Projector p{rng()};
  return finite_diff_check([&](Graph<D>&, const Var<D>& v) { return p(channel_pool_to_n(v, n)); }, randn(rng, xs),
                           o);
}

GradCheckResult check_linear(Rng& rng, const GradCheckOptions& o) {
  const std::int64_t in = pick(rng, 1, 5);
  const std::int64_t out = pick(rng, 1, 5);
  const Tensor<D> x = randn(rng, Shape{pick(rng, 1, 3), in, 1, 1});
  const Tensor<D> w = randn(rng, Shape{out, in, 1, 1});
  const Tensor<D> b = randn(rng, Shape{1, out, 1, 1});
  const Projector p{rng()};
  GradCheckResult r;
  merge(r, finite_diff_check(
               [&](Graph<D>& g, const Var<D>& v) {
                 return p(linear(v, g.constant(w), std::optional<Var<D>>(g.constant(b))));
               },
               x, o));
  merge(r, finite_diff_check(
               [&](Graph<D>& g, const Var<D>& v) {
                 return p(linear(g.constant(x), v, std::optional<Var<D>>(g.constant(b))));
               },
               w, o));
  return r;
}

// Runs a few power iterations so spectral estimates are sane before checks
// that keep them fixed.
template <class Fn>
void warm_spectral(Fn forward) {
  for (int i = 0; i < 20; ++i) {
    Graph<D> g;
    forward(g, ForwardMode{true, NormStats::batch, false});
  }
}

void randomize_norm_tables(ParamStore<D>& store, Rng& rng) {
  for (auto* prm : store.trainable()) {
    const auto& name = prm->name;
    if (name.size() > 6 && (name.ends_with(".means") || name.ends_with(".scales"))) {
      prm->value = randn(rng, prm->value.shape(), 0.3);
    }
  }
}

Parameter<D>& random_trainable(ParamStore<D>& store, Rng& rng) {
  auto params = store.trainable();
  return *params[static_cast<std::size_t>(pick(rng, 0, static_cast<std::int64_t>(params.size()) - 1))];
}

GradCheckResult check_scresblock(Rng& rng, const GradCheckOptions& o) {
  const std::int64_t cin = pick(rng, 2, 3);
  const std::int64_t cout = pick(rng, 2, 3);
  const std::int64_t n = pick(rng, 1, 3);
  ParamStore<D> store("blk.");
  Rng init(rng());
  ScResBlock<D> block(store, "b", cin, cout, n, 3, true, init);
  randomize_norm_tables(store, rng);
  const Shape fs{2, cin, 4, 4};
  const Tensor<D> f = randn(rng, fs);
  const Tensor<D> vv = softmax_rows(rng, Shape{fs.n, n, fs.h, fs.w});
  const Projector p{rng()};
  auto fwd = [&](Graph<D>& g, const Var<D>& x, const ForwardMode& mode) {
    SemanticVectorMap<D> v{g.constant(vv), GateMode::softmax, 1.0};
    return p(scresblock_forward(g, x, v, block, mode));
  };
  warm_spectral([&](Graph<D>& g, const ForwardMode& m) { fwd(g, g.constant(f), m); });
  GradCheckResult r;
  merge(r, finite_diff_check([&](Graph<D>& g, const Var<D>& x) { return fwd(g, x, ForwardMode::frozen()); }, f, o));
  merge(r, finite_diff_check([&](Graph<D>& g) { return fwd(g, g.constant(f), ForwardMode::frozen()); },
                             random_trainable(store, rng), o));
  return r;
}

std::vector<Var<D>> leaves_or_constants(Graph<D>& g, const std::vector<Tensor<D>>& ts, std::size_t leaf_index,
                                        const Var<D>& leaf) {
  std::vector<Var<D>> out;
  for (std::size_t i = 0; i < ts.size(); ++i) out.push_back(i == leaf_index ? leaf : g.constant(ts[i]));
  return out;
}

GradCheckResult check_hinge_d(Rng& rng, const GradCheckOptions& o) {
  std::vector<Tensor<D>> real;
  std::vector<Tensor<D>> fake;
  for (std::int64_t s = 0; s < 2; ++s) {
    const Shape ss{pick(rng, 1, 2), 1, 3 - s, 3 - s};
    real.push_back(avoid(randn(rng, ss, 1.5), {1.0}));
    fake.push_back(avoid(randn(rng, ss, 1.5), {-1.0}));
  }
  GradCheckResult r;
  for (std::size_t s = 0; s < 2; ++s) {
    merge(r, finite_diff_check(
                 [&](Graph<D>& g, const Var<D>& v) {
                   return hinge_d(leaves_or_constants(g, real, s, v), leaves_or_constants(g, fake, 9, v));
                 },
                 real[s], o));
    merge(r, finite_diff_check(
                 [&](Graph<D>& g, const Var<D>& v) {
                   return hinge_d(leaves_or_constants(g, real, 9, v), leaves_or_constants(g, fake, s, v));
                 },
                 fake[s], o));
  }
  return r;
}

GradCheckResult check_hinge_g(Rng& rng, const GradCheckOptions& o) {
  std::vector<Tensor<D>> fake{randn(rng, Shape{2, 1, 3, 3}), randn(rng, Shape{2, 1, 2, 2})};
  const auto s = static_cast<std::size_t>(pick(rng, 0, 1));
  return finite_diff_check(
      [&](Graph<D>& g, const Var<D>& v) { return hinge_g(leaves_or_constants(g, fake, s, v)); }, fake[s], o);
}

FeatureExtractor<D> tiny_extractor(Rng& rng, bool relu = true) {
  FeatureExtractorConfig cfg;
  cfg.channels = {2, 3, 3, 4, 4};
  cfg.seed = rng();
  cfg.relu = relu;
  return FeatureExtractor<D>(cfg);
}

GradCheckResult check_perceptual(Rng& rng, const GradCheckOptions& o) {
  const FeatureExtractor<D> phi = tiny_extractor(rng);
  const Shape is{pick(rng, 1, 2), 3, 8, 8};
  const Tensor<D> fake = randn(rng, is, 0.5);
  const Tensor<D> real = randn(rng, is, 0.5);
  return finite_diff_check(
      [&](Graph<D>& g, const Var<D>& v) { return perceptual_loss(v, g.constant(real), phi); }, fake, o);
}

GradCheckResult check_feature_matching(Rng& rng, const GradCheckOptions& o) {
  std::vector<std::vector<Tensor<D>>> fake(2);
  std::vector<std::vector<Tensor<D>>> real(2);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::int64_t l = 0; l < 2; ++l) {
      const Shape fs{2, pick(rng, 1, 3), 4 >> l, 4 >> l};
      fake[s].push_back(randn(rng, fs));
      real[s].push_back(randn(rng, fs));
    }
  }
  const auto si = static_cast<std::size_t>(pick(rng, 0, 1));
  const auto li = static_cast<std::size_t>(pick(rng, 0, 1));
  return finite_diff_check(
      [&](Graph<D>& g, const Var<D>& v) {
        std::vector<std::vector<Var<D>>> fv(2);
        std::vector<std::vector<Var<D>>> rv(2);
        for (std::size_t s = 0; s < 2; ++s) {
          for (std::size_t l = 0; l < 2; ++l) {
            fv[s].push_back(s == si && l == li ? v : g.constant(fake[s][l]));
            rv[s].push_back(g.constant(real[s][l]));
          }
        }
        return feature_matching_loss(fv, rv);
      },
      fake[si][li], o);
}

Check check_regression(int mode) {
  return [mode](Rng& rng, const GradCheckOptions& o) {
    const Shape is{pick(rng, 1, 2), 3, 8, 8};
    const Tensor<D> pred = randn(rng, is, 0.5);
    const Tensor<D> real = randn(rng, is, 0.5);
    if (mode == 0) {
      const FeatureExtractor<D> phi = tiny_extractor(rng);
      return finite_diff_check(
          [&](Graph<D>& g, const Var<D>& v) { return svg_regression_loss_features(v, g.constant(real), phi); }, pred,
          o);
    }
    return finite_diff_check(
        [&](Graph<D>& g, const Var<D>& v) { return svg_regression_loss(v, g.constant(real), mode); }, pred, o);
  };
}

GradCheckResult check_total_loss(Rng& rng, const GradCheckOptions& o) {
  LossWeights w;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  w.perceptual = u(rng);
  w.gan = u(rng);
  w.feature_matching = u(rng);
  w.regression = u(rng);
  const Tensor<D> x = randn(rng, Shape{1, 2, 2, 2});
  return finite_diff_check(
      [&](Graph<D>&, const Var<D>& v) {
        GeneratorLossTerms<D> t;
        t.perceptual = mean(square(v));
        t.gan = mul_scalar(mean(v), D(-1));
        t.feature_matching = mean(activation(v, Activation::sigmoid));
        t.regression = sum(activation(v, Activation::tanh));
        return total_generator_loss(t, w);
      },
      x, o);
}

GradCheckResult check_discriminator(Rng& rng, const GradCheckOptions& o) {
  DiscriminatorConfig dc;
  dc.channels = {3, 4};
  dc.scales = 2;
  const std::int64_t classes = 3;
  Discriminator<D> disc(dc, classes, rng());
  const Tensor<D> image = randn(rng, Shape{2, 3, 8, 8}, 0.5);
  Tensor<D> layout(Shape{2, classes, 8, 8});
  for (std::int64_t b = 0; b < 2; ++b) {
    for (std::int64_t y = 0; y < 8; ++y) {
      for (std::int64_t x = 0; x < 8; ++x) layout.at(b, pick(rng, 0, classes - 1), y, x) = 1.0;
    }
  }
  const Projector p0{rng()};
  const Projector p1{rng()};
  auto fwd = [&](Graph<D>& g, const Var<D>& img, const ForwardMode& m) {
    auto out = disc.forward(g, img, g.constant(layout), m);
    return add(p0(out.scores[0]), p1(out.scores[1]));
  };
  warm_spectral([&](Graph<D>& g, const ForwardMode& m) { fwd(g, g.constant(image), m); });
  GradCheckResult r;
  merge(r, finite_diff_check([&](Graph<D>& g, const Var<D>& x) { return fwd(g, x, ForwardMode::frozen()); }, image,
                             o));
  merge(r, finite_diff_check([&](Graph<D>& g) { return fwd(g, g.constant(image), ForwardMode::frozen()); },
                             random_trainable(disc.params(), rng), o));
  return r;
}

GradCheckResult check_end_to_end(Rng& rng, const GradCheckOptions& o) {
  GeneratorConfig cfg;
  cfg.svg_channels = {4, 4};
  cfg.svg_head_channels = 3;
  cfg.srg_channels = {4, 3};
  cfg.vector_taps = {1, 2};
  cfg.candidates = 2;
  cfg.temperature = 1.0;
  cfg.z_dim = 3;
  cfg.resolution = 8;
  cfg.classes = 3;
  Generator<D> gen = build_from_config<D>(cfg, rng());
  randomize_norm_tables(gen.srg.params(), rng);
  const std::int64_t b = 2;
  const Tensor<D> z = randn(rng, Shape{b, cfg.z_dim, 1, 1});
  Tensor<D> layout(Shape{b, cfg.classes, cfg.resolution, cfg.resolution});
  for (std::int64_t s = 0; s < b; ++s) {
    for (std::int64_t y = 0; y < cfg.resolution; ++y) {
      for (std::int64_t x = 0; x < cfg.resolution; ++x) layout.at(s, pick(rng, 0, cfg.classes - 1), y, x) = 1.0;
    }
  }
  const Projector pi{rng()};
  const Projector pp{rng()};
  auto fwd = [&](Graph<D>& g, const Var<D>& zv, const ForwardMode& m) {
    SvgOutput<D> svg = gen.svg.forward(g, g.constant(layout), m);
    return add(pi(gen.srg.forward(g, zv, svg.pyramid, m)), pp(svg.predicted_image));
  };
  warm_spectral([&](Graph<D>& g, const ForwardMode& m) { fwd(g, g.constant(z), m); });
  GradCheckResult r;
  merge(r, finite_diff_check([&](Graph<D>& g, const Var<D>& zv) { return fwd(g, zv, ForwardMode::frozen()); }, z, o));
  auto graph_obj = [&](Graph<D>& g) { return fwd(g, g.constant(z), ForwardMode::frozen()); };
  merge(r, finite_diff_check(graph_obj, random_trainable(gen.svg.params(), rng), o));
  merge(r, finite_diff_check(graph_obj, random_trainable(gen.srg.params(), rng), o));
  return r;
}

std::vector<Op> registry() {
  return {
      {"conv2d", check_conv2d},
      {"resize_bilinear", [](Rng& r, const GradCheckOptions& o) { return check_resize(r, o, true); }},
      {"resize_nearest", [](Rng& r, const GradCheckOptions& o) { return check_resize(r, o, false); }},
      {"activation.leaky_relu", check_activation(Activation::leaky_relu)},
      {"activation.relu", check_activation(Activation::relu)},
      {"activation.tanh", check_activation(Activation::tanh)},
      {"activation.sigmoid", check_activation(Activation::sigmoid)},
      {"activation.hardtanh", check_activation(Activation::hardtanh)},
      {"batch_moments", check_batch_moments},
      {"semantic_gate.softmax", check_gate(GateMode::softmax)},
      {"semantic_gate.sigmoid", check_gate(GateMode::sigmoid)},
      {"semantic_gate.tanh", check_gate(GateMode::tanh)},
      {"semantic_gate.relu", check_gate(GateMode::relu)},
      {"channel_pool_to_n", check_channel_pool},
      {"linear", check_linear},
      {"spectral_normalize", check_spectral},
      {"scc_forward", check_scc},
      {"scn_forward", check_scn},
      {"scresblock", check_scresblock},
      {"discriminator", check_discriminator},
      {"loss.hinge_d", check_hinge_d},
      {"loss.hinge_g", check_hinge_g},
      {"loss.perceptual", check_perceptual},
      {"loss.feature_matching", check_feature_matching},
      {"loss.svg_regression_l1", check_regression(1)},
      {"loss.svg_regression_l2", check_regression(2)},
      {"loss.svg_regression_features", check_regression(0)},
      {"loss.total_generator", check_total_loss},
      {"end_to_end", check_end_to_end},
  };
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace

std::vector<std::string> gradient_suite_ops() {
  std::vector<std::string> out;
  for (const auto& op : registry()) out.push_back(op.name);
  return out;
}

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts) {
  std::vector<GradSuiteEntry> out;
  for (const auto& op : registry()) {
    if (!opts.only.empty() && op.name.find(opts.only) == std::string::npos) continue;
    GradCheckResult acc;
    for (int i = 0; i < opts.instances; ++i) {
      Rng rng(derive_seed(opts.seed, name_hash(op.name), static_cast<std::uint64_t>(i)));
      GradCheckOptions go;
      go.max_coords = opts.coords_per_instance;
      go.seed = rng();
      merge(acc, op.run(rng, go));
    }
    GradSuiteEntry e;
    e.op = op.name;
    e.instances = opts.instances;
    e.coordinates = acc.checked;
    e.max_rel_error = acc.max_rel_error;
    e.worst_analytic = acc.analytic;
    e.worst_numeric = acc.numeric;
    e.passed = acc.max_rel_error <= opts.tolerance;
    out.push_back(e);
  }
  return out;
}

}  // namespace scgen
