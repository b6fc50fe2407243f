#include "scgen/train.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "scgen/random.hpp"
#include "scgen/tensor_io.hpp"

namespace scgen {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'C', 'G', 'C'};
constexpr std::uint64_t kPhaseD = 1;
constexpr std::uint64_t kPhaseG = 2;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void append(std::vector<Parameter<float>*>& out, std::vector<Parameter<float>*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_g > 0.0)) throw ConfigError("train.lr_g: must be > 0");
  if (!(lr_d >= lr_g)) throw ConfigError("train.lr_d: must be >= lr_g");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2: must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps: must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (steps < 0) throw ConfigError("train.steps: must be >= 0");
  if (resolved_decay_start() > steps) throw ConfigError("train.decay_start: must not exceed train.steps");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every: must be >= 0");
  if (log_every < 1) throw ConfigError("train.log_every: must be >= 1");
  loss.validate();
  generator.validate();
}

template <class T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr, const AdamHyper& hyper) {
  for (const auto* p : params) {
    if (!p->grad.all_finite()) throw ValidityError("adam_step: non-finite gradient in " + p->name);
    require_shape(p->grad.shape(), p->value.shape(), "adam_step gradient of " + p->name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (auto* p : params) {
    auto it = state.moments.find(p->name);
    if (it == state.moments.end()) {
      it = state.moments.emplace(p->name, typename AdamState<T>::Moments{Tensor<T>(p->value.shape()),
                                                                         Tensor<T>(p->value.shape())}).first;
    }
    auto& mo = it->second;
    require_shape(mo.m.shape(), p->value.shape(), "adam_step moments of " + p->name);
    T* w = p->value.data();
    const T* g = p->grad.data();
    T* m = mo.m.data();
    T* v = mo.v.data();
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      const double gi = g[i];
      const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

template void adam_step(const std::vector<Parameter<float>*>&, AdamState<float>&, double, const AdamHyper&);
template void adam_step(const std::vector<Parameter<double>*>&, AdamState<double>&, double, const AdamHyper&);

std::pair<double, double> lr_at(std::int64_t step, const TrainConfig& cfg) {
  const std::int64_t start = cfg.resolved_decay_start();
  if (step < start) return {cfg.lr_g, cfg.lr_d};
  if (step >= cfg.steps) return {0.0, 0.0};
  const double frac = static_cast<double>(cfg.steps - step) / static_cast<double>(cfg.steps - start);
  return {cfg.lr_g * frac, cfg.lr_d * frac};
}

std::string LossReport::csv_header() {
  return "step,lr_g,lr_d,d_hinge,g_gan,g_feature_matching,g_perceptual,g_regression,g_total";
}

std::string LossReport::csv_row() const {
  return std::to_string(step) + "," + fmt_double(lr_g) + "," + fmt_double(lr_d) + "," + fmt_double(d_hinge) + "," +
         fmt_double(g_gan) + "," + fmt_double(g_feature_matching) + "," + fmt_double(g_perceptual) + "," +
         fmt_double(g_regression) + "," + fmt_double(g_total);
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter out;
  out.bytes(std::string(kCheckpointMagic, 4));
  out.u8(Checkpoint::kVersion);
  out.u64(static_cast<std::uint64_t>(ckpt.step));
  out.u32(static_cast<std::uint32_t>(ckpt.config_json.size()));
  out.bytes(ckpt.config_json);
  out.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    out.u32(static_cast<std::uint32_t>(name.size()));
    out.bytes(name);
  }
  for (const auto& [name, t] : ckpt.tensors) write_scgt(out, t);
  return out.buffer();
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (in.bytes(4) != std::string(kCheckpointMagic, 4)) in.fail("bad checkpoint magic (expected SCGC)");
  const auto version = in.u8();
  if (version != Checkpoint::kVersion) in.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.step = static_cast<std::int64_t>(in.u64());
  const auto cfg_len = in.u32();
  ckpt.config_json = in.bytes(cfg_len);
  const auto count = in.u32();
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.u32();
    names.push_back(in.bytes(len));
    if (!seen.insert(names.back()).second) in.fail("duplicate tensor name '" + names.back() + "'");
  }
  for (std::uint32_t i = 0; i < count; ++i) ckpt.tensors.emplace_back(names[i], read_scgt<float>(in));
  if (!in.at_end()) in.fail("trailing bytes after the last tensor");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file_bytes(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path), path); }

std::vector<Parameter<float>*> generator_parameters(Generator<float>& gen) {
  std::vector<Parameter<float>*> out = gen.svg.params().all();
  append(out, gen.srg.params().all());
  return out;
}

std::vector<Parameter<float>*> generator_trainable(Generator<float>& gen) {
  std::vector<Parameter<float>*> out = gen.svg.params().trainable();
  append(out, gen.srg.params().trainable());
  return out;
}

namespace {

void restore_params(const std::vector<Parameter<float>*>& params, const Checkpoint& ckpt) {
  for (auto* p : params) {
    const Tensor<float>* t = ckpt.find(p->name);
    if (t == nullptr) throw FormatError("checkpoint: missing tensor '" + p->name + "'");
    if (!(t->shape() == p->value.shape())) {
      throw FormatError("checkpoint: tensor '" + p->name + "' is " + t->shape().str() + ", model expects " +
                        p->value.shape().str());
    }
    p->value = *t;
  }
}

}  // namespace

void load_generator(Generator<float>& gen, const Checkpoint& ckpt) { restore_params(generator_parameters(gen), ckpt); }

Trainer::Trainer(const TrainConfig& cfg, std::string config_snapshot)
    : cfg_((cfg.validate(), cfg)),
      config_snapshot_(std::move(config_snapshot)),
      gen_(build_from_config<float>(cfg.generator, cfg.seed)),
      disc_(cfg.discriminator, cfg.generator.classes, derive_seed(cfg.seed, 0xd)),
      phi_(cfg.perceptual) {}

Tensor<float> Trainer::noise(std::int64_t step, std::uint64_t phase) const {
  return standard_normal<float>(Shape{cfg_.batch_size, cfg_.generator.z_dim, 1, 1},
                                derive_seed(cfg_.seed, 0x2, static_cast<std::uint64_t>(step), phase));
}

void Trainer::zero_all_grads() {
  gen_.svg.params().zero_grad();
  gen_.srg.params().zero_grad();
  disc_.params().zero_grad();
}

void Trainer::assert_finite(const char* phase) const {
  if (!cfg_.check_finite) return;
  for (const auto* store : {&gen_.svg.params(), &gen_.srg.params()}) {
    for (const auto* p : store->all()) {
      if (!p->value.all_finite()) {
        throw ValidityError(std::string(phase) + " step " + std::to_string(step_) + ": parameter " + p->name +
                            " became non-finite");
      }
    }
  }
  for (const auto* p : disc_.params().all()) {
    if (!p->value.all_finite()) {
      throw ValidityError(std::string(phase) + " step " + std::to_string(step_) + ": parameter " + p->name +
                          " became non-finite");
    }
  }
}

double Trainer::discriminator_phase(const Tensor<float>& layout, const Tensor<float>& image, double lr) {
  if (layout.shape().n != cfg_.batch_size) {
    throw ShapeError("train: batch has " + std::to_string(layout.shape().n) + " samples, config batch_size is " +
                     std::to_string(cfg_.batch_size));
  }
  zero_all_grads();
  Graph<float> g;
  g.freeze(gen_.svg.params());
  g.freeze(gen_.srg.params());
  const Var<float> s = g.constant(layout);
  const Var<float> real = g.constant(image);
  const auto train = ForwardMode::training();
  SvgOutput<float> svg = gen_.svg.forward(g, s, train);
  const Var<float> fake = detach(gen_.srg.forward(g, g.constant(noise(step_, kPhaseD)), svg.pyramid, train));

  auto real_out = disc_.forward(g, real, s, train);
  auto fake_out = disc_.forward(g, fake, s, ForwardMode::frozen());
  const Var<float> loss = hinge_d(real_out.scores, fake_out.scores);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    throw ValidityError("train step " + std::to_string(step_) + ": discriminator hinge loss is not finite");
  }
  g.backward(loss);
  adam_step(disc_.params().trainable(), adam_d_, lr, AdamHyper{cfg_.beta1, cfg_.beta2, cfg_.adam_eps});
  assert_finite("discriminator");
  return value;
}

GeneratorLossTerms<float> Trainer::generator_phase_terms(Graph<float>& g, const Tensor<float>& layout,
                                                         const Tensor<float>& image) {
  g.freeze(disc_.params());
  const Var<float> s = g.constant(layout);
  const Var<float> real = g.constant(image);
  const auto train = ForwardMode::training();
  SvgOutput<float> svg = gen_.svg.forward(g, s, train);
  const Var<float> fake = gen_.srg.forward(g, g.constant(noise(step_, kPhaseG)), svg.pyramid, train);

  auto fake_out = disc_.forward(g, fake, s, ForwardMode::frozen());
  auto real_out = disc_.forward(g, real, s, ForwardMode::frozen());
  GeneratorLossTerms<float> terms;
  terms.gan = hinge_g(fake_out.scores);
  terms.feature_matching = feature_matching_loss(fake_out.features, real_out.features);
  terms.perceptual = perceptual_loss(fake, real, phi_);
  terms.regression = cfg_.loss.regression_in_feature_space
                         ? svg_regression_loss_features(svg.predicted_image, real, phi_)
                         : svg_regression_loss(svg.predicted_image, real, cfg_.loss.norm_p);
  return terms;
}

LossReport Trainer::generator_phase(const Tensor<float>& layout, const Tensor<float>& image, double lr) {
  zero_all_grads();
  Graph<float> g;
  const auto terms = generator_phase_terms(g, layout, image);
  Var<float> total;
  try {
    total = total_generator_loss(terms, cfg_.loss);
  } catch (const ValidityError& e) {
    throw ValidityError("train step " + std::to_string(step_) + ": " + e.what());
  }
  g.backward(total);
  adam_step(generator_trainable(gen_), adam_g_, lr, AdamHyper{cfg_.beta1, cfg_.beta2, cfg_.adam_eps});
  assert_finite("generator");
  LossReport r;
  r.g_gan = terms.gan.value()[0];
  r.g_feature_matching = terms.feature_matching.value()[0];
  r.g_perceptual = terms.perceptual.value()[0];
  r.g_regression = terms.regression.value()[0];
  r.g_total = total.value()[0];
  return r;
}

LossReport Trainer::train_step(const Tensor<float>& layout, const Tensor<float>& image) {
  const auto [lr_g, lr_d] = lr_at(step_, cfg_);
  const double d = discriminator_phase(layout, image, lr_d);
  LossReport r = generator_phase(layout, image, lr_g);
  r.step = step_;
  r.lr_g = lr_g;
  r.lr_d = lr_d;
  r.d_hinge = d;
  ++step_;
  return r;
}

namespace {

void put_adam(Checkpoint& ckpt, const std::string& tag, const AdamState<float>& st) {
  for (const auto& [name, mo] : st.moments) {
    ckpt.tensors.emplace_back("adam." + tag + ".m/" + name, mo.m);
    ckpt.tensors.emplace_back("adam." + tag + ".v/" + name, mo.v);
  }
  // float holds integers exactly up to 2^24 steps; split to stay exact beyond.
  Tensor<float> counter(Shape{1, 2, 1, 1});
  counter[0] = static_cast<float>(st.step >> 24);
  counter[1] = static_cast<float>(st.step & 0xffffff);
  ckpt.tensors.emplace_back("adam." + tag + ".step", counter);
}

AdamState<float> get_adam(const Checkpoint& ckpt, const std::string& tag,
                          const std::vector<Parameter<float>*>& trainable) {
  AdamState<float> st;
  const Tensor<float>* counter = ckpt.find("adam." + tag + ".step");
  if (counter == nullptr || counter->numel() != 2) throw FormatError("checkpoint: missing adam." + tag + ".step");
  st.step = (static_cast<std::int64_t>((*counter)[0]) << 24) + static_cast<std::int64_t>((*counter)[1]);
  for (const auto* p : trainable) {
    const Tensor<float>* m = ckpt.find("adam." + tag + ".m/" + p->name);
    const Tensor<float>* v = ckpt.find("adam." + tag + ".v/" + p->name);
    if ((m == nullptr) != (v == nullptr)) throw FormatError("checkpoint: incomplete Adam moments for " + p->name);
    if (m == nullptr) continue;
    if (!(m->shape() == p->value.shape()) || !(v->shape() == p->value.shape())) {
      throw FormatError("checkpoint: Adam moments of " + p->name + " have the wrong shape");
    }
    st.moments.emplace(p->name, AdamState<float>::Moments{*m, *v});
  }
  return st;
}

}  // namespace

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.step = step_;
  ckpt.config_json = config_snapshot_;
  auto& self = const_cast<Trainer&>(*this);
  for (const auto* p : generator_parameters(self.gen_)) ckpt.tensors.emplace_back(p->name, p->value);
  for (const auto* p : self.disc_.params().all()) ckpt.tensors.emplace_back(p->name, p->value);
  put_adam(ckpt, "g", adam_g_);
  put_adam(ckpt, "d", adam_d_);
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  restore_params(generator_parameters(gen_), ckpt);
  restore_params(disc_.params().all(), ckpt);
  adam_g_ = get_adam(ckpt, "g", generator_trainable(gen_));
  adam_d_ = get_adam(ckpt, "d", disc_.params().trainable());
  step_ = ckpt.step;
}

}  // namespace scgen
