#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scgen/adversary.hpp"
#include "scgen/generators.hpp"

namespace scgen {

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t batch_size = 8;
  std::int64_t steps = 500;
  std::int64_t decay_start = -1;  // -1: half of `steps`
  std::uint64_t seed = 17;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::int64_t log_every = 1;
  bool check_finite = false;  // assert parameter finiteness after every update
  LossWeights loss;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  FeatureExtractorConfig perceptual;

  void validate() const;
  std::int64_t resolved_decay_start() const { return decay_start < 0 ? steps / 2 : decay_start; }
};

// Adam moments keyed by full parameter name.
template <class T>
struct AdamState {
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
};

struct AdamHyper {
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over `params` using their accumulated grads. A
// non-finite gradient aborts before any parameter is touched.
template <class T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr, const AdamHyper& hyper = {});

// (lr_g, lr_d) for a step: constant until the decay start, then linear to 0.
std::pair<double, double> lr_at(std::int64_t step, const TrainConfig& cfg);

struct LossReport {
  std::int64_t step = 0;
  double lr_g = 0;
  double lr_d = 0;
  double d_hinge = 0;
  double g_gan = 0;
  double g_feature_matching = 0;
  double g_perceptual = 0;
  double g_regression = 0;
  double g_total = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

// Name table + SCGT payloads; see docs/FORMATS.md.
struct Checkpoint {
  static constexpr std::uint8_t kVersion = 1;
  std::int64_t step = 0;
  std::string config_json;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source = "<memory>");
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Owns generator, discriminator, extractor and optimizer state.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg, std::string config_snapshot = "");

  // One D update followed by one G update on a (layout, image) batch; images
  // in [-1, 1], layouts one-hot.
  LossReport train_step(const Tensor<float>& layout, const Tensor<float>& image);

  // The two halves of train_step, exposed for gradient-isolation checks.
  // Both leave the gradients of the last backward pass in place.
  double discriminator_phase(const Tensor<float>& layout, const Tensor<float>& image, double lr);
  GeneratorLossTerms<float> generator_phase_terms(Graph<float>& g, const Tensor<float>& layout,
                                                  const Tensor<float>& image);
  LossReport generator_phase(const Tensor<float>& layout, const Tensor<float>& image, double lr);

  std::int64_t step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Generator<float>& generator() { return gen_; }
  Discriminator<float>& discriminator() { return disc_; }
  const FeatureExtractor<float>& extractor() const { return phi_; }

  // Per-step noise: N(0, 1), keyed by (seed, step, phase).
  Tensor<float> noise(std::int64_t step, std::uint64_t phase) const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  void zero_all_grads();
  void assert_finite(const char* phase) const;

  TrainConfig cfg_;
  std::string config_snapshot_;
  Generator<float> gen_;
  Discriminator<float> disc_;
  FeatureExtractor<float> phi_;
  AdamState<float> adam_g_;
  AdamState<float> adam_d_;
  std::int64_t step_ = 0;
};

// All parameters and buffers of the generator, in a stable order.
std::vector<Parameter<float>*> generator_parameters(Generator<float>& gen);
std::vector<Parameter<float>*> generator_trainable(Generator<float>& gen);

// Rebuilds generator weights from a checkpoint (for synthesis/analysis).
void load_generator(Generator<float>& gen, const Checkpoint& ckpt);

}  // namespace scgen
