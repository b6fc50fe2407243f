#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scgen/tensor.hpp"

namespace scgen {

enum class TextureKind { flat, checker, stripes };

// Texture of one appearance family. Colors are RGB in [0, 1].
struct Texture {
  TextureKind kind = TextureKind::flat;
  std::array<double, 3> color_a{0.5, 0.5, 0.5};
  std::array<double, 3> color_b{0.5, 0.5, 0.5};
  int period = 4;          // full cycle in pixels (checker / stripes)
  double angle_deg = 0.0;  // stripes only
  double noise = 0.0;      // uniform per-pixel jitter amplitude
};

struct SceneClass {
  std::string name;
  int family = 0;
  Texture texture;
};

struct SceneSpec {
  std::int64_t resolution = 32;
  std::vector<SceneClass> classes;  // class 0 is background
  int min_shapes = 2;
  int max_shapes = 4;
  std::uint64_t seed = 1;

  // Background, two classes sharing a checker family, one striped class.
  static SceneSpec families4(std::uint64_t seed = 1);
  static SceneSpec preset(const std::string& name, std::uint64_t seed);

  void validate() const;
  std::int64_t class_count() const { return static_cast<std::int64_t>(classes.size()); }
  // Family id of every class, in class order.
  std::vector<int> family_of_classes() const;
  // Mean texture color (in [-1, 1]) over a full canvas, per class.
  std::vector<std::array<double, 3>> reference_colors() const;

  std::string to_json() const;
  static SceneSpec from_json(const std::string& text, const std::string& source);
};

// Row-major class indices.
struct LabelMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(std::int64_t y, std::int64_t x) const { return labels[static_cast<std::size_t>(y * w + x)]; }
};

struct SamplePair {
  LabelMap labels;
  Tensor<float> image;  // 1 x 3 x h x w, multiples of 1/127.5 minus 1
};

SamplePair generate_scene(const SceneSpec& spec, std::int64_t index);

// Paints `labels` with the spec's textures (exposed for the swap oracle).
Tensor<float> render_labels(const SceneSpec& spec, const LabelMap& labels);

// one-hot 1 x classes x h x w; labels >= classes raise a ValidityError
// naming the first offending position.
Tensor<float> one_hot(const LabelMap& labels, std::int64_t classes);
LabelMap argmax_labels(const Tensor<float>& layout, std::int64_t sample = 0);

// Binary P6 / P5. Images map [-1, 1] to 0..255 by round((x + 1) * 127.5).
std::vector<char> encode_ppm(const Tensor<float>& image, std::int64_t sample = 0);
Tensor<float> decode_ppm(const std::vector<char>& bytes, const std::string& source = "<memory>");
std::vector<char> encode_pgm(const LabelMap& labels);
LabelMap decode_pgm(const std::vector<char>& bytes, const std::string& source = "<memory>");

void write_ppm(const std::string& path, const Tensor<float>& image, std::int64_t sample = 0);
Tensor<float> read_ppm(const std::string& path);
void write_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_pgm(const std::string& path);

std::string image_filename(std::int64_t index);
std::string layout_filename(std::int64_t index);

// Writes img_*.ppm, seg_*.pgm and spec.json. Refuses a non-empty directory
// unless `force` is set.
void write_dataset(const std::string& dir, const SceneSpec& spec, std::int64_t count, bool force);

struct Dataset {
  SceneSpec spec;
  std::vector<std::int64_t> indices;
  std::vector<Tensor<float>> layouts;  // each 1 x classes x h x w
  std::vector<Tensor<float>> images;   // each 1 x 3 x h x w
  std::vector<LabelMap> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(images.size()); }
};

Dataset load_dataset(const std::string& dir);

// Deterministic shuffled batches; the last partial batch of an epoch is
// dropped. batch_at(k) is a pure function of (seed, k).
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::int64_t batch_size, std::uint64_t seed);

  std::int64_t batches_per_epoch() const { return per_epoch_; }
  std::vector<std::int64_t> epoch_order(std::int64_t epoch) const;
  std::vector<std::int64_t> batch_members(std::int64_t k) const;
  // (layout b x classes x h x w, image b x 3 x h x w)
  std::pair<Tensor<float>, Tensor<float>> batch_at(std::int64_t k) const;

 private:
  const Dataset* data_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  std::int64_t per_epoch_;
};

// Stacks 1 x c x h x w tensors along the batch axis.
Tensor<float> stack_batch(const std::vector<const Tensor<float>*>& parts);

}  // namespace scgen
