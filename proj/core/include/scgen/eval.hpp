#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scgen/adversary.hpp"
#include "scgen/synthdata.hpp"

namespace scgen {

// Mean semantic vector per class and their cosine similarities. Classes with
// no pixels are marked absent; their similarity entries are 0.
struct ClassVectorStats {
  std::int64_t classes = 0;
  std::int64_t candidates = 0;
  std::vector<std::vector<double>> sums;  // classes x candidates
  std::vector<std::int64_t> counts;

  std::vector<std::vector<double>> mean_vectors() const;
  bool present(std::int64_t c) const { return counts[static_cast<std::size_t>(c)] > 0; }
  // classes x classes, symmetric, diagonal 1 for present classes.
  std::vector<std::vector<double>> cosine() const;
};

inline constexpr double kCosineEps = 1e-8;

ClassVectorStats make_class_vector_stats(std::int64_t classes, std::int64_t candidates);

// `vectors`: b x n x h x w gated semantic vectors. `layout`: b x classes x H x
// W one-hot; it is nearest-resized to h x w before pooling.
void accumulate_class_vectors(ClassVectorStats& stats, const Tensor<float>& vectors, const Tensor<float>& layout);

ClassVectorStats class_vector_stats(const Tensor<float>& vectors, const Tensor<float>& layout);

// Fréchet distance between Gaussian fits of two sample sets (rows are
// samples). Falls back to diagonal covariances when either set has fewer
// than dim + 1 samples. Clamped at 0.
double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

// Global-average-pooled final extractor stage, one row per sample.
std::vector<std::vector<double>> pooled_features(const FeatureExtractor<float>& phi, const Tensor<float>& images);

struct PixelAccuracy {
  double accuracy = 0.0;
  std::vector<double> per_class;       // NaN-free; 0 for classes without pixels
  std::vector<std::int64_t> counts;    // ground-truth pixels per class
  std::int64_t total = 0;
};

// Classifies every pixel by the nearest reference family color of its 3x3
// local mean. Classes of one family count as a single class. With
// `interior_only`, pixels whose 3x3 neighbourhood crosses a label boundary
// are skipped.
PixelAccuracy oracle_pixel_accuracy(const Tensor<float>& images, const std::vector<LabelMap>& labels,
                                    const SceneSpec& spec, bool interior_only = false);

struct MetricReport {
  std::int64_t step = 0;
  std::string set = "generated";  // which image set was scored against the real one
  double frechet = 0.0;
  PixelAccuracy pixels;
};

// similarity.csv, similarity.pgm, metrics.csv, class_accuracy.csv.
void emit_reports(const ClassVectorStats& stats, const std::vector<MetricReport>& metrics, const std::string& out_dir);
void emit_similarity(const ClassVectorStats& stats, const std::string& out_dir);
void emit_metrics(const std::vector<MetricReport>& metrics, const std::string& out_dir);

std::uint8_t heatmap_value(double cosine);

}  // namespace scgen
