#include "scgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include <Eigen/Dense>

#include "scgen/tensor_io.hpp"

namespace fs = std::filesystem;

namespace scgen {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path.string(), std::vector<char>(text.begin(), text.end()));
}

using Matrix = Eigen::MatrixXd;

Matrix to_matrix(const std::vector<std::vector<double>>& rows, const char* which) {
  if (rows.empty()) throw ParameterError(std::string("frechet_distance: set ") + which + " is empty");
  const auto dim = rows.front().size();
  if (dim == 0) throw ParameterError(std::string("frechet_distance: set ") + which + " has zero-length vectors");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw ParameterError(std::string("frechet_distance: ragged rows in set ") + which);
    for (std::size_t j = 0; j < dim; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

Matrix covariance(const Matrix& x, const Eigen::RowVectorXd& mu) {
  const Matrix centered = x.rowwise() - mu;
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  return (centered.transpose() * centered) / denom;
}

// Symmetric PSD square root; negative eigenvalues from round-off are clamped.
Matrix sqrt_psd(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

ClassVectorStats make_class_vector_stats(std::int64_t classes, std::int64_t candidates) {
  if (classes < 1 || candidates < 1) throw ParameterError("class_vector_stats: classes and candidates must be >= 1");
  ClassVectorStats s;
  s.classes = classes;
  s.candidates = candidates;
  s.sums.assign(static_cast<std::size_t>(classes), std::vector<double>(static_cast<std::size_t>(candidates), 0.0));
  s.counts.assign(static_cast<std::size_t>(classes), 0);
  return s;
}

void accumulate_class_vectors(ClassVectorStats& stats, const Tensor<float>& vectors, const Tensor<float>& layout) {
  const Shape vs = vectors.shape();
  const Shape ls = layout.shape();
  if (vs.n != ls.n) throw ShapeError("class_vector_stats: vectors " + vs.str() + " and layout " + ls.str() + " differ in batch");
  if (vs.c != stats.candidates) throw ShapeError("class_vector_stats: expected " + std::to_string(stats.candidates) + " candidates");
  if (ls.c != stats.classes) throw ShapeError("class_vector_stats: expected " + std::to_string(stats.classes) + " classes");
  // Nearest resize with the same rule as resize_nearest.
  const double sy = static_cast<double>(ls.h) / static_cast<double>(vs.h);
  const double sx = static_cast<double>(ls.w) / static_cast<double>(vs.w);
  for (std::int64_t b = 0; b < vs.n; ++b) {
    for (std::int64_t y = 0; y < vs.h; ++y) {
      const auto ly = std::min<std::int64_t>(ls.h - 1, static_cast<std::int64_t>(std::floor((y + 0.5) * sy)));
      for (std::int64_t x = 0; x < vs.w; ++x) {
        const auto lx = std::min<std::int64_t>(ls.w - 1, static_cast<std::int64_t>(std::floor((x + 0.5) * sx)));
        std::int64_t cls = -1;
        for (std::int64_t c = 0; c < ls.c; ++c) {
          if (layout.at(b, c, ly, lx) > 0.5f) {
            cls = c;
            break;
          }
        }
        if (cls < 0) continue;
        auto& sum = stats.sums[static_cast<std::size_t>(cls)];
        for (std::int64_t k = 0; k < vs.c; ++k) sum[static_cast<std::size_t>(k)] += vectors.at(b, k, y, x);
        ++stats.counts[static_cast<std::size_t>(cls)];
      }
    }
  }
}

ClassVectorStats class_vector_stats(const Tensor<float>& vectors, const Tensor<float>& layout) {
  ClassVectorStats s = make_class_vector_stats(layout.shape().c, vectors.shape().c);
  accumulate_class_vectors(s, vectors, layout);
  return s;
}

std::vector<std::vector<double>> ClassVectorStats::mean_vectors() const {
  std::vector<std::vector<double>> out = sums;
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (counts[c] == 0) continue;
    for (auto& v : out[c]) v /= static_cast<double>(counts[c]);
  }
  return out;
}

std::vector<std::vector<double>> ClassVectorStats::cosine() const {
  const auto means = mean_vectors();
  const auto n = static_cast<std::size_t>(classes);
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (double v : means[i]) s += v * v;
    norms[i] = std::sqrt(s);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      if (counts[i] == 0 || counts[j] == 0) continue;
      double dot = 0;
      for (std::size_t k = 0; k < means[i].size(); ++k) dot += means[i][k] * means[j][k];
      const double c = i == j && norms[i] > kCosineEps ? 1.0 : dot / std::max(norms[i] * norms[j], kCosineEps);
      m[i][j] = c;
      m[j][i] = c;
    }
  }
  return m;
}

double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  const Matrix xa = to_matrix(a, "a");
  const Matrix xb = to_matrix(b, "b");
  if (xa.cols() != xb.cols()) throw ParameterError("frechet_distance: sets have different dimensions");
  const Eigen::RowVectorXd mu_a = xa.colwise().mean();
  const Eigen::RowVectorXd mu_b = xb.colwise().mean();
  Matrix sa = covariance(xa, mu_a);
  Matrix sb = covariance(xb, mu_b);
  const auto dim = xa.cols();
  if (xa.rows() < dim + 1 || xb.rows() < dim + 1) {
    sa = Matrix(sa.diagonal().asDiagonal());
    sb = Matrix(sb.diagonal().asDiagonal());
  }
  const double mean_term = (mu_a - mu_b).squaredNorm();
  const Matrix ra = sqrt_psd(sa);
  const Matrix inner = sqrt_psd(ra * sb * ra);
  const double d = mean_term + sa.trace() + sb.trace() - 2.0 * inner.trace();
  return std::max(0.0, d);
}

std::vector<std::vector<double>> pooled_features(const FeatureExtractor<float>& phi, const Tensor<float>& images) {
  Graph<float> g;
  const auto feats = phi.forward(g, g.constant(images));
  const Tensor<float>& last = feats.back().value();
  const Shape s = last.shape();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(s.n), std::vector<double>(static_cast<std::size_t>(s.c)));
  for (std::int64_t b = 0; b < s.n; ++b) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      double acc = 0;
      for (std::int64_t i = 0; i < s.h * s.w; ++i) acc += last[last.offset(b, c, 0, 0) + i];
      rows[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)] = acc / static_cast<double>(s.h * s.w);
    }
  }
  return rows;
}

PixelAccuracy oracle_pixel_accuracy(const Tensor<float>& images, const std::vector<LabelMap>& labels,
                                    const SceneSpec& spec, bool interior_only) {
  const Shape s = images.shape();
  if (s.c != 3) throw ShapeError("oracle_pixel_accuracy: images must have 3 channels");
  if (static_cast<std::int64_t>(labels.size()) != s.n) throw ShapeError("oracle_pixel_accuracy: one label map per image required");
  const auto refs = spec.reference_colors();
  const auto family = spec.family_of_classes();
  // One representative reference color per family.
  std::vector<int> fam_ids;
  std::vector<std::array<double, 3>> fam_refs;
  for (std::size_t c = 0; c < refs.size(); ++c) {
    if (std::find(fam_ids.begin(), fam_ids.end(), family[c]) == fam_ids.end()) {
      fam_ids.push_back(family[c]);
      fam_refs.push_back(refs[c]);
    }
  }
  const auto classes = static_cast<std::size_t>(spec.class_count());
  PixelAccuracy out;
  out.per_class.assign(classes, 0.0);
  out.counts.assign(classes, 0);
  std::vector<std::int64_t> correct(classes, 0);
  std::int64_t total_correct = 0;
  for (std::int64_t b = 0; b < s.n; ++b) {
    const LabelMap& lm = labels[static_cast<std::size_t>(b)];
    if (lm.h != s.h || lm.w != s.w) throw ShapeError("oracle_pixel_accuracy: label map size differs from image");
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t x = 0; x < s.w; ++x) {
        const auto gt = lm.at(y, x);
        if (gt >= classes) throw ValidityError("oracle_pixel_accuracy: label out of range");
        std::array<double, 3> local{0, 0, 0};
        int n = 0;
        bool mixed = false;
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            const auto yy = y + dy;
            const auto xx = x + dx;
            if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
            if (family[lm.at(yy, xx)] != family[gt]) mixed = true;
            for (int k = 0; k < 3; ++k) local[static_cast<std::size_t>(k)] += images.at(b, k, yy, xx);
            ++n;
          }
        }
        if (interior_only && mixed) continue;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < fam_refs.size(); ++f) {
          double d = 0;
          for (std::size_t k = 0; k < 3; ++k) {
            const double diff = local[k] / n - fam_refs[f][k];
            d += diff * diff;
          }
          if (d < best_d) {
            best_d = d;
            best = f;
          }
        }
        ++out.counts[gt];
        ++out.total;
        if (fam_ids[best] == family[gt]) {
          ++correct[gt];
          ++total_correct;
        }
      }
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    out.per_class[c] = out.counts[c] > 0 ? static_cast<double>(correct[c]) / static_cast<double>(out.counts[c]) : 0.0;
  }
  out.accuracy = out.total > 0 ? static_cast<double>(total_correct) / static_cast<double>(out.total) : 0.0;
  return out;
}

std::uint8_t heatmap_value(double cosine) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(255.0 * (cosine + 1.0) / 2.0, 0.0, 255.0)));
}

void emit_similarity(const ClassVectorStats& stats, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir + ": cannot create directory: " + ec.message());
  const auto cos = stats.cosine();
  std::string csv = "class_i,class_j,cosine\n";
  LabelMap heat{stats.classes, stats.classes, {}};
  for (std::int64_t i = 0; i < stats.classes; ++i) {
    for (std::int64_t j = 0; j < stats.classes; ++j) {
      const double c = cos[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (stats.present(i) && stats.present(j)) {
        csv += std::to_string(i) + "," + std::to_string(j) + "," + fmt(c) + "\n";
      }
      heat.labels.push_back(heatmap_value(c));
    }
  }
  write_text(fs::path(out_dir) / "similarity.csv", csv);
  write_pgm((fs::path(out_dir) / "similarity.pgm").string(), heat);
}

void emit_metrics(const std::vector<MetricReport>& metrics, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir + ": cannot create directory: " + ec.message());
  std::string csv = "step,frechet,accuracy,set\n";
  std::string per = "step,class,accuracy,pixels,set\n";
  for (const auto& m : metrics) {
    csv += std::to_string(m.step) + "," + fmt(m.frechet) + "," + fmt(m.pixels.accuracy) + "," + m.set + "\n";
    for (std::size_t c = 0; c < m.pixels.per_class.size(); ++c) {
      per += std::to_string(m.step) + "," + std::to_string(c) + "," + fmt(m.pixels.per_class[c]) + "," +
             std::to_string(m.pixels.counts[c]) + "," + m.set + "\n";
    }
  }
  write_text(fs::path(out_dir) / "metrics.csv", csv);
  write_text(fs::path(out_dir) / "class_accuracy.csv", per);
}

void emit_reports(const ClassVectorStats& stats, const std::vector<MetricReport>& metrics, const std::string& out_dir) {
  emit_similarity(stats, out_dir);
  emit_metrics(metrics, out_dir);
}

}  // namespace scgen
