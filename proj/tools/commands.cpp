#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scgen/eval.hpp"
#include "scgen/parallel.hpp"
#include "scgen/random.hpp"
#include "scgen/synthdata.hpp"
#include "scgen/tensor_io.hpp"

namespace fs = std::filesystem;

namespace scgen::cli {

namespace {

// Sub-seed namespaces for the commands' own noise draws.
constexpr std::uint64_t kSampleNoise = 0x5a;
constexpr std::uint64_t kSynthNoise = 0x51;
constexpr std::uint64_t kEvalNoise = 0xe7;
constexpr std::int64_t kEvalChunk = 16;
constexpr std::int64_t kGridSamples = 8;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir + ": cannot create directory");
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path.string(), std::vector<char>(text.begin(), text.end()));
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct LoadedModel {
  ExperimentConfig cfg;
  Checkpoint ckpt;
  Generator<float> gen;
};

LoadedModel load_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config_json.empty()) throw FormatError(path + ": checkpoint carries no config");
  ExperimentConfig cfg = parse_experiment_config(ckpt.config_json, path + " (embedded config)");
  Generator<float> gen = build_from_config<float>(cfg.train.generator, cfg.train.seed);
  load_generator(gen, ckpt);
  return {std::move(cfg), std::move(ckpt), std::move(gen)};
}

void check_compatible(const SceneSpec& spec, const GeneratorConfig& g, const std::string& what) {
  if (spec.class_count() != g.classes) {
    throw ConfigError(what + ": dataset has " + std::to_string(spec.class_count()) + " classes, model expects " +
                      std::to_string(g.classes));
  }
  if (spec.resolution != g.resolution) {
    throw ConfigError(what + ": dataset resolution " + std::to_string(spec.resolution) + " differs from model " +
                      std::to_string(g.resolution));
  }
}

// Inference pass with running normalization statistics.
Tensor<float> render(Generator<float>& gen, const Tensor<float>& layout, const Tensor<float>& z) {
  Graph<float> g;
  const auto svg = gen.svg.forward(g, g.constant(layout), ForwardMode::inference());
  return gen.srg.forward(g, g.constant(z), svg.pyramid, ForwardMode::inference()).value();
}

Tensor<float> noise_rows(std::int64_t z_dim, std::uint64_t seed, std::uint64_t ns, std::int64_t first,
                         std::int64_t count) {
  Tensor<float> z(Shape{count, z_dim, 1, 1});
  for (std::int64_t i = 0; i < count; ++i) {
    const auto row = standard_normal<float>(Shape{1, z_dim, 1, 1}, derive_seed(seed, ns, static_cast<std::uint64_t>(first + i)));
    std::copy(row.data(), row.data() + z_dim, z.data() + i * z_dim);
  }
  return z;
}

// Real images on the top row, generated ones below.
Tensor<float> sample_grid(const Tensor<float>& real, const Tensor<float>& fake) {
  const Shape s = real.shape();
  Tensor<float> grid(Shape{1, 3, 2 * s.h, s.n * s.w});
  for (int row = 0; row < 2; ++row) {
    const Tensor<float>& src = row == 0 ? real : fake;
    for (std::int64_t b = 0; b < s.n; ++b)
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < s.h; ++y)
          for (std::int64_t x = 0; x < s.w; ++x) grid.at(0, c, row * s.h + y, b * s.w + x) = src.at(b, c, y, x);
  }
  return grid;
}

void write_samples(Generator<float>& gen, const Dataset& data, const TrainConfig& cfg, const std::string& path) {
  const std::int64_t k = std::min<std::int64_t>(kGridSamples, data.size());
  std::vector<const Tensor<float>*> layouts;
  std::vector<const Tensor<float>*> images;
  for (std::int64_t i = 0; i < k; ++i) {
    layouts.push_back(&data.layouts[static_cast<std::size_t>(i)]);
    images.push_back(&data.images[static_cast<std::size_t>(i)]);
  }
  const Tensor<float> z = noise_rows(cfg.generator.z_dim, cfg.seed, kSampleNoise, 0, k);
  write_ppm(path, sample_grid(stack_batch(images), render(gen, stack_batch(layouts), z)));
}

// Keeps the header and the rows logged before `step` (resuming in place).
std::string kept_log(const std::string& path, std::int64_t step) {
  std::string kept = LossReport::csv_header() + "\n";
  std::ifstream in(path);
  if (!in) return kept;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < step) kept += line + "\n";
  }
  return kept;
}

}  // namespace

std::string checkpoint_filename(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%07lld.scgc", static_cast<long long>(step));
  return buf;
}

void apply_thread_env() {
  const char* v = std::getenv("SCGEN_THREADS");
  if (!v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1 || n > 4096) {
    throw ConfigError(std::string("SCGEN_THREADS: expected a positive integer, got '") + v + "'");
  }
  set_worker_threads(static_cast<int>(n));
}

void make_data(const MakeDataOptions& opts) {
  if (opts.out.empty()) throw ParameterError("--out is required");
  if (opts.count < 1) throw ParameterError("count must be >= 1");
  write_dataset(opts.out, SceneSpec::preset(opts.preset, opts.seed), opts.count, opts.force);
}

TrainSummary train(const TrainOptions& opts) {
  if (opts.out.empty()) throw ParameterError("--out is required");
  ExperimentConfig cfg = opts.config.empty() ? preset_config("families4") : load_experiment_config(opts.config);
  const std::string data_dir = opts.data.empty() ? cfg.data_dir : opts.data;
  if (data_dir.empty()) throw ParameterError("no data directory: pass --data or set data_dir in the config");
  const TrainConfig& tc = cfg.train;

  const Dataset data = load_dataset(data_dir);
  check_compatible(data.spec, tc.generator, data_dir);
  if (data.size() < tc.batch_size) {
    throw ConfigError("train.batch_size: " + std::to_string(tc.batch_size) + " exceeds the " +
                      std::to_string(data.size()) + " samples in " + data_dir);
  }

  ensure_dir(opts.out);
  const std::string resolved = to_json(cfg);
  write_text(fs::path(opts.out) / "config.json", resolved);

  Trainer trainer(tc, resolved);
  if (!opts.resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(opts.resume);
    trainer.restore(ckpt);
    if (trainer.step() > tc.steps) {
      throw ConfigError(opts.resume + ": checkpoint step " + std::to_string(trainer.step()) +
                        " is beyond train.steps " + std::to_string(tc.steps));
    }
  }

  const std::string log_path = path_in(opts.out, "metrics.csv");
  std::ofstream log;
  {
    const std::string head = kept_log(log_path, trainer.step());
    log.open(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError(log_path + ": cannot open for writing");
    log << head;
  }

  const BatchStream batches(data, tc.batch_size, tc.seed);
  TrainSummary summary;
  summary.first_step = trainer.step();
  std::int64_t budget = opts.stop_after > 0 ? opts.stop_after : tc.steps;
  while (trainer.step() < tc.steps && budget-- > 0) {
    const auto [layout, image] = batches.batch_at(trainer.step());
    const LossReport r = trainer.train_step(layout, image);
    summary.reports.push_back(r);
    if (tc.log_every > 0 && r.step % tc.log_every == 0) log << r.csv_row() << "\n" << std::flush;
    const std::int64_t done = trainer.step();
    const bool ckpt_due = tc.checkpoint_every > 0 && done % tc.checkpoint_every == 0 && done < tc.steps;
    if (ckpt_due) save_checkpoint(path_in(opts.out, checkpoint_filename(done)), trainer.checkpoint());
    const bool sample_due = cfg.sample_every > 0 ? done % cfg.sample_every == 0 : ckpt_due;
    if (sample_due) {
      char name[40];
      std::snprintf(name, sizeof name, "samples_%07lld.ppm", static_cast<long long>(done));
      write_samples(trainer.generator(), data, tc, path_in(opts.out, name));
    }
    if (!opts.quiet && (ckpt_due || done % 50 == 0)) {
      std::printf("step %lld/%lld d=%.4f g=%.4f p=%.4f s=%.4f\n", static_cast<long long>(done),
                  static_cast<long long>(tc.steps), r.d_hinge, r.g_total, r.g_perceptual, r.g_regression);
      std::fflush(stdout);
    }
  }
  summary.last_step = trainer.step();
  if (trainer.step() >= tc.steps) {
    summary.final_checkpoint = path_in(opts.out, kFinalCheckpoint);
    save_checkpoint(summary.final_checkpoint, trainer.checkpoint());
    write_samples(trainer.generator(), data, tc, path_in(opts.out, "samples_final.ppm"));
  } else {
    summary.final_checkpoint = path_in(opts.out, checkpoint_filename(trainer.step()));
    save_checkpoint(summary.final_checkpoint, trainer.checkpoint());
  }
  return summary;
}

std::vector<std::string> synth(const SynthOptions& opts) {
  if (opts.out.empty()) throw ParameterError("--out is required");
  if (opts.samples < 1) throw ParameterError("samples must be >= 1");
  LoadedModel m = load_model(opts.ckpt);
  const GeneratorConfig& g = m.cfg.train.generator;
  const LabelMap labels = read_pgm(opts.layout);
  if (labels.h != g.resolution || labels.w != g.resolution) {
    throw ConfigError(opts.layout + ": layout is " + std::to_string(labels.w) + "x" + std::to_string(labels.h) +
                      ", model expects " + std::to_string(g.resolution) + "x" + std::to_string(g.resolution));
  }
  Tensor<float> layout;
  try {
    layout = one_hot(labels, g.classes);
  } catch (const ValidityError& e) {
    throw ValidityError(opts.layout + ": " + e.what() + " (model has " + std::to_string(g.classes) + " classes)");
  }

  std::vector<std::string> written;
  const fs::path out(opts.out);
  for (std::int64_t k = 0; k < opts.samples; ++k) {
    const Tensor<float> z = noise_rows(g.z_dim, opts.seed, kSynthNoise, k, 1);
    fs::path target = out;
    if (opts.samples > 1) {
      target = out.parent_path() / (out.stem().string() + "_" + std::to_string(k) + out.extension().string());
    }
    write_ppm(target.string(), render(m.gen, layout, z));
    written.push_back(target.string());
  }
  return written;
}

void analyze(const DirOptions& opts) {
  if (opts.out.empty()) throw ParameterError("--out is required");
  LoadedModel m = load_model(opts.ckpt);
  const GeneratorConfig& g = m.cfg.train.generator;
  const Dataset data = load_dataset(opts.data);
  check_compatible(data.spec, g, opts.data);

  const auto levels = static_cast<int>(g.svg_channels.size());
  if (opts.level < 0 || opts.level > levels) {
    throw ParameterError("--level must be between 1 and " + std::to_string(levels) + " (0 for the finest)");
  }
  std::vector<ClassVectorStats> per_level;
  for (std::int64_t i = 0; i < data.size(); ++i) {
    const Tensor<float>& layout = data.layouts[static_cast<std::size_t>(i)];
    Graph<float> graph;
    const auto svg = m.gen.svg.forward(graph, graph.constant(layout), ForwardMode::inference());
    if (per_level.empty()) per_level.assign(svg.pyramid.size(), make_class_vector_stats(g.classes, g.candidates));
    for (std::size_t lv = 0; lv < svg.pyramid.size(); ++lv) {
      accumulate_class_vectors(per_level[lv], svg.pyramid[lv].values.value(), layout);
    }
  }
  ensure_dir(opts.out);
  const int chosen = opts.level == 0 ? levels : opts.level;
  emit_similarity(per_level[static_cast<std::size_t>(chosen - 1)], opts.out);
  for (std::size_t lv = 0; lv < per_level.size(); ++lv) {
    emit_similarity(per_level[lv], path_in(opts.out, "level_" + std::to_string(lv + 1)));
  }
  write_text(fs::path(opts.out) / "config.json", m.ckpt.config_json);
}

void evaluate(const DirOptions& opts) {
  if (opts.out.empty()) throw ParameterError("--out is required");
  LoadedModel m = load_model(opts.ckpt);
  const TrainConfig& tc = m.cfg.train;
  const Dataset data = load_dataset(opts.data);
  check_compatible(data.spec, tc.generator, opts.data);
  const FeatureExtractor<float> phi(tc.perceptual);

  std::vector<Tensor<float>> fakes;
  for (std::int64_t first = 0; first < data.size(); first += kEvalChunk) {
    const std::int64_t count = std::min(kEvalChunk, data.size() - first);
    std::vector<const Tensor<float>*> layouts;
    for (std::int64_t i = first; i < first + count; ++i) layouts.push_back(&data.layouts[static_cast<std::size_t>(i)]);
    const Tensor<float> z = noise_rows(tc.generator.z_dim, tc.seed, kEvalNoise, first, count);
    fakes.push_back(render(m.gen, stack_batch(layouts), z));
  }
  std::vector<const Tensor<float>*> fake_parts;
  for (const auto& f : fakes) fake_parts.push_back(&f);
  std::vector<const Tensor<float>*> real_parts;
  for (const auto& r : data.images) real_parts.push_back(&r);
  const Tensor<float> fake = stack_batch(fake_parts);
  const Tensor<float> real = stack_batch(real_parts);

  const auto real_feat = pooled_features(phi, real);
  const auto fake_feat = pooled_features(phi, fake);

  MetricReport self;
  self.step = m.ckpt.step;
  self.set = "real";
  self.frechet = frechet_distance(real_feat, real_feat);
  self.pixels = oracle_pixel_accuracy(real, data.labels, data.spec);

  MetricReport gen;
  gen.step = m.ckpt.step;
  gen.set = "generated";
  gen.frechet = frechet_distance(real_feat, fake_feat);
  gen.pixels = oracle_pixel_accuracy(fake, data.labels, data.spec);

  ensure_dir(opts.out);
  emit_metrics({self, gen}, opts.out);
  write_text(fs::path(opts.out) / "config.json", m.ckpt.config_json);
}

bool gradcheck(std::uint64_t seed, const std::function<void(const std::string&)>& print) {
  GradSuiteOptions o;
  o.seed = seed;
  bool ok = true;
  for (const auto& e : run_gradient_suite(o)) {
    char line[256];
    std::snprintf(line, sizeof line, "%-32s %s max_rel_error=%.3e instances=%d coords=%lld", e.op.c_str(),
                  e.passed ? "ok  " : "FAIL", e.max_rel_error, e.instances, static_cast<long long>(e.coordinates));
    print(line);
    ok = ok && e.passed;
  }
  return ok;
}

}  // namespace scgen::cli
