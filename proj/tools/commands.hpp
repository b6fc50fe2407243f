#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scgen/config.hpp"
#include "scgen/gradsuite.hpp"
#include "scgen/train.hpp"

namespace scgen::cli {

struct MakeDataOptions {
  std::string out;
  std::string preset = "families4";
  std::int64_t count = 0;
  std::uint64_t seed = 1;
  bool force = false;
};

struct TrainOptions {
  std::string config;  // empty: families4 defaults
  std::string data;    // empty: data_dir from the config
  std::string out;
  std::string resume;
  // Stop after this many steps of the current invocation (0: run to the
  // configured step count). Lets tests interrupt a run.
  std::int64_t stop_after = 0;
  bool quiet = false;
};

struct TrainSummary {
  std::int64_t first_step = 0;
  std::int64_t last_step = 0;  // step counter after the final update
  std::vector<LossReport> reports;
  std::string final_checkpoint;
};

struct SynthOptions {
  std::string ckpt;
  std::string layout;
  std::uint64_t seed = 0;
  std::string out;
  std::int64_t samples = 1;
};

struct DirOptions {
  std::string ckpt;
  std::string data;
  std::string out;
  int level = 0;  // analyze only: pyramid level 1..T, 0 for the finest
};

void make_data(const MakeDataOptions& opts);
TrainSummary train(const TrainOptions& opts);
// Returns the written file paths.
std::vector<std::string> synth(const SynthOptions& opts);
void analyze(const DirOptions& opts);
void evaluate(const DirOptions& opts);
// Prints one line per op; returns true when every op is within tolerance.
bool gradcheck(std::uint64_t seed, const std::function<void(const std::string&)>& print);

// Output file names used by `train`.
std::string checkpoint_filename(std::int64_t step);
inline constexpr const char* kFinalCheckpoint = "ckpt_final.scgc";

// Parses SCGEN_THREADS if set; throws ConfigError on garbage.
void apply_thread_env();

}  // namespace scgen::cli
