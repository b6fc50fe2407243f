#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace cli = scgen::cli;

namespace {

// Collapses a message onto one line for the diagnostic.
std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-vector conditional image synthesis at desk scale", "scgen"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "scgen 0.1.0");

  cli::MakeDataOptions md;
  auto* make_data = app.add_subcommand("make-data", "Write a synthetic paired dataset");
  make_data->add_option("--out", md.out, "Output directory")->required();
  make_data->add_option("--preset", md.preset, "Scene preset")
      ->check(CLI::IsMember({"families4", "paper-full"}))
      ->capture_default_str();
  make_data->add_option("--count", md.count, "Number of (image, layout) pairs")->required();
  make_data->add_option("--seed", md.seed, "Scene seed")->capture_default_str();
  make_data->add_flag("--force", md.force, "Write into a non-empty directory");

  cli::TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train generator and discriminator");
  train->add_option("--config", tr.config, "Experiment config (JSON); defaults to the families4 preset");
  train->add_option("--data", tr.data, "Dataset directory (overrides data_dir)");
  train->add_option("--out", tr.out, "Run directory")->required();
  train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  train->add_flag("--quiet", tr.quiet, "No progress lines");
  train->add_option("--stop-after", tr.stop_after, "Stop after this many steps and checkpoint (0: run to train.steps)")
      ->check(CLI::NonNegativeNumber);

  cli::SynthOptions sy;
  auto* synth = app.add_subcommand("synth", "Render images for a layout");
  synth->add_option("--ckpt", sy.ckpt, "Checkpoint")->required();
  synth->add_option("--layout", sy.layout, "Layout (binary PGM of class indices)")->required();
  synth->add_option("--seed", sy.seed, "Noise seed")->capture_default_str();
  synth->add_option("--out", sy.out, "Output PPM (suffixed _k when --samples > 1)")->required();
  synth->add_option("--samples", sy.samples, "Number of noise draws")->capture_default_str();

  cli::DirOptions an;
  auto* analyze = app.add_subcommand("analyze", "Semantic-vector similarity between classes");
  analyze->add_option("--ckpt", an.ckpt, "Checkpoint")->required();
  analyze->add_option("--data", an.data, "Dataset directory")->required();
  analyze->add_option("--out", an.out, "Report directory")->required();
  analyze->add_option("--level", an.level, "Pyramid level for similarity.* (1 = coarsest, 0 = finest)")
      ->capture_default_str();

  cli::DirOptions ev;
  auto* eval = app.add_subcommand("eval", "Frechet distance and oracle pixel accuracy");
  eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval->add_option("--data", ev.data, "Dataset directory")->required();
  eval->add_option("--out", ev.out, "Report directory")->required();

  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable op");
  gradcheck->add_option("--seed", gc_seed, "Suite seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "scgen: %s\n", one_line(e.what()).c_str());
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    cli::apply_thread_env();
    if (make_data->parsed()) {
      cli::make_data(md);
    } else if (train->parsed()) {
      const auto s = cli::train(tr);
      if (!tr.quiet) std::printf("wrote %s\n", s.final_checkpoint.c_str());
    } else if (synth->parsed()) {
      for (const auto& p : cli::synth(sy)) std::printf("%s\n", p.c_str());
    } else if (analyze->parsed()) {
      cli::analyze(an);
    } else if (eval->parsed()) {
      cli::evaluate(ev);
    } else if (gradcheck->parsed()) {
      const bool ok = cli::gradcheck(gc_seed, [](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
      });
      if (!ok) {
        std::fprintf(stderr, "scgen: gradcheck: at least one op exceeds the tolerance (see FAIL lines)\n");
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "scgen: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
