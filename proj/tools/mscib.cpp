// Command-line driver: generate | train | eval | embed.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "mscib/error.hpp"
#include "mscib/experiment.hpp"

namespace {

mscib::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed,
                             const std::optional<std::string>& out) {
  auto config = mscib::read_experiment_config(path);
  if (seed) config.set_seed(*seed);
  if (out) config.out_dir = *out;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Layer activations are a few hundred KB; keep them off the mmap path so
  // every training step does not pay for fresh pages.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  CLI::App app{"Multi-view clustering with semantic consistency and an information bottleneck"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string checkpoint;
  std::string which = "Z";
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Key-value configuration file")->required();
    sub->add_option("--seed", seed, "Overrides the run seed from the config");
    sub->add_option("--out", out, "Output directory (overrides output.dir)");
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic multi-view dataset");
  add_common(gen);
  auto* train = app.add_subcommand("train", "Pretrain and train, then write checkpoint, history and metrics");
  add_common(train);
  train->add_flag("--quiet", quiet, "Do not echo per-epoch progress to stdout");
  auto* eval = app.add_subcommand("eval", "Ablation table for a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <out>/checkpoint.bin)");
  auto* embed = app.add_subcommand("embed", "Export Z or a view's posterior-mean code");
  add_common(embed);
  embed->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <out>/checkpoint.bin)");
  embed->add_option("--which", which, "Z or Z^(m)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto config = load(config_path, seed, out);
    const auto ckpt = checkpoint.empty() ? config.out_dir / "checkpoint.bin" : std::filesystem::path(checkpoint);
    if (*gen) {
      std::cout << mscib::cmd_generate(config).string() << '\n';
    } else if (*train) {
      const auto art = mscib::cmd_train(config, quiet ? nullptr : &std::cout);
      std::cerr << "checkpoint: " << art.checkpoint.string() << '\n';
      if (art.metrics) std::cerr << "metrics: " << art.metrics->string() << '\n';
    } else if (*eval) {
      std::cout << mscib::cmd_eval(config, ckpt).string() << '\n';
    } else if (*embed) {
      std::cout << mscib::cmd_embed(config, ckpt, which).string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mscib::exit_code_for(e);
  }
  return 0;
}
