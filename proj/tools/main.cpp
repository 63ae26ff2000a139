#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dcnn/dcnn.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> epochs;
  std::optional<std::string> preset;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::string> raw;
  std::optional<std::string> cache;
  std::optional<std::string> dataset;
  std::optional<std::string> split;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "run manifest (key = value file)");
  cmd->add_option("--seed", flags.seed, "RNG seed override");
  cmd->add_option("--epochs", flags.epochs, "epoch count override");
  cmd->add_option("--preset", flags.preset, "network preset: v1_split, v1_individual, v2");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--format", flags.format, "report format: plain, csv, jsonl");
  cmd->add_option("--raw", flags.raw, "raw WISDM text file");
  cmd->add_option("--cache", flags.cache, "segment cache file");
  cmd->add_option("--dataset", flags.dataset, "dataset kind: v1_split, v1_individual, v2, custom");
  cmd->add_option("--eval-split", flags.split, "split to evaluate: test or train");
}

dcnn::RunManifest resolve(const CommonFlags& flags) {
  dcnn::KeyValues pairs;
  if (!flags.config.empty()) pairs = dcnn::parse_kv_file(flags.config);
  if (flags.dataset) pairs.emplace_back("dataset", *flags.dataset);
  dcnn::RunManifest manifest = dcnn::manifest_from_pairs(pairs);
  if (flags.dataset) manifest.dataset = *flags.dataset;
  if (flags.seed) manifest.train.seed = *flags.seed;
  if (flags.epochs) manifest.train.epochs = *flags.epochs;
  if (flags.preset) {
    manifest.preset_name = *flags.preset;
    manifest.layers_text.clear();  // an explicit --preset beats a config-file stack
  }
  if (flags.out) manifest.out_dir = *flags.out;
  if (flags.format) manifest.format = *flags.format;
  if (flags.raw) manifest.raw_path = *flags.raw;
  if (flags.cache) manifest.cache_path = *flags.cache;
  if (flags.split) manifest.eval_split = *flags.split;
  return manifest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dilated-convolution classifier for multivariate time series"};
  app.require_subcommand(1);

  CommonFlags prepare_flags, train_flags, eval_flags;
  std::string shapes_preset;

  CLI::App* prepare = app.add_subcommand("prepare", "parse + segment a raw dataset into a cache");
  add_common(prepare, prepare_flags);
  CLI::App* train = app.add_subcommand("train", "train a network on a prepared dataset");
  add_common(train, train_flags);
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a cached split");
  add_common(evaluate, eval_flags);
  CLI::App* shapes = app.add_subcommand("shapes", "print per-layer output shapes");
  shapes->add_option("--preset", shapes_preset, "single preset (default: all three)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dcnn::kExitUserError;
  }

  return dcnn::run_command(
      [&]() -> int {
        if (prepare->parsed()) return dcnn::cmd_prepare(resolve(prepare_flags), std::cout);
        if (train->parsed()) return dcnn::cmd_train(resolve(train_flags), std::cout);
        if (evaluate->parsed()) return dcnn::cmd_evaluate(resolve(eval_flags), std::cout);
        return dcnn::cmd_shapes(shapes_preset, std::cout);
      },
      std::cerr);
}
