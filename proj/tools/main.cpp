#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>

#include "commands.hpp"

using namespace sgsasr::cli;

int main(int argc, char** argv) {
  CLI::App app{"Arbitrary-scale spacecraft image super-resolution"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write synthetic train/ and val/ PNG folders");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Training images")->capture_default_str();
  s->add_option("--val-count", synth.val_count, "Validation images (default: count / 4)");
  s->add_option("--size", synth.size, "Square image side")->capture_default_str();
  s->add_option("--config", synth.config, "Config file with a [synth] section");
  s->add_option("--set", synth.overrides, "Override, e.g. synth.channels=3");
  s->add_option("--seed", synth.seed, "Seed (falls back to SGSASR_SEED)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "Config file");
  t->add_option("--data", train.data, "Dataset directory (train/ and optional val/)")->required();
  t->add_option("--out", train.out, "Run directory")->required();
  t->add_option("--epochs", train.epochs, "Override train.epochs");
  t->add_option("--seed", train.seed, "Seed (falls back to SGSASR_SEED)");
  t->add_option("--set", train.overrides, "Override, e.g. train.batch_size=4");
  t->add_option("--resume", train.resume, "Checkpoint directory to resume from");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Super-resolve an image or a folder");
  i->add_option("--checkpoint", infer.checkpoint, "Checkpoint directory")->required();
  i->add_option("--input", infer.input, "PNG file or folder")->required();
  i->add_option("--scale", infer.scale, "Any positive real factor")->required();
  i->add_option("--out", infer.out, "Output PNG (or folder for folder input)")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "PSNR/SSIM and FLOPs per scale");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  e->add_option("--data", eval.data, "HR folder (uses val/ when present)")->required();
  e->add_option("--scales", eval.scales, "Comma-separated scales")->capture_default_str();
  e->add_option("--out", eval.out, "Directory for metrics.txt and metrics.kv");
  e->add_flag("--per-image", eval.per_image, "Include per-image rows");

  AblateArgs ablate;
  auto* b = app.add_subcommand("ablate", "Train every variant on one ablation axis");
  b->add_option("--data", ablate.data, "Dataset directory (train/ and val/)")->required();
  b->add_option("--axis", ablate.axis, "modules, fusion or modulation")->required();
  b->add_option("--out", ablate.out, "Output directory")->required();
  b->add_option("--config", ablate.config, "Profile, e.g. configs/ablate-desk.cfg");
  b->add_option("--set", ablate.overrides, "Override, e.g. sweep.seeds=1,2");
  b->add_option("--seed", ablate.seed, "Single seed instead of sweep.seeds");
  b->add_option("--steps", ablate.steps, "Steps per run (default: full schedule)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train);
    if (*i) return cmd_infer(infer);
    if (*e) return cmd_eval(eval);
    if (*b) return cmd_ablate(ablate);
  } catch (const std::exception& ex) {
    fmt::print(stderr, "error: {}\n", ex.what());
    return 1;
  }
  return 1;
}
