#include "commands.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sgsasr/ablation.hpp"
#include "sgsasr/checkpoint.hpp"
#include "sgsasr/data.hpp"
#include "sgsasr/errors.hpp"
#include "sgsasr/flops.hpp"
#include "sgsasr/image_io.hpp"
#include "sgsasr/metrics.hpp"
#include "sgsasr/model.hpp"
#include "sgsasr/training.hpp"

namespace fs = std::filesystem;

namespace sgsasr::cli {
namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DatasetError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DatasetError("cannot write " + path.string());
}

fs::path split_dir(const fs::path& data, const char* split) {
  const fs::path sub = data / split;
  return fs::is_directory(sub) ? sub : data;
}

std::vector<std::string> stems(const data::ImageFolder& folder) {
  std::vector<std::string> out;
  for (const auto& p : folder.paths()) out.push_back(p.stem().string());
  return out;
}

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double s = 0.0;
    try {
      s = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos || !(s > 0.0)) {
      throw InputError("invalid scale '" + item + "'");
    }
    out.push_back(s);
  }
  if (out.empty()) throw InputError("scale list is empty");
  return out;
}

std::string scale_tag(double s) { return "x" + format_double(s); }

}  // namespace

Config default_values() {
  Config c = ModelConfig{}.to_config();
  training::TrainConfig{}.to_config(c);
  data::SynthSpec{}.to_config(c);
  return c;
}

RunConfig resolve(const std::string& config_path, const std::vector<std::string>& overrides,
                  std::optional<std::uint64_t> seed_flag) {
  RunConfig run;
  run.values = default_values();
  if (!config_path.empty()) run.values.merge(Config::load(config_path));
  for (const auto& o : overrides) run.values.apply_override(o);

  if (seed_flag) {
    run.seed = *seed_flag;
  } else if (run.values.contains("seed")) {
    run.seed = run.values.get_u64("seed", 1);
  } else if (const char* env = std::getenv("SGSASR_SEED"); env && *env) {
    Config tmp;
    tmp.set("SGSASR_SEED", std::string(env));
    run.seed = tmp.get_u64("SGSASR_SEED", 1);
  }
  run.values.set("seed", std::to_string(run.seed));
  return run;
}

// synth --------------------------------------------------------------------

int cmd_synth(const SynthArgs& a) {
  RunConfig run = resolve(a.config, a.overrides, a.seed);
  if (a.size > 0) {
    run.values.set("synth.height", a.size);
    run.values.set("synth.width", a.size);
  }
  const data::SynthSpec spec = data::SynthSpec::from_config(run.values);
  if (a.count <= 0) throw DatasetError("--count must be positive; an empty dataset is refused");
  const int val_count = a.val_count >= 0 ? a.val_count : std::max(1, a.count / 4);

  for (const auto& [split, count] : {std::pair{"train", a.count}, std::pair{"val", val_count}}) {
    const fs::path dir = a.out / split;
    ensure_dir(dir);
    for (int i = 0; i < count; ++i) {
      Rng rng = Rng::derive(run.seed, split, static_cast<std::uint64_t>(i));
      write_png(dir / fmt::format("{:05d}.png", i), data::synth_spacecraft_image(spec, rng));
    }
  }
  Config manifest;
  manifest.set("seed", std::to_string(run.seed));
  manifest.set("train_count", a.count);
  manifest.set("val_count", val_count);
  spec.to_config(manifest);
  manifest.save(a.out / "manifest.txt");
  fmt::print("synth train={} val={} size={}x{} seed={} out={}\n", a.count, val_count, spec.height, spec.width,
             run.seed, a.out.string());
  return 0;
}

// train --------------------------------------------------------------------

int cmd_train(const TrainArgs& a) {
  RunConfig run = resolve(a.config, a.overrides, a.seed);
  if (a.epochs) run.values.set("train.epochs", *a.epochs);
  const ModelConfig mc = ModelConfig::from_config(run.values);
  const training::TrainConfig tc = training::TrainConfig::from_config(run.values);

  const data::ImageFolder train_folder(split_dir(a.data, "train"));
  const bool has_val = fs::is_directory(a.data / "val");
  const data::ImageFolder val_folder(has_val ? a.data / "val" : split_dir(a.data, "train"));
  const std::vector<Image> val_images = val_folder.load_all();
  const std::vector<std::string> val_names = stems(val_folder);

  ensure_dir(a.out);
  ensure_dir(a.out / "checkpoints");

  std::optional<CheckpointBundle> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    if (!resumed->state) throw CheckpointError(a.resume.string() + ": checkpoint holds no optimizer state");
    if (!(resumed->config == mc)) {
      throw CheckpointError(a.resume.string() + ": model config (hash " + resumed->config.hash() +
                            ") differs from the run config (hash " + mc.hash() + ")");
    }
  }
  run.values.save(a.out / "run.cfg");

  Model model = resumed ? restore_model(*resumed) : Model(mc, run.seed);
  training::Trainer trainer(model, tc, train_folder.load_all(), run.seed);
  if (resumed) trainer.state() = *resumed->state;

  const std::int64_t total = trainer.total_steps();
  const int spe = trainer.steps_per_epoch();
  auto log = fmt::output_file((a.out / "train.log").string(),
                              resumed ? fmt::file::WRONLY | fmt::file::CREATE | fmt::file::APPEND
                                      : fmt::file::WRONLY | fmt::file::CREATE | fmt::file::TRUNC);
  fmt::print("train images={} val={}{} steps={} steps_per_epoch={} params={} seed={}\n", train_folder.size(),
             val_folder.size(), has_val ? "" : " (train split)", total, spe, model.params().count(), run.seed);

  const auto t0 = std::chrono::steady_clock::now();
  double loss_sum = 0.0;
  int loss_count = 0;
  while (trainer.state().step < total) {
    try {
      loss_sum += trainer.step();
      ++loss_count;
    } catch (const TrainingError& e) {
      log.print("step={} status=aborted reason=\"{}\"\n", trainer.state().step, e.what());
      log.close();
      throw;
    }
    const std::int64_t step = trainer.state().step;
    if (step % spe != 0 && step != total) continue;
    const int epoch = static_cast<int>((step + spe - 1) / spe);
    const bool last = step == total;
    if (epoch % tc.val_every == 0 || last) {
      const auto report = training::evaluate(model, val_images, tc.val_scale, val_names);
      log.print("epoch={} step={} lr={} loss={:.6f} val_scale={} val_psnr={} val_ssim={:.6f}\n", epoch, step,
                format_double(trainer.state().lr), loss_sum / std::max(loss_count, 1), format_double(tc.val_scale),
                metrics::format_psnr(report.psnr_db), report.ssim);
      log.flush();
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fmt::print("epoch {} step {}/{} loss {:.5f} val {} dB ({:.0f}s)\n", epoch, step, total,
                 loss_sum / std::max(loss_count, 1), metrics::format_psnr(report.psnr_db), sec);
      loss_sum = 0.0;
      loss_count = 0;
    }
    if (epoch % tc.checkpoint_every == 0 || last) {
      save_checkpoint(a.out / "checkpoints" / fmt::format("epoch_{:04d}", epoch), model, &trainer.state());
    }
  }
  save_checkpoint(a.out / "final", model, &trainer.state());
  fmt::print("checkpoint {}\n", (a.out / "final").string());
  return 0;
}

// infer --------------------------------------------------------------------

int cmd_infer(const InferArgs& a) {
  if (!(a.scale > 0.0)) throw InputError("--scale must be positive");
  const Model model = restore_model(load_checkpoint(a.checkpoint));
  auto run_one = [&](const fs::path& in, const fs::path& out) {
    const Image lr = data::to_channels(read_png(in), model.config().in_channels());
    const Image sr = clamp01(model.upscale(lr, a.scale));
    write_png(out, sr);
    fmt::print("{} {}x{} -> {} {}x{}\n", in.string(), lr.h(), lr.w(), out.string(), sr.h(), sr.w());
  };
  if (fs::is_directory(a.input)) {
    const data::ImageFolder folder(a.input);
    ensure_dir(a.out);
    for (const auto& p : folder.paths()) run_one(p, a.out / p.filename());
  } else {
    if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
    run_one(a.input, a.out);
  }
  return 0;
}

// eval ---------------------------------------------------------------------

int cmd_eval(const EvalArgs& a) {
  const std::vector<double> scales = parse_scales(a.scales);
  const Model model = restore_model(load_checkpoint(a.checkpoint));
  const data::ImageFolder folder(split_dir(a.data, "val"));
  const std::vector<Image> images = folder.load_all();
  const std::vector<std::string> names = stems(folder);

  std::string tables, kv;
  for (double s : scales) {
    const std::string tag = scale_tag(s);
    const auto report = training::evaluate(model, images, s, names);

    std::vector<metrics::ImageScore> base;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Image gt = data::to_channels(images[i], model.config().out_channels());
      const Image lr = training::degrade_for_scale(gt, s);
      const Image up = clamp01(data::bicubic_resize(lr, gt.h(), gt.w()));
      base.push_back({names[i], metrics::psnr(up, gt),
                      gt.h() >= 11 && gt.w() >= 11 ? metrics::ssim(up, gt) : 0.0});
    }
    const auto bicubic = metrics::MetricReport::aggregate(std::move(base));

    const Image lr0 = training::degrade_for_scale(images[0], s);
    const std::uint64_t flops = metrics::count_flops(model.config(), lr0.h(), lr0.w(), s);

    tables += report.table(tag, a.per_image);
    tables += fmt::format("{:<24} {:>10} {:>8.4f}\n", "bicubic", metrics::format_psnr(bicubic.psnr_db), bicubic.ssim);
    tables += fmt::format("{:<24} {:>10.3f}G (first image, {}x{} input)\n\n", "flops", flops / 1e9, lr0.h(), lr0.w());
    kv += report.key_values(tag + ".", a.per_image);
    kv += bicubic.key_values(tag + ".bicubic.", false);
    kv += fmt::format("{}.flops={}\n", tag, flops);
  }
  fmt::print("{}", tables);
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(a.out / "metrics.txt", tables);
    write_text(a.out / "metrics.kv", kv);
  }
  return 0;
}

// ablate -------------------------------------------------------------------

int cmd_ablate(const AblateArgs& a) {
  const ablation::Axis axis = ablation::axis_from_string(a.axis);
  const RunConfig run = resolve(a.config, a.overrides, a.seed);
  const ModelConfig base = ModelConfig::from_config(run.values);
  const training::TrainConfig tc = training::TrainConfig::from_config(run.values);
  const std::vector<int> seeds =
      a.seed ? std::vector<int>{static_cast<int>(*a.seed)}
             : run.values.get_int_list("sweep.seeds", {static_cast<int>(run.seed)});

  const data::ImageFolder train_folder(split_dir(a.data, "train"));
  const data::ImageFolder val_folder(split_dir(a.data, "val"));
  const auto train = train_folder.load_all();
  const auto val = val_folder.load_all();

  ensure_dir(a.out);
  run.values.save(a.out / "run.cfg");
  auto runs_log = fmt::output_file((a.out / "runs.kv").string());

  std::vector<ablation::RunResult> results;
  for (int seed : seeds) {
    for (const auto& v : ablation::variants(axis, base)) {
      const auto r = ablation::run_variant(v, tc, a.steps.value_or(0), train, val, tc.val_scale,
                                           static_cast<std::uint64_t>(seed));
      runs_log.print("variant={} seed={} steps={} loss={:.6f} order_hash={:016x} val_psnr={} val_ssim={:.6f}\n",
                     r.variant, r.seed, r.steps, r.final_loss, r.order_hash, metrics::format_psnr(r.val.psnr_db),
                     r.val.ssim);
      runs_log.flush();
      fmt::print("{} seed {}: {} dB (order {:016x})\n", r.variant, r.seed, metrics::format_psnr(r.val.psnr_db),
                 r.order_hash);
      results.push_back(r);
    }
  }
  const auto rows = ablation::summarize(results);
  const std::string text = ablation::table(axis, rows);
  write_text(a.out / "ablation.txt", text);
  fmt::print("\n{}", text);
  return 0;
}

}  // namespace sgsasr::cli
