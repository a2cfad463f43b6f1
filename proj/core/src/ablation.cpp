#include "sgsasr/ablation.hpp"

#include <fmt/format.h>

#include <map>

#include "sgsasr/errors.hpp"

namespace sgsasr::ablation {

std::string to_string(Axis a) {
  switch (a) {
    case Axis::modules: return "modules";
    case Axis::fusion: return "fusion";
    case Axis::modulation: return "modulation";
  }
  return "?";
}

Axis axis_from_string(const std::string& s) {
  if (s == "modules") return Axis::modules;
  if (s == "fusion") return Axis::fusion;
  if (s == "modulation") return Axis::modulation;
  throw ConfigError("unknown ablation axis '" + s + "'; valid axes: modules, fusion, modulation");
}

std::vector<Variant> variants(Axis axis, const ModelConfig& base) {
  std::vector<Variant> out;
  auto with = [&](std::string name, auto&& edit) {
    ModelConfig cfg = base;
    edit(cfg);
    out.push_back({std::move(name), std::move(cfg)});
  };
  switch (axis) {
    case Axis::modules:
      with("baseline", [](ModelConfig& c) { c.use_scrrb = false; });
      with("+scrrb", [](ModelConfig& c) {
        c.use_scrrb = true;
        c.encoder.fusion = encoder::Fusion::sum;
      });
      with("+scrrb+affem", [](ModelConfig& c) {
        c.use_scrrb = true;
        c.encoder.fusion = encoder::Fusion::affem;
      });
      break;
    case Axis::fusion:
      with("summation", [](ModelConfig& c) { c.encoder.fusion = encoder::Fusion::sum; });
      with("concatenation", [](ModelConfig& c) { c.encoder.fusion = encoder::Fusion::concat; });
      with("affem", [](ModelConfig& c) { c.encoder.fusion = encoder::Fusion::affem; });
      break;
    case Axis::modulation:
      with("none", [](ModelConfig& c) { c.decoder.modulation = decoder::Modulation::none; });
      with("scale", [](ModelConfig& c) { c.decoder.modulation = decoder::Modulation::scale; });
      with("shift", [](ModelConfig& c) { c.decoder.modulation = decoder::Modulation::shift; });
      with("scale+shift", [](ModelConfig& c) { c.decoder.modulation = decoder::Modulation::both; });
      break;
  }
  return out;
}

RunResult run_variant(const Variant& v, const training::TrainConfig& train, std::int64_t steps,
                      std::span<const Image> train_images, std::span<const Image> val_images, double val_scale,
                      std::uint64_t seed) {
  Model model(v.model, seed);
  training::Trainer trainer(model, train, {train_images.begin(), train_images.end()}, seed);
  if (steps <= 0) steps = trainer.total_steps();
  RunResult r;
  r.variant = v.name;
  r.seed = seed;
  r.steps = steps;
  for (std::int64_t i = 0; i < steps; ++i) r.final_loss = trainer.step();
  r.order_hash = trainer.order_hash(steps);
  r.val = training::evaluate(model, val_images, val_scale);
  return r;
}

std::vector<Row> summarize(std::span<const RunResult> results) {
  std::vector<Row> rows;
  std::map<std::string, std::size_t> slot;
  for (const auto& r : results) {
    auto [it, fresh] = slot.emplace(r.variant, rows.size());
    if (fresh) rows.push_back({r.variant, 0.0, 0.0, 0});
    Row& row = rows[it->second];
    row.psnr_db += r.val.psnr_db;
    row.ssim += r.val.ssim;
    ++row.runs;
  }
  for (auto& row : rows) {
    row.psnr_db /= row.runs;
    row.ssim /= row.runs;
  }
  return rows;
}

std::string table(Axis axis, std::span<const Row> rows) {
  std::string out = fmt::format("{:<16} {:>10} {:>8} {:>5}\n", to_string(axis), "PSNR(dB)", "SSIM", "runs");
  for (const auto& r : rows) {
    out += fmt::format("{:<16} {:>10} {:>8.4f} {:>5}\n", r.variant, metrics::format_psnr(r.psnr_db), r.ssim, r.runs);
  }
  return out;
}

}  // namespace sgsasr::ablation
