#include "sgsasr/flops.hpp"

#include <fmt/format.h>

#include "sgsasr/ops.hpp"

namespace sgsasr::metrics {

using u64 = std::uint64_t;

u64 FlopLedger::total() const {
  u64 t = 0;
  for (const auto& e : entries) t += e.flops;
  return t;
}

u64 FlopLedger::sum(const std::string& prefix) const {
  u64 t = 0;
  for (const auto& e : entries) {
    if (e.layer.starts_with(prefix)) t += e.flops;
  }
  return t;
}

std::string FlopLedger::dump() const {
  std::string out;
  for (const auto& e : entries) out += fmt::format("{},{}\n", e.layer, e.flops);
  return out;
}

namespace {

u64 conv(u64 cout, u64 cin_per_group, u64 k, u64 plane_out) { return 2 * cout * cin_per_group * k * k * plane_out; }

void naf_block(FlopLedger& l, const std::string& name, const encoder::EncoderConfig& cfg, u64 c, u64 plane) {
  const u64 dw = c * cfg.dw_expansion;
  const u64 ffn = c * cfg.ffn_expansion;
  l.add(name + ".norm1", ops::kLayerNormFlopsPerElement * c * plane);
  l.add(name + ".conv1", conv(dw, c, 1, plane));
  l.add(name + ".conv2", conv(dw, 1, 3, plane));
  l.add(name + ".gate1", dw / 2 * plane);
  l.add(name + ".sca.pool", dw / 2 * plane);
  l.add(name + ".sca.conv", conv(dw / 2, dw / 2, 1, 1));
  l.add(name + ".sca.scale", dw / 2 * plane);
  l.add(name + ".conv3", conv(c, dw / 2, 1, plane));
  l.add(name + ".add1", c * plane);
  l.add(name + ".norm2", ops::kLayerNormFlopsPerElement * c * plane);
  l.add(name + ".conv4", conv(ffn, c, 1, plane));
  l.add(name + ".gate2", ffn / 2 * plane);
  l.add(name + ".conv5", conv(c, ffn / 2, 1, plane));
  l.add(name + ".add2", c * plane);
}

void encoder_ledger(FlopLedger& l, const ModelConfig& cfg, int h, int w) {
  const auto& e = cfg.encoder;
  const int m = e.pad_multiple();
  const u64 hp = static_cast<u64>((h + m - 1) / m * m);
  const u64 wp = static_cast<u64>((w + m - 1) / m * m);
  const auto widths = e.widths();
  const auto plane = [&](int level) { return (hp >> level) * (wp >> level); };

  if (cfg.use_scrrb) {
    l.add("saliency.pyramid.conv0", conv(widths[0], 1, 3, plane(0)));
    for (int i = 1; i < e.levels(); ++i) {
      l.add("saliency.pyramid.down" + std::to_string(i), conv(widths[i], widths[i - 1], 3, plane(i)));
    }
  }
  l.add("encoder.shallow", conv(e.base_width, e.in_channels, 3, plane(0)));
  for (int i = 0; i < e.levels(); ++i) {
    const u64 c = widths[i];
    for (int b = 0; b < e.enc_blocks[i]; ++b) {
      naf_block(l, "encoder.enc" + std::to_string(i) + ".block" + std::to_string(b), e, c, plane(i));
    }
    const std::string fuse = "encoder.fuse" + std::to_string(i);
    switch (e.fusion) {
      case encoder::Fusion::affem:
        l.add(fuse, ops::kWeightedFuseFlopsPerElement * c * plane(i));
        break;
      case encoder::Fusion::sum:
        l.add(fuse, c * plane(i));
        break;
      case encoder::Fusion::concat:
        l.add(fuse + ".reduce", conv(c, 2 * c, 1, plane(i)));
        break;
    }
    l.add("encoder.down" + std::to_string(i), conv(2 * c, c, 2, plane(i + 1)));
  }
  for (int b = 0; b < e.middle_blocks; ++b) {
    naf_block(l, "encoder.middle.block" + std::to_string(b), e, e.middle_width(), plane(e.levels()));
  }
  for (int j = 0; j < e.levels(); ++j) {
    const int level = e.levels() - 1 - j;
    const u64 c = widths[level];
    l.add("encoder.up" + std::to_string(j), conv(4 * c, 2 * c, 1, plane(level + 1)));
    l.add("encoder.skip" + std::to_string(j), c * plane(level));
    for (int b = 0; b < e.dec_blocks[j]; ++b) {
      naf_block(l, "encoder.dec" + std::to_string(j) + ".block" + std::to_string(b), e, c, plane(level));
    }
  }
  l.add("encoder.final", conv(e.out_dim, e.base_width, 3, plane(0)));
  l.add("encoder.residual", conv(e.out_dim, e.base_width, 1, plane(0)));
  l.add("encoder.residual_add", static_cast<u64>(e.out_dim) * plane(0));
}

void latent_mlp(FlopLedger& l, const decoder::DecoderConfig& d, u64 evals) {
  u64 in = d.latent_input_dim();
  for (int i = 0; i < d.latent_layers; ++i) {
    const std::string name = "decoder.latent.fc" + std::to_string(i);
    l.add(name, 2 * in * d.latent_hidden * evals);
    l.add(name + ".relu", static_cast<u64>(d.latent_hidden) * evals);
    in = d.latent_hidden;
  }
  l.add("decoder.latent.fc" + std::to_string(d.latent_layers), 2 * in * d.latent_out * evals);
}

}  // namespace

FlopLedger flop_ledger(const ModelConfig& cfg, int h, int w, double scale) {
  cfg.validate();
  const auto [ho, wo] = output_size(h, w, scale);
  FlopLedger l;
  encoder_ledger(l, cfg, h, w);

  const auto& d = cfg.decoder;
  const u64 latents = static_cast<u64>(h) * w;
  const u64 shifts = d.local_ensemble ? 4 : 1;
  const u64 queries = static_cast<u64>(ho) * wo * shifts;
  latent_mlp(l, d, d.cache_modulation ? latents : queries);

  const u64 rw = d.render_width;
  const bool modulate = d.modulation != decoder::Modulation::none;
  l.add("decoder.render.fc0", 2 * static_cast<u64>(d.render_input_dim()) * rw * queries);
  for (int k = 1; k <= d.K; ++k) {
    const std::string name = "decoder.render.fc" + std::to_string(k);
    if (modulate) l.add(name + ".film", ops::kFilmFlopsPerElement * rw * queries);
    l.add(name + ".relu", rw * queries);
    const u64 out = k == d.K ? static_cast<u64>(d.out_channels) : rw;
    l.add(name, 2 * rw * out * queries);
  }
  if (d.local_ensemble) {
    const u64 pixels = static_cast<u64>(ho) * wo * d.out_channels;
    l.add("decoder.ensemble.weight", 4 * pixels);
    l.add("decoder.ensemble.sum", 3 * pixels);
  }
  return l;
}

u64 count_flops(const ModelConfig& cfg, int h, int w, double scale) { return flop_ledger(cfg, h, w, scale).total(); }

FlopLedger liif_baseline_ledger(const ModelConfig& cfg, int h, int w, double scale) {
  cfg.validate();
  const auto [ho, wo] = output_size(h, w, scale);
  FlopLedger l;
  encoder_ledger(l, cfg, h, w);

  constexpr u64 kHidden = 256;
  constexpr int kHiddenLayers = 4;
  const u64 queries = static_cast<u64>(ho) * wo * 4;
  u64 in = 9 * static_cast<u64>(cfg.encoder.out_dim) + 4;
  for (int i = 0; i < kHiddenLayers; ++i) {
    const std::string name = "decoder.mlp.fc" + std::to_string(i);
    l.add(name, 2 * in * kHidden * queries);
    l.add(name + ".relu", kHidden * queries);
    in = kHidden;
  }
  l.add("decoder.mlp.fc" + std::to_string(kHiddenLayers), 2 * in * cfg.decoder.out_channels * queries);
  const u64 pixels = static_cast<u64>(ho) * wo * cfg.decoder.out_channels;
  l.add("decoder.ensemble.weight", 4 * pixels);
  l.add("decoder.ensemble.sum", 3 * pixels);
  return l;
}

u64 count_liif_baseline_flops(const ModelConfig& cfg, int h, int w, double scale) {
  return liif_baseline_ledger(cfg, h, w, scale).total();
}

}  // namespace sgsasr::metrics
