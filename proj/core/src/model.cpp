#include "sgsasr/model.hpp"

#include <cmath>
#include <cstdio>

#include "sgsasr/errors.hpp"
#include "sgsasr/ops.hpp"
#include "sgsasr/rng.hpp"

namespace sgsasr {

using ag::Var;

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.out_dim != decoder.latent_dim) {
    throw ConfigError("encoder out_dim " + std::to_string(encoder.out_dim) + " != decoder latent_dim " +
                      std::to_string(decoder.latent_dim));
  }
  if (in_channels() != 1 && in_channels() != 3) throw ConfigError("in_channels must be 1 or 3");
  if (out_channels() != 1 && out_channels() != 3) throw ConfigError("out_channels must be 1 or 3");
  if (!std::isfinite(saliency.k)) throw ConfigError("saliency.k must be finite");
}

ModelConfig ModelConfig::from_config(const Config& cfg) {
  ModelConfig out;
  out.encoder = encoder::EncoderConfig::from_config(cfg);
  out.decoder = decoder::DecoderConfig::from_config(cfg);
  out.saliency = saliency::BackendConfig::from_config(cfg);
  out.use_scrrb = cfg.get_bool("ablation.use_scrrb", out.use_scrrb);
  out.validate();
  return out;
}

void ModelConfig::to_config(Config& cfg) const {
  encoder.to_config(cfg);
  decoder.to_config(cfg);
  saliency.to_config(cfg);
  cfg.set("ablation.use_scrrb", use_scrrb);
}

Config ModelConfig::to_config() const {
  Config cfg;
  to_config(cfg);
  return cfg;
}

std::string ModelConfig::hash() const {
  Config cfg = to_config();
  // Where the detector file lives does not change the network.
  Config stable;
  for (const auto& [k, v] : cfg.values()) {
    if (k != "saliency.model_path") stable.set(k, v);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(stable.to_text())));
  return buf;
}

ModelConfig ModelConfig::desk_profile() {
  ModelConfig cfg;
  cfg.encoder.base_width = 16;
  cfg.encoder.enc_blocks = {1, 1, 1, 1};
  cfg.encoder.middle_blocks = 1;
  cfg.encoder.dec_blocks = {1, 1, 1, 1};
  cfg.encoder.out_dim = 64;
  cfg.decoder.latent_dim = 64;
  cfg.decoder.latent_hidden = 64;
  return cfg;
}

ModelConfig ModelConfig::toy(int width, int out_dim) {
  ModelConfig cfg = desk_profile();
  cfg.encoder.base_width = width;
  cfg.encoder.out_dim = out_dim;
  cfg.decoder.latent_dim = out_dim;
  return cfg;
}

std::pair<int, int> output_size(int h, int w, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InputError("scale must be a positive finite number");
  }
  const long oh = std::lround(h * scale);
  const long ow = std::lround(w * scale);
  if (oh < 1 || ow < 1) throw InputError("scale produces an empty output");
  return {static_cast<int>(oh), static_cast<int>(ow)};
}

std::string modulation_layer_name(const decoder::DecoderConfig& cfg) {
  return "decoder.latent.fc" + std::to_string(cfg.latent_layers);
}

namespace {

// Zeroes and freezes rows [begin, end) of a (rows, in, 1, 1) weight and its bias.
void freeze_rows(ParameterStore& params, const std::string& layer, int begin, int end) {
  const std::string wname = layer + ".weight";
  const std::string bname = layer + ".bias";
  Var& weight = params.get(wname);
  Var& bias = params.get(bname);
  const std::size_t in = static_cast<std::size_t>(weight.shape().c);
  for (int r = begin; r < end; ++r) {
    for (std::size_t j = 0; j < in; ++j) weight.mutable_value()[r * in + j] = 0.0;
    bias.mutable_value()[r] = 0.0;
  }
  params.freeze_range(wname, begin * in, end * in);
  params.freeze_range(bname, begin, end);
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  if (cfg_.use_scrrb) saliency::add_pyramid_parameters(params_, cfg_.encoder.widths(), seed_);
  encoder::add_encoder_parameters(params_, cfg_.encoder, seed_);
  decoder::add_decoder_parameters(params_, cfg_.decoder, seed_);

  const auto& dc = cfg_.decoder;
  const std::string layer = modulation_layer_name(dc);
  const int rw = dc.render_width;
  for (int k = 0; k < dc.K; ++k) {
    const int alpha = 2 * k * rw;
    const int beta = (2 * k + 1) * rw;
    switch (dc.modulation) {
      case decoder::Modulation::both:
        break;
      case decoder::Modulation::scale:
        freeze_rows(params_, layer, beta, beta + rw);
        break;
      case decoder::Modulation::shift:
        freeze_rows(params_, layer, alpha, alpha + rw);
        break;
      case decoder::Modulation::none: {
        // Unused by the render MLP; frozen so the optimizer leaves them alone.
        const std::size_t in = static_cast<std::size_t>(params_.get(layer + ".weight").shape().c);
        params_.freeze_range(layer + ".weight", alpha * in, (beta + rw) * in);
        params_.freeze_range(layer + ".bias", alpha, beta + rw);
        break;
      }
    }
  }

  if (cfg_.use_scrrb) detector_ = saliency::make_detector(cfg_.saliency);
  else detector_ = std::make_shared<saliency::LuminanceDetector>(cfg_.saliency.k);
}

Tensor Model::saliency_map(const Tensor& lr) const { return saliency::detect_saliency(lr, *detector_); }

Var Model::features(const Tensor& lr) const {
  const Shape s = lr.shape();
  if (s.numel() == 0) throw InputError("empty input image");
  if (s.c != cfg_.in_channels()) {
    throw InputError("model expects " + std::to_string(cfg_.in_channels()) + " input channels, got " +
                     std::to_string(s.c));
  }
  for (double v : lr.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("input image values must lie in [0, 1]");
  }
  const int m = cfg_.encoder.pad_multiple();
  const int hp = (s.h + m - 1) / m * m;
  const int wp = (s.w + m - 1) / m * m;
  const Var image(ops::pad_reflect(lr, hp, wp));

  const auto widths = cfg_.encoder.widths();
  std::vector<Var> pyramid;
  if (cfg_.use_scrrb) {
    const Var map(ops::pad_reflect(saliency_map(lr), hp, wp));
    pyramid = saliency::saliency_feature_pyramid(map, params_, widths);
  } else {
    for (int i = 0; i < cfg_.encoder.levels(); ++i) {
      pyramid.emplace_back(Tensor({s.n, widths[i], hp >> i, wp >> i}));
    }
  }
  const Var feat = encoder::sfeem_forward(image, pyramid, params_, cfg_.encoder);
  return ops::crop(feat, s.h, s.w);
}

Var Model::predict(const Tensor& lr, std::span<const decoder::QuerySet> queries,
                   decoder::DecodeStats* stats) const {
  return decoder::decode_queries(features(lr), queries, params_, cfg_.decoder, stats);
}

Tensor Model::forward(const Tensor& lr, int h_out, int w_out, decoder::DecodeStats* stats) const {
  ag::NoGradGuard no_grad;
  return decoder::decode_image(features(lr), h_out, w_out, params_, cfg_.decoder, stats);
}

Tensor Model::upscale(const Tensor& lr, double scale) const {
  const auto [h, w] = output_size(lr.h(), lr.w(), scale);
  return forward(lr, h, w);
}

}  // namespace sgsasr
