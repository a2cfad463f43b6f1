#include "sgsasr/encoder.hpp"

#include "sgsasr/errors.hpp"
#include "sgsasr/ops.hpp"

namespace sgsasr::encoder {

using ag::Var;

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::affem: return "affem";
    case Fusion::sum: return "sum";
    case Fusion::concat: return "concat";
  }
  return "affem";
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "affem") return Fusion::affem;
  if (s == "sum") return Fusion::sum;
  if (s == "concat") return Fusion::concat;
  throw ConfigError("fusion must be one of affem, sum, concat; got '" + s + "'");
}

std::vector<int> EncoderConfig::widths() const {
  std::vector<int> out;
  for (int i = 0; i < levels(); ++i) out.push_back(base_width << i);
  return out;
}

void EncoderConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) throw ConfigError("encoder: in_channels must be 1 or 3");
  if (base_width < 1 || out_dim < 1) throw ConfigError("encoder: widths must be positive");
  if (enc_blocks.size() != dec_blocks.size()) {
    throw ConfigError("encoder: enc_blocks and dec_blocks must have equal length");
  }
  if (enc_blocks.empty()) throw ConfigError("encoder: at least one level required");
  for (int b : enc_blocks) if (b < 0) throw ConfigError("encoder: negative block count");
  for (int b : dec_blocks) if (b < 0) throw ConfigError("encoder: negative block count");
  if (middle_blocks < 0) throw ConfigError("encoder: negative middle block count");
  if (dw_expansion < 1 || ffn_expansion < 1) throw ConfigError("encoder: expansions must be >= 1");
  // SimpleGate halves channels; the expanded width must be even.
  if ((dw_expansion * base_width) % 2 != 0 || (ffn_expansion * base_width) % 2 != 0) {
    throw ConfigError("encoder: expanded widths must be even");
  }
}

EncoderConfig EncoderConfig::from_config(const Config& cfg) {
  EncoderConfig out;
  out.in_channels = cfg.get_int("model.in_channels", out.in_channels);
  out.base_width = cfg.get_int("encoder.base_width", out.base_width);
  out.enc_blocks = cfg.get_int_list("encoder.enc_blocks", out.enc_blocks);
  out.middle_blocks = cfg.get_int("encoder.middle_blocks", out.middle_blocks);
  out.dec_blocks = cfg.get_int_list("encoder.dec_blocks", out.dec_blocks);
  out.out_dim = cfg.get_int("encoder.out_dim", out.out_dim);
  out.ffn_expansion = cfg.get_int("encoder.ffn_expansion", out.ffn_expansion);
  out.dw_expansion = cfg.get_int("encoder.dw_expansion", out.dw_expansion);
  out.fusion = fusion_from_string(cfg.get_string("ablation.fusion", "affem"));
  out.affem_per_channel = cfg.get_bool("affem.per_channel", false);
  return out;
}

void EncoderConfig::to_config(Config& cfg) const {
  cfg.set("model.in_channels", in_channels);
  cfg.set("encoder.base_width", base_width);
  cfg.set("encoder.enc_blocks", enc_blocks);
  cfg.set("encoder.middle_blocks", middle_blocks);
  cfg.set("encoder.dec_blocks", dec_blocks);
  cfg.set("encoder.out_dim", out_dim);
  cfg.set("encoder.ffn_expansion", ffn_expansion);
  cfg.set("encoder.dw_expansion", dw_expansion);
  cfg.set("ablation.fusion", to_string(fusion));
  cfg.set("affem.per_channel", affem_per_channel);
}

Var simple_gate(const Var& x) { return ops::simple_gate(x); }

Var simplified_channel_attention(const Var& x, const Var& weight, const Var& bias) {
  return ops::mul_channel_broadcast(x, ops::conv2d(ops::global_avg_pool(x), weight, bias));
}

Var affem_fuse(const Var& f, const Var& f_s, const AffemWeights& w) {
  return ops::weighted_sum(f, w.w1, f_s, w.w2);
}

namespace {

void add_conv(ParameterStore& params, const std::string& name, int out, int in, int k,
              std::uint64_t seed, bool bias = true) {
  params.add_uniform(name + ".weight", {out, in, k, k}, in * k * k, seed);
  if (bias) params.add_uniform(name + ".bias", {1, out, 1, 1}, in * k * k, seed);
}

void add_layer_norm(ParameterStore& params, const std::string& name, int width) {
  params.add(name + ".weight", Tensor({1, width, 1, 1}, 1.0));
  params.add(name + ".bias", Tensor({1, width, 1, 1}, 0.0));
}

Var conv(const Var& x, const ParameterStore& params, const std::string& name,
         ops::Conv2dSpec spec = {}) {
  const std::string bias_name = name + ".bias";
  const Var bias = params.contains(bias_name) ? params.get(bias_name) : Var();
  return ops::conv2d(x, params.get(name + ".weight"), bias, spec);
}

std::string block_name(const std::string& stage, int block) {
  return stage + ".block" + std::to_string(block);
}

Var run_blocks(Var x, const ParameterStore& params, const std::string& stage, int count) {
  for (int b = 0; b < count; ++b) x = naf_block(x, params, block_name(stage, b));
  return x;
}

}  // namespace

std::string fusion_prefix(int level) { return "encoder.fuse" + std::to_string(level); }

void add_naf_block_parameters(ParameterStore& params, const std::string& prefix, int width,
                              int dw_expansion, int ffn_expansion, std::uint64_t seed) {
  const int dw = width * dw_expansion;
  const int ffn = width * ffn_expansion;
  add_layer_norm(params, prefix + ".norm1", width);
  add_conv(params, prefix + ".conv1", dw, width, 1, seed);
  params.add_uniform(prefix + ".conv2.weight", {dw, 1, 3, 3}, 9, seed);
  params.add_uniform(prefix + ".conv2.bias", {1, dw, 1, 1}, 9, seed);
  add_conv(params, prefix + ".sca", dw / 2, dw / 2, 1, seed);
  add_conv(params, prefix + ".conv3", width, dw / 2, 1, seed);
  add_layer_norm(params, prefix + ".norm2", width);
  add_conv(params, prefix + ".conv4", ffn, width, 1, seed);
  add_conv(params, prefix + ".conv5", width, ffn / 2, 1, seed);
}

Var naf_block(const Var& x, const ParameterStore& params, const std::string& prefix) {
  auto p = [&](const char* suffix) -> const Var& { return params.get(prefix + suffix); };
  const int dw = p(".conv2.weight").shape().n;

  Var y = ops::layer_norm_channels(x, p(".norm1.weight"), p(".norm1.bias"));
  y = conv(y, params, prefix + ".conv1");
  y = ops::conv2d(y, p(".conv2.weight"), p(".conv2.bias"), {1, 1, dw});
  y = simple_gate(y);
  y = simplified_channel_attention(y, p(".sca.weight"), p(".sca.bias"));
  y = conv(y, params, prefix + ".conv3");
  const Var x1 = ops::add(x, y);

  Var z = ops::layer_norm_channels(x1, p(".norm2.weight"), p(".norm2.bias"));
  z = conv(z, params, prefix + ".conv4");
  z = simple_gate(z);
  z = conv(z, params, prefix + ".conv5");
  return ops::add(x1, z);
}

void add_encoder_parameters(ParameterStore& params, const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto widths = cfg.widths();
  add_conv(params, "encoder.shallow", cfg.base_width, cfg.in_channels, 3, seed);
  for (int i = 0; i < cfg.levels(); ++i) {
    const int c = widths[i];
    const std::string stage = "encoder.enc" + std::to_string(i);
    for (int b = 0; b < cfg.enc_blocks[i]; ++b) {
      add_naf_block_parameters(params, block_name(stage, b), c, cfg.dw_expansion, cfg.ffn_expansion, seed);
    }
    const std::string fuse = fusion_prefix(i);
    switch (cfg.fusion) {
      case Fusion::affem: {
        const Shape ws = cfg.affem_per_channel ? Shape{1, c, 1, 1} : Shape{1, 1, 1, 1};
        params.add(fuse + ".w1", Tensor(ws, 1.0));
        params.add(fuse + ".w2", Tensor(ws, 1.0));
        break;
      }
      case Fusion::concat:
        add_conv(params, fuse + ".reduce", c, 2 * c, 1, seed);
        break;
      case Fusion::sum:
        break;
    }
    add_conv(params, "encoder.down" + std::to_string(i), 2 * c, c, 2, seed);
  }
  const int mid = cfg.middle_width();
  for (int b = 0; b < cfg.middle_blocks; ++b) {
    add_naf_block_parameters(params, block_name("encoder.middle", b), mid, cfg.dw_expansion,
                             cfg.ffn_expansion, seed);
  }
  for (int j = 0; j < cfg.levels(); ++j) {
    const int level = cfg.levels() - 1 - j;
    const int c = widths[level];
    add_conv(params, "encoder.up" + std::to_string(j), 4 * c, 2 * c, 1, seed, false);
    const std::string stage = "encoder.dec" + std::to_string(j);
    for (int b = 0; b < cfg.dec_blocks[j]; ++b) {
      add_naf_block_parameters(params, block_name(stage, b), c, cfg.dw_expansion, cfg.ffn_expansion, seed);
    }
  }
  add_conv(params, "encoder.final", cfg.out_dim, cfg.base_width, 3, seed);
  add_conv(params, "encoder.residual", cfg.out_dim, cfg.base_width, 1, seed);
}

Var sfeem_forward(const Var& image, const std::vector<Var>& pyramid, const ParameterStore& params,
                  const EncoderConfig& cfg) {
  const Shape s = image.shape();
  const int m = cfg.pad_multiple();
  if (s.h % m != 0 || s.w % m != 0) {
    throw InputError("encoder input " + s.str() + " must have height and width divisible by " +
                     std::to_string(m));
  }
  if (s.c != cfg.in_channels) {
    throw InputError("encoder expects " + std::to_string(cfg.in_channels) + " channels, got " +
                     std::to_string(s.c));
  }
  if (static_cast<int>(pyramid.size()) != cfg.levels()) {
    throw InputError("saliency pyramid has " + std::to_string(pyramid.size()) + " levels, encoder " +
                     std::to_string(cfg.levels()));
  }

  const Var shallow = conv(image, params, "encoder.shallow", {1, 1, 1});
  Var x = shallow;
  std::vector<Var> skips;
  for (int i = 0; i < cfg.levels(); ++i) {
    x = run_blocks(x, params, "encoder.enc" + std::to_string(i), cfg.enc_blocks[i]);
    const Var& fs = pyramid[i];
    if (fs.shape() != x.shape()) {
      throw InputError("fusion site " + std::to_string(i) + ": saliency features " + fs.shape().str() +
                       " vs encoder features " + x.shape().str());
    }
    const std::string fuse = fusion_prefix(i);
    switch (cfg.fusion) {
      case Fusion::affem:
        x = affem_fuse(x, fs, {params.get(fuse + ".w1"), params.get(fuse + ".w2")});
        break;
      case Fusion::sum:
        x = ops::add(x, fs);
        break;
      case Fusion::concat: {
        const Var parts[] = {x, fs};
        x = conv(ops::concat_channels(parts), params, fuse + ".reduce");
        break;
      }
    }
    skips.push_back(x);
    x = conv(x, params, "encoder.down" + std::to_string(i), {2, 0, 1});
  }
  x = run_blocks(x, params, "encoder.middle", cfg.middle_blocks);
  for (int j = 0; j < cfg.levels(); ++j) {
    const int level = cfg.levels() - 1 - j;
    x = ops::pixel_shuffle(conv(x, params, "encoder.up" + std::to_string(j)), 2);
    x = ops::add(x, skips[level]);
    x = run_blocks(x, params, "encoder.dec" + std::to_string(j), cfg.dec_blocks[j]);
  }
  const Var out = conv(x, params, "encoder.final", {1, 1, 1});
  return ops::add(out, conv(shallow, params, "encoder.residual"));
}

}  // namespace sgsasr::encoder
