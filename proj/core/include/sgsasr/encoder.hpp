#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgsasr/autograd.hpp"
#include "sgsasr/config.hpp"
#include "sgsasr/parameters.hpp"

namespace sgsasr::encoder {

/// How saliency features are merged into encoder features at each downsampling input.
enum class Fusion { affem, sum, concat };

[[nodiscard]] std::string to_string(Fusion f);
[[nodiscard]] Fusion fusion_from_string(const std::string& s);

struct EncoderConfig {
  int in_channels = 1;
  int base_width = 32;
  std::vector<int> enc_blocks{2, 2, 4, 8};
  int middle_blocks = 12;
  std::vector<int> dec_blocks{2, 2, 2, 2};
  int out_dim = 128;
  int ffn_expansion = 2;
  int dw_expansion = 2;
  Fusion fusion = Fusion::affem;
  bool affem_per_channel = false;

  [[nodiscard]] int levels() const { return static_cast<int>(enc_blocks.size()); }
  /// Channel width at each encoder level; doubles per downsample.
  [[nodiscard]] std::vector<int> widths() const;
  [[nodiscard]] int middle_width() const { return base_width << levels(); }
  /// Input height and width must be multiples of this.
  [[nodiscard]] int pad_multiple() const { return 1 << levels(); }

  void validate() const;
  static EncoderConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Learnable scalar (or per-channel) fusion weights for one site.
struct AffemWeights {
  ag::Var w1;
  ag::Var w2;
};

/// First half of the channels times the second half.
[[nodiscard]] ag::Var simple_gate(const ag::Var& x);

/// x * conv1x1(GAP(x)).
[[nodiscard]] ag::Var simplified_channel_attention(const ag::Var& x, const ag::Var& weight,
                                                   const ag::Var& bias);

/// w1 * f + w2 * f_s with broadcast weights.
[[nodiscard]] ag::Var affem_fuse(const ag::Var& f, const ag::Var& f_s, const AffemWeights& w);

/// Registers one NAFBlock's parameters under `prefix`.
void add_naf_block_parameters(ParameterStore& params, const std::string& prefix, int width,
                              int dw_expansion, int ffn_expansion, std::uint64_t seed);

/// X1 = X + conv(SCA(SG(dwconv(conv(LN(X)))))); out = X1 + conv(SG(conv(LN(X1)))).
[[nodiscard]] ag::Var naf_block(const ag::Var& x, const ParameterStore& params,
                                const std::string& prefix);

void add_encoder_parameters(ParameterStore& params, const EncoderConfig& cfg, std::uint64_t seed);

/// Full encoder. `image` spatial dims must be multiples of cfg.pad_multiple();
/// `pyramid` holds one map per level matching cfg.widths().
/// Returns (n, out_dim, h, w).
[[nodiscard]] ag::Var sfeem_forward(const ag::Var& image, const std::vector<ag::Var>& pyramid,
                                    const ParameterStore& params, const EncoderConfig& cfg);

/// Name of the parameter prefix of the fusion site at `level`.
[[nodiscard]] std::string fusion_prefix(int level);

}  // namespace sgsasr::encoder
