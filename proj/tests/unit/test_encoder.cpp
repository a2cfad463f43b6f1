#include <gtest/gtest.h>

#include <cmath>

#include "sgsasr/encoder.hpp"
#include "sgsasr/errors.hpp"
#include "sgsasr/ops.hpp"
#include "test_util.hpp"

using namespace sgsasr;
using namespace sgsasr::encoder;
using sgsasr::testing::central_difference;
using sgsasr::testing::random_tensor;
using sgsasr::testing::random_var;
using sgsasr::testing::rel_error;

namespace {

EncoderConfig small_config(Fusion fusion = Fusion::affem) {
  EncoderConfig cfg;
  cfg.base_width = 4;
  cfg.enc_blocks = {1, 1};
  cfg.middle_blocks = 1;
  cfg.dec_blocks = {1, 1};
  cfg.out_dim = 6;
  cfg.fusion = fusion;
  return cfg;
}

std::vector<ag::Var> random_pyramid(const EncoderConfig& cfg, int n, int h, int w, Rng& rng) {
  std::vector<ag::Var> out;
  const auto widths = cfg.widths();
  for (int i = 0; i < cfg.levels(); ++i) out.push_back(random_var({n, widths[i], h >> i, w >> i}, rng));
  return out;
}

std::vector<ag::Var> zero_pyramid(const EncoderConfig& cfg, int n, int h, int w) {
  std::vector<ag::Var> out;
  const auto widths = cfg.widths();
  for (int i = 0; i < cfg.levels(); ++i) out.emplace_back(Tensor({n, widths[i], h >> i, w >> i}));
  return out;
}

void zero_params(ParameterStore& params, const std::string& prefix) {
  for (const auto& name : params.names()) {
    if (name.rfind(prefix, 0) == 0) params.get(name).mutable_value().fill(0.0);
  }
}

// Parameter count of one block of width c with both expansions equal to 2.
std::size_t naf_block_count(std::size_t c) { return 7 * c * c + 31 * c; }

}  // namespace

TEST(SimpleGate, ConcatWithOnesIsIdentity) {
  Rng rng(1);
  const ag::Var a = random_var({2, 3, 4, 5}, rng);
  const ag::Var ones(Tensor({2, 3, 4, 5}, 1.0));
  const ag::Var parts[] = {a, ones};
  EXPECT_EQ(simple_gate(ops::concat_channels(parts)).value(), a.value());
}

TEST(SimpleGate, MatchesElementwiseLoop) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 * (1 + trial % 4);
    const Tensor x = random_tensor({1 + trial % 2, c, 3, 2}, rng);
    const Tensor y = simple_gate(ag::Var(x)).value();
    for (int n = 0; n < x.n(); ++n)
      for (int ch = 0; ch < c / 2; ++ch)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 2; ++j) {
            const double expect = x.at(n, ch, i, j) * x.at(n, ch + c / 2, i, j);
            ASSERT_LE(rel_error(y.at(n, ch, i, j), expect), 1e-6);
          }
  }
}

TEST(ChannelAttention, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 1 + trial % 5;
    const Tensor x = random_tensor({1, c, 3 + trial % 3, 4}, rng);
    const Tensor w = random_tensor({c, c, 1, 1}, rng);
    const Tensor b = random_tensor({1, c, 1, 1}, rng);
    const Tensor y = simplified_channel_attention(ag::Var(x), ag::Var(w), ag::Var(b)).value();
    std::vector<double> mean(c, 0.0);
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) mean[ch] += x.at(0, ch, i, j);
      mean[ch] /= x.h() * x.w();
    }
    for (int o = 0; o < c; ++o) {
      double s = b.at(0, o, 0, 0);
      for (int ch = 0; ch < c; ++ch) s += w.at(o, ch, 0, 0) * mean[ch];
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) ASSERT_LE(rel_error(y.at(0, o, i, j), x.at(0, o, i, j) * s), 1e-6);
    }
  }
}

TEST(Affem, WeightedSumOfInputs) {
  Rng rng(4);
  const Tensor f = random_tensor({1, 3, 4, 4}, rng);
  const Tensor fs = random_tensor({1, 3, 4, 4}, rng);
  const AffemWeights w{ag::Var(Tensor({1, 1, 1, 1}, 0.7)), ag::Var(Tensor({1, 1, 1, 1}, -1.3))};
  const Tensor y = affem_fuse(ag::Var(f), ag::Var(fs), w).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(rel_error(y[i], 0.7 * f[i] - 1.3 * fs[i]), 1e-12);
}

TEST(Affem, PerChannelWeights) {
  Rng rng(5);
  const Tensor f = random_tensor({1, 2, 3, 3}, rng);
  const Tensor fs = random_tensor({1, 2, 3, 3}, rng);
  const AffemWeights w{ag::Var(Tensor({1, 2, 1, 1}, std::vector<double>{1.0, 2.0})),
                       ag::Var(Tensor({1, 2, 1, 1}, std::vector<double>{0.5, 0.0}))};
  const Tensor y = affem_fuse(ag::Var(f), ag::Var(fs), w).value();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(y.at(0, 0, i, j), f.at(0, 0, i, j) + 0.5 * fs.at(0, 0, i, j));
      EXPECT_DOUBLE_EQ(y.at(0, 1, i, j), 2.0 * f.at(0, 1, i, j));
    }
}

TEST(NafBlock, ZeroedOutputProjectionsGiveIdentity) {
  ParameterStore params;
  for (int b = 0; b < 3; ++b) {
    const std::string p = "blk" + std::to_string(b);
    add_naf_block_parameters(params, p, 6, 2, 2, 9);
    zero_params(params, p + ".conv3");
    zero_params(params, p + ".conv5");
  }
  Rng rng(6);
  const ag::Var x = random_var({2, 6, 5, 7}, rng);
  ag::Var y = x;
  for (int b = 0; b < 3; ++b) {
    y = naf_block(y, params, "blk" + std::to_string(b));
    EXPECT_EQ(y.value(), x.value());
  }
}

TEST(NafBlock, ParameterCount) {
  for (int c : {4, 6, 16}) {
    ParameterStore params;
    add_naf_block_parameters(params, "b", c, 2, 2, 1);
    EXPECT_EQ(params.count(), naf_block_count(c));
  }
}

TEST(Sfeem, DefaultConfigShape) {
  const EncoderConfig cfg;
  ParameterStore params;
  add_encoder_parameters(params, cfg, 1);
  Rng rng(7);
  const ag::Var img = random_var({1, 1, 48, 48}, rng, false, 0.0, 1.0);
  ag::NoGradGuard guard;
  const ag::Var out = sfeem_forward(img, zero_pyramid(cfg, 1, 48, 48), params, cfg);
  EXPECT_EQ(out.shape(), (Shape{1, 128, 48, 48}));
  EXPECT_TRUE(out.value().all_finite());
}

TEST(Sfeem, PreservesSpatialDimsAcrossFusions) {
  for (Fusion f : {Fusion::affem, Fusion::sum, Fusion::concat}) {
    const EncoderConfig cfg = small_config(f);
    ParameterStore params;
    add_encoder_parameters(params, cfg, 2);
    Rng rng(8);
    const ag::Var img = random_var({2, 1, 8, 12}, rng, false, 0.0, 1.0);
    const ag::Var out = sfeem_forward(img, random_pyramid(cfg, 2, 8, 12, rng), params, cfg);
    EXPECT_EQ(out.shape(), (Shape{2, 6, 8, 12})) << to_string(f);
  }
}

TEST(Sfeem, ZeroWeightsExceptResidualAreFinite) {
  const EncoderConfig cfg = small_config();
  ParameterStore params;
  add_encoder_parameters(params, cfg, 3);
  for (const auto& name : params.names()) {
    if (name.rfind("encoder.residual", 0) != 0 && name.rfind("encoder.shallow", 0) != 0) {
      params.get(name).mutable_value().fill(0.0);
    }
  }
  Rng rng(9);
  const ag::Var out =
      sfeem_forward(random_var({1, 1, 8, 8}, rng, false, 0, 1), random_pyramid(cfg, 1, 8, 8, rng), params, cfg);
  EXPECT_TRUE(out.value().all_finite());
  EXPECT_GT(out.value().max() - out.value().min(), 0.0);
}

TEST(Sfeem, AffemOneZeroIgnoresSaliency) {
  const EncoderConfig cfg = small_config();
  ParameterStore params;
  add_encoder_parameters(params, cfg, 4);
  for (int i = 0; i < cfg.levels(); ++i) params.get(fusion_prefix(i) + ".w2").mutable_value().fill(0.0);
  Rng rng(10);
  const ag::Var img = random_var({1, 1, 8, 8}, rng, false, 0.0, 1.0);
  const Tensor with = sfeem_forward(img, random_pyramid(cfg, 1, 8, 8, rng), params, cfg).value();
  const Tensor without = sfeem_forward(img, zero_pyramid(cfg, 1, 8, 8), params, cfg).value();
  EXPECT_TRUE(sgsasr::testing::bytes_equal(with, without));
}

TEST(Sfeem, RejectsIndivisibleInput) {
  const EncoderConfig cfg = small_config();
  ParameterStore params;
  add_encoder_parameters(params, cfg, 5);
  Rng rng(11);
  EXPECT_THROW((void)sfeem_forward(random_var({1, 1, 6, 8}, rng), zero_pyramid(cfg, 1, 6, 8), params, cfg),
               InputError);
  EXPECT_THROW((void)sfeem_forward(random_var({1, 3, 8, 8}, rng), zero_pyramid(cfg, 1, 8, 8), params, cfg),
               InputError);
  EXPECT_THROW((void)sfeem_forward(random_var({1, 1, 8, 8}, rng), {}, params, cfg), InputError);
}

TEST(Sfeem, FiniteDifferenceGradients) {
  const EncoderConfig cfg = small_config();
  ParameterStore params;
  add_encoder_parameters(params, cfg, 6);
  Rng rng(12);
  const ag::Var img = random_var({1, 1, 4, 4}, rng, false, 0.0, 1.0);
  const auto pyramid = random_pyramid(cfg, 1, 4, 4, rng);
  const Tensor r = random_tensor({1, cfg.out_dim, 4, 4}, rng);
  auto loss = [&] { return ops::dot_constant(sfeem_forward(img, pyramid, params, cfg), r); };

  params.zero_grad();
  ag::backward(loss());
  const auto names = params.names();
  Rng pick(13);
  for (int s = 0; s < 10; ++s) {
    ag::Var& p = params.get(names[pick.below(names.size())]);
    const std::size_t i = pick.below(p.value().size());
    const double analytic = p.grad().empty() ? 0.0 : p.grad()[i];
    const double numeric = central_difference(p, i, 1e-3, [&] {
      ag::NoGradGuard g;
      return loss().value()[0];
    });
    EXPECT_LT(std::abs(analytic - numeric), 1e-4 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(Sfeem, ParameterCountFormula) {
  const EncoderConfig cfg = small_config();
  ParameterStore params;
  add_encoder_parameters(params, cfg, 7);
  const std::size_t w = cfg.base_width;
  std::size_t expect = 9 * w + w;  // shallow
  for (int i = 0; i < cfg.levels(); ++i) {
    const std::size_t c = w << i;
    expect += cfg.enc_blocks[i] * naf_block_count(c) + 2 + (2 * c * c * 4 + 2 * c);
  }
  expect += cfg.middle_blocks * naf_block_count(w << cfg.levels());
  for (int j = 0; j < cfg.levels(); ++j) {
    const std::size_t c = w << (cfg.levels() - 1 - j);
    expect += 4 * c * 2 * c + cfg.dec_blocks[j] * naf_block_count(c);
  }
  expect += cfg.out_dim * w * 9 + cfg.out_dim + cfg.out_dim * w + cfg.out_dim;
  EXPECT_EQ(params.count(), expect);

  ParameterStore again;
  add_encoder_parameters(again, cfg, 99);
  EXPECT_EQ(again.count(), params.count());
}

TEST(Config, ValidationAndRoundTrip) {
  EncoderConfig bad = small_config();
  bad.dec_blocks = {1};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.in_channels = 2;
  EXPECT_THROW(bad.validate(), ConfigError);

  EncoderConfig cfg = small_config(Fusion::concat);
  cfg.affem_per_channel = true;
  Config text;
  cfg.to_config(text);
  EXPECT_EQ(EncoderConfig::from_config(text), cfg);
  EXPECT_THROW((void)fusion_from_string("max"), ConfigError);
}
