#include <gtest/gtest.h>

#include "sgsasr/errors.hpp"
#include "sgsasr/model.hpp"
#include "test_util.hpp"

using namespace sgsasr;
using sgsasr::testing::bytes_equal;
using sgsasr::testing::random_tensor;
using sgsasr::testing::toy_config;

namespace {

std::size_t naf(std::size_t c) { return 7 * c * c + 31 * c; }
std::size_t dense(std::size_t in, std::size_t out) { return in * out + out; }

// Parameter count of the full-size default network, from layer dimensions only.
std::size_t default_parameter_count() {
  const std::size_t widths[] = {32, 64, 128, 256};
  const int enc[] = {2, 2, 4, 8};
  const int dec[] = {2, 2, 2, 2};
  std::size_t n = 0;
  n += 32 * 9 + 32;  // saliency conv0
  for (int i = 1; i < 4; ++i) n += widths[i] * widths[i - 1] * 9 + widths[i];
  n += 32 * 9 + 32;  // shallow
  for (int i = 0; i < 4; ++i) n += enc[i] * naf(widths[i]) + 2 + widths[i] * 2 * widths[i] * 4 + 2 * widths[i];
  n += 12 * naf(512);
  for (int j = 0; j < 4; ++j) {
    const std::size_t c = widths[3 - j];
    n += 2 * c * 4 * c + dec[j] * naf(c);
  }
  n += 128 * 32 * 9 + 128 + 128 * 32 + 128;
  n += dense(128, 128) + dense(128, 128) + dense(128, 288);
  n += dense(100, 16) + 5 * dense(16, 16) + dense(16, 1);
  return n;
}

Tensor unit_image(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor(s, rng, 0.0, 1.0);
}

}  // namespace

TEST(Model, DefaultParameterCountMatchesLayerDims) {
  const Model m(ModelConfig{}, 1);
  EXPECT_EQ(m.params().count(), default_parameter_count());
  EXPECT_EQ(m.params().trainable_count(), m.params().count());
}

TEST(Model, SameSeedSameBytes) {
  const Model a(toy_config(), 5);
  const Model b(toy_config(), 5);
  const Model c(toy_config(), 6);
  bool any_diff = false;
  for (const auto& name : a.params().names()) {
    EXPECT_TRUE(bytes_equal(a.params().get(name).value(), b.params().get(name).value())) << name;
    any_diff |= a.params().get(name).value() != c.params().get(name).value();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, SumFusionHasNoAffemWeights) {
  ModelConfig cfg = toy_config();
  cfg.encoder.fusion = encoder::Fusion::sum;
  const Model m(cfg, 1);
  for (const auto& name : m.params().names()) {
    EXPECT_EQ(name.find(".w1"), std::string::npos) << name;
    EXPECT_EQ(name.find(".w2"), std::string::npos) << name;
  }
}

TEST(Model, SumFusionEqualsUnitAffem) {
  ModelConfig cfg = toy_config();
  const Model affem(cfg, 2);
  cfg.encoder.fusion = encoder::Fusion::sum;
  const Model sum(cfg, 2);
  const Tensor lr = unit_image({1, 1, 16, 16}, 3);
  EXPECT_TRUE(bytes_equal(affem.forward(lr, 24, 24), sum.forward(lr, 24, 24)));
}

TEST(Model, ScaleOnlyZeroesAndFreezesBeta) {
  ModelConfig cfg = toy_config();
  cfg.decoder.modulation = decoder::Modulation::scale;
  const Model m(cfg, 4);
  const auto& dc = cfg.decoder;
  const Parameter& w = m.params().entry(modulation_layer_name(dc) + ".weight");
  const Parameter& b = m.params().entry(modulation_layer_name(dc) + ".bias");
  const std::size_t in = w.var.shape().c;
  const int rw = dc.render_width;
  for (int k = 0; k < dc.K; ++k) {
    for (int r = 0; r < rw; ++r) {
      const std::size_t alpha = 2 * k * rw + r;
      const std::size_t beta = (2 * k + 1) * rw + r;
      EXPECT_EQ(b.var.value()[beta], 0.0);
      EXPECT_FALSE(b.element_trainable(beta));
      EXPECT_TRUE(b.element_trainable(alpha));
      for (std::size_t j = 0; j < in; ++j) {
        EXPECT_EQ(w.var.value()[beta * in + j], 0.0);
        EXPECT_FALSE(w.element_trainable(beta * in + j));
        EXPECT_TRUE(w.element_trainable(alpha * in + j));
      }
    }
  }
  EXPECT_EQ(m.params().count() - m.params().trainable_count(), dc.K * rw * (in + 1));
}

TEST(Model, ShiftOnlyZeroesAndFreezesAlpha) {
  ModelConfig cfg = toy_config();
  cfg.decoder.modulation = decoder::Modulation::shift;
  const Model m(cfg, 4);
  const auto& dc = cfg.decoder;
  const Parameter& b = m.params().entry(modulation_layer_name(dc) + ".bias");
  const int rw = dc.render_width;
  for (int k = 0; k < dc.K; ++k) {
    for (int r = 0; r < rw; ++r) {
      EXPECT_EQ(b.var.value()[2 * k * rw + r], 0.0);
      EXPECT_FALSE(b.element_trainable(2 * k * rw + r));
      EXPECT_TRUE(b.element_trainable((2 * k + 1) * rw + r));
    }
  }
}

TEST(Model, NoModulationIgnoresModulationSlice) {
  ModelConfig cfg = toy_config();
  cfg.decoder.modulation = decoder::Modulation::none;
  Model m(cfg, 7);
  const Tensor lr = unit_image({1, 1, 16, 12}, 8);
  const Tensor before = m.forward(lr, 20, 15);
  const std::string layer = modulation_layer_name(cfg.decoder);
  Tensor& w = m.params().get(layer + ".weight").mutable_value();
  Tensor& b = m.params().get(layer + ".bias").mutable_value();
  const std::size_t in = w.c();
  Rng rng(9);
  for (int r = 0; r < cfg.decoder.modulation_dim(); ++r) {
    b[r] += rng.uniform(-3.0, 3.0);
    for (std::size_t j = 0; j < in; ++j) w[r * in + j] += rng.uniform(-3.0, 3.0);
  }
  EXPECT_TRUE(bytes_equal(before, m.forward(lr, 20, 15)));
  // The compressed slice still matters.
  b[cfg.decoder.modulation_dim()] += 1.0;
  EXPECT_FALSE(bytes_equal(before, m.forward(lr, 20, 15)));
}

TEST(Model, WithoutScrrbHasNoSaliencyParameters) {
  ModelConfig cfg = toy_config();
  cfg.use_scrrb = false;
  const Model m(cfg, 1);
  for (const auto& name : m.params().names()) EXPECT_NE(name.rfind("saliency.", 0), 0u) << name;
  const Model with(toy_config(), 1);
  EXPECT_LT(m.params().count(), with.params().count());
}

TEST(Model, OutputShapesFollowRounding) {
  const Model m(toy_config(), 1);
  const Tensor lr = unit_image({1, 1, 48, 48}, 10);
  EXPECT_EQ(m.upscale(lr, 4.0).shape(), (Shape{1, 1, 192, 192}));
  EXPECT_EQ(m.upscale(lr, 3.6).shape(), (Shape{1, 1, 173, 173}));
  EXPECT_EQ(output_size(48, 48, 3.6), std::make_pair(173, 173));
  EXPECT_EQ(output_size(5, 3, 1.5), std::make_pair(8, 5));  // 7.5 and 4.5 round away from zero
  EXPECT_THROW((void)output_size(4, 4, 0.0), InputError);
  EXPECT_THROW((void)output_size(4, 4, -2.0), InputError);
}

TEST(Model, ForwardIsDeterministic) {
  const Model m(toy_config(), 11);
  const Tensor lr = unit_image({1, 1, 20, 13}, 12);
  const Tensor a = m.forward(lr, 31, 19);
  const Tensor b = m.forward(lr, 31, 19);
  EXPECT_EQ(a.shape(), (Shape{1, 1, 31, 19}));
  EXPECT_TRUE(bytes_equal(a, b));
}

TEST(Model, BatchItemsAreIndependent) {
  const Model m(toy_config(), 13);
  const Tensor batch = unit_image({2, 1, 16, 16}, 14);
  const Tensor both = m.forward(batch, 24, 24);
  const Tensor second = m.forward(batch.item(1), 24, 24);
  EXPECT_LT(std::abs(both.item(1).max() - second.max()), 1e-12);
  for (std::size_t i = 0; i < second.size(); ++i) EXPECT_NEAR(both.item(1)[i], second[i], 1e-12);
}

TEST(Model, RejectsBadInputs) {
  const Model m(toy_config(), 1);
  Tensor lr = unit_image({1, 1, 16, 16}, 15);
  lr[3] = 1.5;
  EXPECT_THROW((void)m.forward(lr, 32, 32), InputError);
  EXPECT_THROW((void)m.forward(unit_image({1, 3, 16, 16}, 16), 32, 32), InputError);
  EXPECT_THROW((void)m.forward(Tensor({1, 1, 0, 0}), 4, 4), InputError);
}

TEST(Model, RgbModel) {
  ModelConfig cfg = toy_config();
  cfg.encoder.in_channels = 3;
  cfg.decoder.out_channels = 3;
  const Model m(cfg, 1);
  EXPECT_EQ(m.forward(unit_image({1, 3, 16, 16}, 17), 20, 20).shape(), (Shape{1, 3, 20, 20}));
}

TEST(ModelConfig, RoundTripAndHash) {
  ModelConfig cfg = toy_config();
  cfg.decoder.modulation = decoder::Modulation::shift;
  cfg.encoder.fusion = encoder::Fusion::concat;
  cfg.use_scrrb = false;
  const Config text = cfg.to_config();
  const ModelConfig back = ModelConfig::from_config(Config::parse(text.to_text()));
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(cfg.hash().size(), 16u);

  ModelConfig moved = cfg;
  moved.saliency.model_path = "/elsewhere/model.onnx";
  EXPECT_EQ(moved.hash(), cfg.hash());
  ModelConfig wider = cfg;
  wider.encoder.base_width += 2;
  EXPECT_NE(wider.hash(), cfg.hash());
}

TEST(ModelConfig, RejectsMismatchedLatentDim) {
  ModelConfig cfg = toy_config();
  cfg.decoder.latent_dim = cfg.encoder.out_dim + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(Model(cfg, 1), ConfigError);
}
