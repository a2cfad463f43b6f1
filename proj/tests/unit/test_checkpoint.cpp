#include <gtest/gtest.h>

#include <fstream>

#include "sgsasr/checkpoint.hpp"
#include "sgsasr/data.hpp"
#include "sgsasr/errors.hpp"
#include "test_util.hpp"

using namespace sgsasr;
using sgsasr::testing::bytes_equal;
using sgsasr::testing::TempDir;
using sgsasr::testing::toy_config;

namespace {

std::vector<Image> synth_set(int count, int size, std::uint64_t seed) {
  data::SynthSpec spec;
  spec.height = spec.width = size;
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, "img", static_cast<std::uint64_t>(i));
    out.push_back(data::synth_spacecraft_image(spec, rng));
  }
  return out;
}

training::TrainConfig small_train() {
  training::TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.patch = 8;
  cfg.scale_min = 1.0;
  cfg.scale_max = 2.0;
  cfg.base_lr = 1e-3;
  cfg.epochs = 3;
  return cfg;
}

bool same_params(const Model& a, const Model& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].name != eb[i].name || !bytes_equal(ea[i].var.value(), eb[i].var.value())) return false;
  }
  return true;
}

void rewrite_line(const std::filesystem::path& file, const std::string& key, const std::string& line) {
  std::ifstream in(file);
  std::string text, l;
  while (std::getline(in, l)) text += (l.rfind(key, 0) == 0 ? line : l) + "\n";
  in.close();
  std::ofstream(file) << text;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  Model m(toy_config(), 11);
  training::Trainer t(m, small_train(), synth_set(3, 16, 1), 4);
  for (int i = 0; i < 3; ++i) t.step();
  save_checkpoint(dir.path() / "c", m, &t.state());

  const CheckpointBundle b = load_checkpoint(dir.path() / "c");
  EXPECT_EQ(b.format_version, kCheckpointFormatVersion);
  EXPECT_EQ(b.config, m.config());
  EXPECT_EQ(b.model_seed, 11u);
  const Model back = restore_model(b);
  EXPECT_TRUE(same_params(m, back));

  ASSERT_TRUE(b.state.has_value());
  EXPECT_EQ(b.state->step, 3);
  EXPECT_EQ(b.state->epoch, t.state().epoch);
  EXPECT_EQ(b.state->lr, t.state().lr);
  EXPECT_EQ(b.state->seed, t.state().seed);
  ASSERT_EQ(b.state->adam_m.size(), t.state().adam_m.size());
  for (const auto& [name, v] : t.state().adam_m) EXPECT_TRUE(bytes_equal(v, b.state->adam_m.at(name))) << name;
  for (const auto& [name, v] : t.state().adam_v) EXPECT_TRUE(bytes_equal(v, b.state->adam_v.at(name))) << name;
}

TEST(Checkpoint, WithoutStateAndOverwrite) {
  TempDir dir("ckpt");
  Model a(toy_config(), 1);
  Model b(toy_config(), 2);
  save_checkpoint(dir.path() / "c", a);
  save_checkpoint(dir.path() / "c", b);
  const CheckpointBundle bundle = load_checkpoint(dir.path() / "c");
  EXPECT_FALSE(bundle.state.has_value());
  EXPECT_TRUE(same_params(restore_model(bundle), b));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "c.tmp"));
}

TEST(Checkpoint, ConfigMismatchIsRejected) {
  TempDir dir("ckpt");
  Model m(toy_config(), 1);
  save_checkpoint(dir.path() / "c", m);
  const CheckpointBundle bundle = load_checkpoint(dir.path() / "c");

  Model other(toy_config(12), 1);
  EXPECT_THROW(restore_parameters(other, bundle), CheckpointError);

  rewrite_line(dir.path() / "c" / "model.cfg", "base_width", "base_width = 12");
  EXPECT_THROW((void)load_checkpoint(dir.path() / "c"), CheckpointError);
}

TEST(Checkpoint, MissingParameterIsRejected) {
  TempDir dir("ckpt");
  Model m(toy_config(), 1);
  save_checkpoint(dir.path() / "c", m);
  CheckpointBundle bundle = load_checkpoint(dir.path() / "c");
  bundle.params.erase(bundle.params.begin());
  EXPECT_THROW(restore_parameters(m, bundle), CheckpointError);
}

TEST(Checkpoint, FutureVersionIsRejected) {
  TempDir dir("ckpt");
  save_checkpoint(dir.path() / "c", Model(toy_config(), 1));
  rewrite_line(dir.path() / "c" / "manifest.txt", "format_version",
               "format_version = " + std::to_string(kCheckpointFormatVersion + 1));
  EXPECT_THROW((void)load_checkpoint(dir.path() / "c"), VersionError);
  rewrite_line(dir.path() / "c" / "manifest.txt", "format_version", "format_version = one");
  EXPECT_THROW((void)load_checkpoint(dir.path() / "c"), CheckpointError);
}

TEST(Checkpoint, CorruptContainerNamesTheFile) {
  TempDir dir("ckpt");
  save_checkpoint(dir.path() / "c", Model(toy_config(), 1));
  const auto params = dir.path() / "c" / "params.h5";
  std::ofstream(params, std::ios::binary | std::ios::trunc) << "not hdf5 at all";
  try {
    (void)load_checkpoint(dir.path() / "c");
    FAIL() << "corrupt container accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("params.h5"), std::string::npos) << e.what();
  }

  // Valid signature, truncated body.
  save_checkpoint(dir.path() / "d", Model(toy_config(), 1));
  const auto p2 = dir.path() / "d" / "params.h5";
  std::filesystem::resize_file(p2, std::filesystem::file_size(p2) / 3);
  EXPECT_THROW((void)load_checkpoint(dir.path() / "d"), CheckpointError);
}

TEST(Checkpoint, MissingPieces) {
  TempDir dir("ckpt");
  EXPECT_THROW((void)load_checkpoint(dir.path() / "absent"), CheckpointError);
  save_checkpoint(dir.path() / "c", Model(toy_config(), 1));
  std::filesystem::remove(dir.path() / "c" / "params.h5");
  EXPECT_THROW((void)load_checkpoint(dir.path() / "c"), CheckpointError);
  save_checkpoint(dir.path() / "d", Model(toy_config(), 1));
  std::filesystem::remove(dir.path() / "d" / "manifest.txt");
  EXPECT_THROW((void)load_checkpoint(dir.path() / "d"), CheckpointError);
}

TEST(Checkpoint, ResumeReplaysExactly) {
  TempDir dir("ckpt");
  const auto images = synth_set(4, 16, 3);
  Model full(toy_config(), 5);
  training::Trainer tf(full, small_train(), images, 9);
  std::vector<double> losses;
  for (int i = 0; i < 6; ++i) losses.push_back(tf.step());

  Model first(toy_config(), 5);
  training::Trainer ta(first, small_train(), images, 9);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(ta.step(), losses[static_cast<std::size_t>(i)]);
  save_checkpoint(dir.path() / "c", first, &ta.state());

  const CheckpointBundle b = load_checkpoint(dir.path() / "c");
  Model resumed = restore_model(b);
  training::Trainer tb(resumed, small_train(), images, 9);
  tb.state() = *b.state;
  for (int i = 3; i < 6; ++i) EXPECT_EQ(tb.step(), losses[static_cast<std::size_t>(i)]);
  EXPECT_TRUE(same_params(full, resumed));
}
