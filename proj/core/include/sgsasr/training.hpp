#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgsasr/config.hpp"
#include "sgsasr/data.hpp"
#include "sgsasr/metrics.hpp"
#include "sgsasr/model.hpp"

namespace sgsasr::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct TrainConfig {
  int batch_size = 16;
  double base_lr = 2e-4;
  std::vector<int> milestones{50, 100, 150, 175};
  double gamma = 0.5;
  int epochs = 200;
  int steps_per_epoch = 0;  // 0: one pass over the training images
  int patch = 48;           // LR patch side
  double scale_min = 1.0;
  double scale_max = 4.0;
  int query_count = -1;     // per sample; negative means patch^2
  double grad_clip = 0.0;   // global L2 norm; 0 disables
  AdamConfig adam;
  int val_every = 1;        // epochs between validations
  int checkpoint_every = 10;
  double val_scale = 2.0;

  void validate() const;
  static TrainConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// base_lr * gamma^(number of milestones <= epoch).
[[nodiscard]] double lr_schedule(int epoch, double base_lr, std::span<const int> milestones,
                                 double gamma = 0.5);
[[nodiscard]] double lr_schedule(int epoch, double base_lr);

struct TrainState {
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  std::int64_t step = 0;  // completed optimizer steps
  int epoch = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
};

/// Mean absolute difference; thin wrapper that rejects empty or mismatched sets.
[[nodiscard]] ag::Var l1_loss(const ag::Var& pred, const Tensor& target);

/// One Adam update on the L1 loss of the batch's queries, at learning rate
/// `state.lr`. Frozen elements are left untouched. Returns the loss.
/// Throws TrainingError, before touching any parameter, if the loss or a
/// gradient is not finite.
double train_step(Model& model, TrainState& state, std::span<const data::TrainingSample> batch,
                  const TrainConfig& cfg);

/// PSNR/SSIM of super-resolving degraded copies of `hr` back to full size.
[[nodiscard]] metrics::MetricReport evaluate(const Model& model, std::span<const Image> hr, double scale,
                                             std::span<const std::string> names = {});

/// LR input for evaluating at `scale`: `hr` degraded to round(h / s) x round(w / s).
[[nodiscard]] Image degrade_for_scale(const Image& hr, double scale);

/// Deterministic training loop state: sample order, patches and query draws
/// are functions of (seed, step) only, so a resumed run replays exactly.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, std::vector<Image> train_images, std::uint64_t seed);

  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] TrainState& state() { return state_; }
  [[nodiscard]] const TrainState& state() const { return state_; }
  [[nodiscard]] Model& model() { return model_; }
  [[nodiscard]] int steps_per_epoch() const;
  [[nodiscard]] std::int64_t total_steps() const;

  /// Training image indices used by the given global step.
  [[nodiscard]] std::vector<int> indices_for_step(std::int64_t step) const;
  [[nodiscard]] std::vector<data::TrainingSample> batch_for_step(std::int64_t step) const;

  /// Runs the next step; returns its loss.
  double step();
  /// Digest of the image indices consumed by steps [0, steps).
  [[nodiscard]] std::uint64_t order_hash(std::int64_t steps) const;

 private:
  Model& model_;
  TrainConfig cfg_;
  std::vector<Image> images_;
  TrainState state_;
};

}  // namespace sgsasr::training
