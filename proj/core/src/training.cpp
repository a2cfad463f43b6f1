#include "sgsasr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

#include "sgsasr/errors.hpp"
#include "sgsasr/image_io.hpp"
#include "sgsasr/ops.hpp"

namespace sgsasr::training {

using ag::Var;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(base_lr >= 0.0)) throw ConfigError("train.base_lr must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("train.gamma must be > 0");
  if (epochs < 0 || steps_per_epoch < 0) throw ConfigError("train.epochs and steps_per_epoch must be >= 0");
  if (patch < 1) throw ConfigError("train.patch must be >= 1");
  if (!(scale_min >= 1.0 && scale_max >= scale_min)) {
    throw ConfigError("train scale range must satisfy 1 <= scale_min <= scale_max");
  }
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw ConfigError("adam betas must lie in [0, 1) and eps must be > 0");
  }
  if (val_every < 0 || checkpoint_every < 0) throw ConfigError("val_every/checkpoint_every must be >= 0");
  if (!(val_scale > 0.0)) throw ConfigError("train.val_scale must be > 0");
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig t;
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.base_lr = cfg.get_double("train.base_lr", t.base_lr);
  t.milestones = cfg.get_int_list("train.milestones", t.milestones);
  t.gamma = cfg.get_double("train.gamma", t.gamma);
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.steps_per_epoch = cfg.get_int("train.steps_per_epoch", t.steps_per_epoch);
  t.patch = cfg.get_int("train.patch", t.patch);
  t.scale_min = cfg.get_double("train.scale_min", t.scale_min);
  t.scale_max = cfg.get_double("train.scale_max", t.scale_max);
  t.query_count = cfg.get_int("train.query_count", t.query_count);
  t.grad_clip = cfg.get_double("train.grad_clip", t.grad_clip);
  t.adam.beta1 = cfg.get_double("adam.beta1", t.adam.beta1);
  t.adam.beta2 = cfg.get_double("adam.beta2", t.adam.beta2);
  t.adam.eps = cfg.get_double("adam.eps", t.adam.eps);
  t.val_every = cfg.get_int("train.val_every", t.val_every);
  t.checkpoint_every = cfg.get_int("train.checkpoint_every", t.checkpoint_every);
  t.val_scale = cfg.get_double("train.val_scale", t.val_scale);
  t.validate();
  return t;
}

void TrainConfig::to_config(Config& cfg) const {
  cfg.set("train.batch_size", batch_size);
  cfg.set("train.base_lr", base_lr);
  cfg.set("train.milestones", milestones);
  cfg.set("train.gamma", gamma);
  cfg.set("train.epochs", epochs);
  cfg.set("train.steps_per_epoch", steps_per_epoch);
  cfg.set("train.patch", patch);
  cfg.set("train.scale_min", scale_min);
  cfg.set("train.scale_max", scale_max);
  cfg.set("train.query_count", query_count);
  cfg.set("train.grad_clip", grad_clip);
  cfg.set("adam.beta1", adam.beta1);
  cfg.set("adam.beta2", adam.beta2);
  cfg.set("adam.eps", adam.eps);
  cfg.set("train.val_every", val_every);
  cfg.set("train.checkpoint_every", checkpoint_every);
  cfg.set("train.val_scale", val_scale);
}

double lr_schedule(int epoch, double base_lr, std::span<const int> milestones, double gamma) {
  if (epoch < 0) throw InputError("lr_schedule: epoch must be >= 0");
  double lr = base_lr;
  for (int m : milestones) {
    if (m <= epoch) lr *= gamma;
  }
  return lr;
}

double lr_schedule(int epoch, double base_lr) {
  static constexpr int kMilestones[] = {50, 100, 150, 175};
  return lr_schedule(epoch, base_lr, kMilestones, 0.5);
}

Var l1_loss(const Var& pred, const Tensor& target) {
  if (target.size() == 0) throw InputError("l1_loss: empty pixel set");
  if (pred.shape() != target.shape()) {
    throw InputError("l1_loss: prediction " + pred.shape().str() + " vs target " + target.shape().str());
  }
  return ops::l1_loss(pred, target);
}

double train_step(Model& model, TrainState& state, std::span<const data::TrainingSample> batch,
                  const TrainConfig& cfg) {
  if (batch.empty()) throw InputError("train_step: empty batch");
  std::vector<Tensor> lrs;
  std::vector<Tensor> targets;
  std::vector<decoder::QuerySet> queries;
  for (const auto& s : batch) {
    lrs.push_back(s.lr);
    targets.push_back(s.targets);
    queries.push_back(s.queries);
  }
  const Tensor lr = stack(lrs);
  const Tensor target = stack(targets);

  ParameterStore& params = model.params();
  params.zero_grad();
  const Var loss = l1_loss(model.predict(lr, queries), target);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    std::string scales;
    for (const auto& s : batch) scales += (scales.empty() ? "" : ",") + format_double(s.scale);
    throw TrainingError(fmt::format("non-finite loss {} at step {} (epoch {}, lr {}, batch scales [{}])", value,
                                    state.step + 1, state.epoch, state.lr, scales));
  }
  ag::backward(loss);

  double sq = 0.0;
  for (const auto& p : params.entries()) {
    const Tensor& g = p.var.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.element_trainable(i)) sq += g[i] * g[i];
    }
  }
  if (!std::isfinite(sq)) {
    params.zero_grad();
    throw TrainingError(fmt::format("non-finite gradient at step {} (loss {})", state.step + 1, value));
  }
  const double norm = std::sqrt(sq);
  const double factor = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.adam.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam.beta2, t);
  for (auto& p : params.entries()) {
    const Tensor& g = p.var.grad();
    if (p.fully_frozen || g.size() == 0) continue;
    Tensor& value_t = p.var.mutable_value();
    auto [mit, m_new] = state.adam_m.try_emplace(p.name, value_t.shape());
    auto [vit, v_new] = state.adam_v.try_emplace(p.name, value_t.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!p.element_trainable(i)) continue;
      const double gi = g[i] * factor;
      m[i] = cfg.adam.beta1 * m[i] + (1.0 - cfg.adam.beta1) * gi;
      v[i] = cfg.adam.beta2 * v[i] + (1.0 - cfg.adam.beta2) * gi * gi;
      value_t[i] -= state.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam.eps);
    }
  }
  params.zero_grad();
  return value;
}

Image degrade_for_scale(const Image& hr, double scale) {
  if (!(scale > 0.0)) throw InputError("scale must be > 0");
  const int h = std::max(1, static_cast<int>(std::lround(hr.h() / scale)));
  const int w = std::max(1, static_cast<int>(std::lround(hr.w() / scale)));
  return data::degrade(hr, h, w);
}

metrics::MetricReport evaluate(const Model& model, std::span<const Image> hr, double scale,
                               std::span<const std::string> names) {
  std::vector<metrics::ImageScore> scores;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    const Image gt = data::to_channels(hr[i], model.config().out_channels());
    const Image lr = degrade_for_scale(data::to_channels(hr[i], model.config().in_channels()), scale);
    const Image sr = clamp01(model.forward(lr, gt.h(), gt.w()));
    metrics::ImageScore s;
    s.name = i < names.size() ? names[i] : fmt::format("img{}", i);
    s.psnr_db = metrics::psnr(sr, gt);
    s.ssim = gt.h() >= 11 && gt.w() >= 11 ? metrics::ssim(sr, gt) : std::numeric_limits<double>::quiet_NaN();
    scores.push_back(std::move(s));
  }
  return metrics::MetricReport::aggregate(std::move(scores));
}

Trainer::Trainer(Model& model, TrainConfig cfg, std::vector<Image> train_images, std::uint64_t seed)
    : model_(model), cfg_(std::move(cfg)), images_(std::move(train_images)) {
  cfg_.validate();
  if (images_.empty()) throw DatasetError("training set is empty");
  if (model_.config().in_channels() != model_.config().out_channels()) {
    throw ConfigError("training needs matching input and output channel counts");
  }
  for (auto& img : images_) img = data::to_channels(img, model_.config().in_channels());
  state_.seed = seed;
  state_.lr = lr_schedule(0, cfg_.base_lr, cfg_.milestones, cfg_.gamma);
}

int Trainer::steps_per_epoch() const {
  if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
  const int n = static_cast<int>(images_.size());
  return (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

std::int64_t Trainer::total_steps() const { return static_cast<std::int64_t>(cfg_.epochs) * steps_per_epoch(); }

std::vector<int> Trainer::indices_for_step(std::int64_t step) const {
  const std::int64_t spe = steps_per_epoch();
  const std::int64_t epoch = step / spe;
  const std::int64_t first = (step % spe) * cfg_.batch_size;
  const int n = static_cast<int>(images_.size());
  std::vector<int> out;
  std::vector<int> perm;
  std::int64_t perm_id = -1;
  for (int i = 0; i < cfg_.batch_size; ++i) {
    const std::int64_t pos = first + i;
    const std::int64_t id = pos / n;
    if (id != perm_id) {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng = Rng::derive(state_.seed, "order", (static_cast<std::uint64_t>(epoch) << 24) + id);
      for (int k = n - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(static_cast<std::uint64_t>(k) + 1)]);
      perm_id = id;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

std::vector<data::TrainingSample> Trainer::batch_for_step(std::int64_t step) const {
  const auto idx = indices_for_step(step);
  std::vector<data::TrainingSample> batch;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Rng rng = Rng::derive(state_.seed, "sample", static_cast<std::uint64_t>(step) * cfg_.batch_size + i);
    batch.push_back(
        data::make_training_sample(images_[idx[i]], cfg_.scale_min, cfg_.scale_max, cfg_.patch, rng, cfg_.query_count));
  }
  return batch;
}

double Trainer::step() {
  const std::int64_t s = state_.step;
  state_.epoch = static_cast<int>(s / steps_per_epoch());
  state_.lr = lr_schedule(state_.epoch, cfg_.base_lr, cfg_.milestones, cfg_.gamma);
  const auto batch = batch_for_step(s);
  return train_step(model_, state_, batch, cfg_);
}

std::uint64_t Trainer::order_hash(std::int64_t steps) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::int64_t s = 0; s < steps; ++s) {
    for (int i : indices_for_step(s)) h = mix64(h ^ static_cast<std::uint64_t>(i));
  }
  return h;
}

}  // namespace sgsasr::training
