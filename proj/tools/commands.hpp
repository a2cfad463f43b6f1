#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgsasr/config.hpp"

namespace sgsasr::cli {

/// Layered configuration: built-in defaults < --config file < --set overrides.
/// The seed comes from --seed, else the file's `seed` key, else SGSASR_SEED,
/// else 1.
struct RunConfig {
  Config values;
  std::uint64_t seed = 1;
};

[[nodiscard]] Config default_values();
[[nodiscard]] RunConfig resolve(const std::string& config_path, const std::vector<std::string>& overrides,
                                std::optional<std::uint64_t> seed_flag);

struct SynthArgs {
  std::filesystem::path out;
  int count = 16;
  int val_count = -1;  // -1: a quarter of count, at least one
  int size = 128;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::filesystem::path resume;
};

struct InferArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  double scale = 4.0;
  std::filesystem::path out;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string scales = "4";
  std::filesystem::path out;
  bool per_image = false;
};

struct AblateArgs {
  std::filesystem::path data;
  std::string axis;
  std::filesystem::path out;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
};

int cmd_synth(const SynthArgs& a);
int cmd_train(const TrainArgs& a);
int cmd_infer(const InferArgs& a);
int cmd_eval(const EvalArgs& a);
int cmd_ablate(const AblateArgs& a);

}  // namespace sgsasr::cli
