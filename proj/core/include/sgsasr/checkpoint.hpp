#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "sgsasr/model.hpp"
#include "sgsasr/training.hpp"

namespace sgsasr {

inline constexpr int kCheckpointFormatVersion = 1;

/// Everything needed to rebuild a model and resume its optimizer.
struct CheckpointBundle {
  int format_version = kCheckpointFormatVersion;
  ModelConfig config;
  std::uint64_t model_seed = 0;
  std::map<std::string, Tensor> params;
  std::optional<training::TrainState> state;
};

/// Writes `dir/manifest.txt`, `dir/model.cfg` and `dir/params.h5`. The files go
/// to a sibling temporary directory first, so an interrupted save leaves any
/// previous checkpoint at `dir` intact.
void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const training::TrainState* state = nullptr);

/// Reads a checkpoint. Throws VersionError for an unsupported format version
/// and CheckpointError for missing, inconsistent or corrupt files.
[[nodiscard]] CheckpointBundle load_checkpoint(const std::filesystem::path& dir);

/// Copies parameter values into `model`. The bundle's config must match the model's.
void restore_parameters(Model& model, const CheckpointBundle& bundle);

/// Builds a model from the bundle's config and loads its parameters.
[[nodiscard]] Model restore_model(const CheckpointBundle& bundle);

}  // namespace sgsasr
