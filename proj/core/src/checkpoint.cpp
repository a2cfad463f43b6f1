#include "sgsasr/checkpoint.hpp"

#include <H5Cpp.h>

#include <fstream>

#include "sgsasr/errors.hpp"

namespace sgsasr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.txt";
constexpr const char* kModelConfig = "model.cfg";
constexpr const char* kParams = "params.h5";

void write_group(H5::H5File& file, const std::string& group, const std::map<std::string, Tensor>& arrays) {
  H5::Group g = file.createGroup("/" + group);
  for (const auto& [name, t] : arrays) {
    const Shape s = t.shape();
    const hsize_t dims[4] = {static_cast<hsize_t>(s.n), static_cast<hsize_t>(s.c), static_cast<hsize_t>(s.h),
                             static_cast<hsize_t>(s.w)};
    H5::DataSpace space(4, dims);
    H5::DataSet ds = g.createDataSet(name, H5::PredType::IEEE_F64LE, space);
    ds.write(t.data(), H5::PredType::NATIVE_DOUBLE);
  }
}

std::map<std::string, Tensor> read_group(H5::H5File& file, const std::string& group) {
  std::map<std::string, Tensor> out;
  H5::Group g = file.openGroup("/" + group);
  const hsize_t count = g.getNumObjs();
  for (hsize_t i = 0; i < count; ++i) {
    const std::string name = g.getObjnameByIdx(i);
    H5::DataSet ds = g.openDataSet(name);
    H5::DataSpace space = ds.getSpace();
    if (space.getSimpleExtentNdims() != 4) {
      throw CheckpointError("array " + group + "/" + name + " is not four-dimensional");
    }
    hsize_t dims[4];
    space.getSimpleExtentDims(dims);
    Tensor t({static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
              static_cast<int>(dims[3])});
    ds.read(t.data(), H5::PredType::NATIVE_DOUBLE);
    out.emplace(name, std::move(t));
  }
  return out;
}

int parse_int_field(const Config& manifest, const std::string& key, const fs::path& path) {
  const auto v = manifest.find(key);
  if (!v) throw CheckpointError(path.string() + ": manifest lacks '" + key + "'");
  try {
    std::size_t used = 0;
    const int out = std::stoi(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return out;
  } catch (const std::exception&) {
    throw CheckpointError(path.string() + ": manifest field '" + key + "' is not an integer: '" + *v + "'");
  }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model, const training::TrainState* state) {
  H5::Exception::dontPrint();
  fs::path tmp = dir;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) throw CheckpointError("cannot create " + tmp.string() + ": " + ec.message());

  Config manifest;
  manifest.set("format_version", kCheckpointFormatVersion);
  manifest.set("config_hash", model.config().hash());
  manifest.set("model_seed", std::to_string(model.seed()));
  manifest.set("has_state", state != nullptr);
  if (state) {
    manifest.set("step", std::to_string(state->step));
    manifest.set("epoch", state->epoch);
    manifest.set("lr", state->lr);
    manifest.set("seed", std::to_string(state->seed));
  }
  manifest.save(tmp / kManifest);
  model.config().to_config().save(tmp / kModelConfig);

  std::map<std::string, Tensor> params;
  for (const auto& p : model.params().entries()) params.emplace(p.name, p.var.value());
  try {
    H5::H5File file((tmp / kParams).string(), H5F_ACC_TRUNC);
    write_group(file, "params", params);
    if (state) {
      write_group(file, "adam_m", state->adam_m);
      write_group(file, "adam_v", state->adam_v);
    }
  } catch (const H5::Exception& e) {
    throw CheckpointError("cannot write " + (tmp / kParams).string() + ": " + e.getDetailMsg());
  }

  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
}

CheckpointBundle load_checkpoint(const fs::path& dir) {
  H5::Exception::dontPrint();
  if (!fs::is_directory(dir)) throw CheckpointError("checkpoint not found: " + dir.string());
  const fs::path manifest_path = dir / kManifest;
  if (!fs::exists(manifest_path)) throw CheckpointError(dir.string() + ": missing " + kManifest);

  Config manifest;
  try {
    manifest = Config::load(manifest_path);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("unreadable manifest: ") + e.what());
  }
  CheckpointBundle b;
  b.format_version = parse_int_field(manifest, "format_version", manifest_path);
  if (b.format_version != kCheckpointFormatVersion) {
    throw VersionError(manifest_path.string() + ": format_version " + std::to_string(b.format_version) +
                       " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }

  try {
    b.config = ModelConfig::from_config(Config::load(dir / kModelConfig));
  } catch (const ConfigError& e) {
    throw CheckpointError(dir.string() + ": invalid model config: " + e.what());
  }
  const std::string want_hash = manifest.get_string("config_hash", "");
  if (want_hash != b.config.hash()) {
    throw CheckpointError(dir.string() + ": config_hash " + want_hash + " does not match model.cfg (" +
                          b.config.hash() + ")");
  }
  b.model_seed = manifest.get_u64("model_seed", 0);

  const fs::path params_path = dir / kParams;
  if (!fs::exists(params_path)) throw CheckpointError(dir.string() + ": missing " + kParams);
  const bool has_state = manifest.get_bool("has_state", false);
  try {
    if (!H5::H5File::isHdf5(params_path.string())) {
      throw CheckpointError(params_path.string() + ": not an HDF5 file (bad signature)");
    }
    H5::H5File file(params_path.string(), H5F_ACC_RDONLY);
    b.params = read_group(file, "params");
    if (has_state) {
      training::TrainState st;
      st.adam_m = read_group(file, "adam_m");
      st.adam_v = read_group(file, "adam_v");
      st.step = static_cast<std::int64_t>(manifest.get_u64("step", 0));
      st.epoch = manifest.get_int("epoch", 0);
      st.lr = manifest.get_double("lr", 0.0);
      st.seed = manifest.get_u64("seed", 0);
      b.state = std::move(st);
    }
  } catch (const H5::Exception& e) {
    throw CheckpointError(params_path.string() + ": corrupt parameter container (" + e.getFuncName() + ": " +
                          e.getDetailMsg() + ")");
  } catch (const ConfigError& e) {
    throw CheckpointError(manifest_path.string() + ": " + e.what());
  }
  return b;
}

void restore_parameters(Model& model, const CheckpointBundle& bundle) {
  if (!(bundle.config == model.config())) {
    throw CheckpointError("checkpoint config (hash " + bundle.config.hash() + ") does not match the model (hash " +
                          model.config().hash() + ")");
  }
  auto& params = model.params();
  for (const auto& p : params.entries()) {
    const auto it = bundle.params.find(p.name);
    if (it == bundle.params.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.var.shape()) {
      throw CheckpointError("parameter " + p.name + " has shape " + it->second.shape().str() + ", model expects " +
                            p.var.shape().str());
    }
  }
  if (bundle.params.size() != params.entries().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(bundle.params.size()) + " arrays, model has " +
                          std::to_string(params.entries().size()));
  }
  for (auto& p : params.entries()) p.var.mutable_value() = bundle.params.at(p.name);
}

Model restore_model(const CheckpointBundle& bundle) {
  Model model(bundle.config, bundle.model_seed);
  restore_parameters(model, bundle);
  return model;
}

}  // namespace sgsasr
