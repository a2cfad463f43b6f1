#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgsasr/autograd.hpp"
#include "sgsasr/config.hpp"
#include "sgsasr/parameters.hpp"

namespace sgsasr::decoder {

/// Which FiLM terms the render MLP receives.
enum class Modulation { none, scale, shift, both };

[[nodiscard]] std::string to_string(Modulation m);
[[nodiscard]] Modulation modulation_from_string(const std::string& s);

struct DecoderConfig {
  int latent_dim = 128;     // encoder out_dim
  int latent_hidden = 128;  // width of the latent MLP's hidden layers
  int latent_layers = 2;    // hidden layer count of the latent MLP
  int latent_out = 288;     // 2 * K * render_width + compressed dim
  int render_width = 16;
  int K = 6;  // modulated activations; the render MLP has K + 1 linear layers
  int out_channels = 1;
  bool use_cell = true;
  bool local_ensemble = false;
  bool feat_unfold = false;
  bool cache_modulation = true;
  Modulation modulation = Modulation::both;

  [[nodiscard]] int modulation_dim() const { return 2 * K * render_width; }
  [[nodiscard]] int compressed_dim() const { return latent_out - modulation_dim(); }
  [[nodiscard]] int latent_input_dim() const { return latent_dim * (feat_unfold ? 9 : 1); }
  [[nodiscard]] int render_input_dim() const { return compressed_dim() + 2 + (use_cell ? 2 : 0); }

  /// Rejects configs violating latent_out == 2 * K * render_width + compressed_dim > 0.
  void validate() const;
  static DecoderConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

/// Instrumentation: how many latent-MLP and render-MLP column evaluations ran.
struct DecodeStats {
  std::uint64_t latent_evals = 0;
  std::uint64_t render_evals = 0;
};

/// Pixel-centre coordinates -1 + (2i + 1) / n for i in [0, n).
[[nodiscard]] std::vector<double> make_coordinate_grid(int n);

/// Nearest latent cell along one axis of an n-cell grid; ties go to the smaller index.
[[nodiscard]] int nearest_index(int n, double coord);

struct LatentHit {
  int row = 0;
  int col = 0;
  double rel_x = 0.0;  // (coord - centre) * grid size, in [-1, 1]
  double rel_y = 0.0;
};

/// Nearest latent centre to (x, y) on an h x w grid; x runs along rows.
[[nodiscard]] LatentHit nearest_latent(int h, int w, double x, double y);

/// Continuous queries for one image: coordinates and cell extents, two values each.
struct QuerySet {
  std::vector<double> coords;  // (x0, y0, x1, y1, ...)
  std::vector<double> cells;   // (2 / H_out, 2 / W_out) per query
  [[nodiscard]] int size() const { return static_cast<int>(coords.size() / 2); }
};

/// Queries at every pixel centre of an H_out x W_out grid, row-major.
[[nodiscard]] QuerySet full_grid_queries(int h_out, int w_out);

void add_decoder_parameters(ParameterStore& params, const DecoderConfig& cfg, std::uint64_t seed);

/// Latent MLP over column latents (n, latent_input_dim, 1, L) -> (n, latent_out, 1, L).
[[nodiscard]] ag::Var lmgb_generate(const ag::Var& z, const ParameterStore& params,
                                    const DecoderConfig& cfg);

/// Views into the latent-MLP output: [alpha_1, beta_1, ..., alpha_K, beta_K | z_c].
struct ModulationSlices {
  std::vector<ag::Var> alpha;
  std::vector<ag::Var> beta;
  ag::Var compressed;
};

[[nodiscard]] ModulationSlices split_modulation(const ag::Var& latent_out, const DecoderConfig& cfg);

/// Linear(ReLU((1 + alpha) * h + beta)); with `modulate` false, Linear(ReLU(h)).
[[nodiscard]] ag::Var modulated_layer(const ag::Var& h, const ag::Var& alpha, const ag::Var& beta,
                                      const ag::Var& weight, const ag::Var& bias, bool modulate = true);

/// Render MLP: projects the render input to h_1, applies K modulated layers, and
/// returns (n, out_channels, 1, Q).
[[nodiscard]] ag::Var asrb_render(const ag::Var& render_input, const ModulationSlices& mods,
                                  const ParameterStore& params, const DecoderConfig& cfg);

/// Latent source plus, when caching, the latent-MLP output for every latent location.
struct LatentField {
  ag::Var source;  // (n, latent_input_dim, h, w)
  ag::Var cache;   // (n, latent_out, 1, h * w) or undefined
  int h = 0;
  int w = 0;
};

[[nodiscard]] LatentField prepare_latents(const ag::Var& features, const ParameterStore& params,
                                          const DecoderConfig& cfg, DecodeStats* stats = nullptr);

/// Predictions for explicit queries; every batch item must have the same query count.
[[nodiscard]] ag::Var render_queries(const LatentField& field, std::span<const QuerySet> queries,
                                     const ParameterStore& params, const DecoderConfig& cfg,
                                     DecodeStats* stats = nullptr);

/// prepare_latents followed by render_queries.
[[nodiscard]] ag::Var decode_queries(const ag::Var& features, std::span<const QuerySet> queries,
                                     const ParameterStore& params, const DecoderConfig& cfg,
                                     DecodeStats* stats = nullptr);

/// Renders an H_out x W_out image per batch item without recording a graph.
/// Pixels are decoded in row-major chunks of at most `chunk` queries.
[[nodiscard]] Tensor decode_image(const ag::Var& features, int h_out, int w_out,
                                  const ParameterStore& params, const DecoderConfig& cfg,
                                  DecodeStats* stats = nullptr, int chunk = 16384);

}  // namespace sgsasr::decoder
