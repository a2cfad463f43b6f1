#include "sgsasr/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "sgsasr/errors.hpp"
#include "sgsasr/ops.hpp"

namespace sgsasr::decoder {

using ag::Var;

std::string to_string(Modulation m) {
  switch (m) {
    case Modulation::none: return "none";
    case Modulation::scale: return "scale";
    case Modulation::shift: return "shift";
    case Modulation::both: return "both";
  }
  return "both";
}

Modulation modulation_from_string(const std::string& s) {
  if (s == "none") return Modulation::none;
  if (s == "scale") return Modulation::scale;
  if (s == "shift") return Modulation::shift;
  if (s == "both" || s == "scale+shift") return Modulation::both;
  throw ConfigError("modulation must be one of none, scale, shift, both; got '" + s + "'");
}

void DecoderConfig::validate() const {
  if (latent_dim < 1 || latent_hidden < 1 || render_width < 1 || out_channels < 1) {
    throw ConfigError("decoder: dimensions must be positive");
  }
  if (latent_layers < 0) throw ConfigError("decoder: latent_layers must be >= 0");
  if (K < 1) throw ConfigError("decoder: K must be >= 1");
  if (compressed_dim() < 1) {
    throw ConfigError("decoder: latent_out " + std::to_string(latent_out) +
                      " leaves no room for the compressed latent after 2*K*render_width = " +
                      std::to_string(modulation_dim()));
  }
}

DecoderConfig DecoderConfig::from_config(const Config& cfg) {
  DecoderConfig out;
  out.latent_dim = cfg.get_int("encoder.out_dim", out.latent_dim);
  out.latent_hidden = cfg.get_int("decoder.latent_hidden", out.latent_hidden);
  out.latent_layers = cfg.get_int("decoder.latent_layers", out.latent_layers);
  out.render_width = cfg.get_int("decoder.render_width", out.render_width);
  out.K = cfg.get_int("decoder.K", out.K);
  out.latent_out = cfg.get_int("decoder.latent_out", out.latent_out);
  // An explicit compressed dim pins latent_out; the two must agree when both are given.
  if (cfg.contains("decoder.compressed_dim")) {
    const int want = cfg.get_int("decoder.compressed_dim", 0);
    const int implied = 2 * out.K * out.render_width + want;
    if (cfg.contains("decoder.latent_out") && implied != out.latent_out) {
      throw ConfigError("decoder: latent_out " + std::to_string(out.latent_out) + " != 2*K*render_width + " +
                        "compressed_dim = " + std::to_string(implied));
    }
    out.latent_out = implied;
  }
  out.out_channels = cfg.get_int("model.out_channels", out.out_channels);
  out.use_cell = cfg.get_bool("decoder.use_cell", out.use_cell);
  out.local_ensemble = cfg.get_bool("decoder.local_ensemble", out.local_ensemble);
  out.feat_unfold = cfg.get_bool("decoder.feat_unfold", out.feat_unfold);
  out.cache_modulation = cfg.get_bool("decoder.cache_modulation", out.cache_modulation);
  out.modulation = modulation_from_string(cfg.get_string("ablation.modulation", "both"));
  return out;
}

void DecoderConfig::to_config(Config& cfg) const {
  cfg.set("encoder.out_dim", latent_dim);
  cfg.set("decoder.latent_hidden", latent_hidden);
  cfg.set("decoder.latent_layers", latent_layers);
  cfg.set("decoder.render_width", render_width);
  cfg.set("decoder.K", K);
  cfg.set("decoder.latent_out", latent_out);
  cfg.set("model.out_channels", out_channels);
  cfg.set("decoder.use_cell", use_cell);
  cfg.set("decoder.local_ensemble", local_ensemble);
  cfg.set("decoder.feat_unfold", feat_unfold);
  cfg.set("decoder.cache_modulation", cache_modulation);
  cfg.set("ablation.modulation", to_string(modulation));
}

std::vector<double> make_coordinate_grid(int n) {
  if (n < 1) throw InputError("coordinate grid needs n >= 1");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = -1.0 + (2.0 * i + 1.0) / n;
  return out;
}

namespace {
double centre(int n, int i) { return -1.0 + (2.0 * i + 1.0) / n; }
}  // namespace

int nearest_index(int n, double coord) {
  const double t = (coord + 1.0) * n / 2.0;
  int guess = static_cast<int>(std::ceil(t)) - 1;
  guess = std::clamp(guess, 0, n - 1);
  // The closed form can be off by one near cell edges; settle on true distances.
  int best = -1;
  double best_d = 0.0;
  for (int i = std::max(0, guess - 1); i <= std::min(n - 1, guess + 1); ++i) {
    const double d = std::abs(coord - centre(n, i));
    if (best < 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

LatentHit nearest_latent(int h, int w, double x, double y) {
  LatentHit hit;
  hit.row = nearest_index(h, x);
  hit.col = nearest_index(w, y);
  hit.rel_x = (x - centre(h, hit.row)) * h;
  hit.rel_y = (y - centre(w, hit.col)) * w;
  return hit;
}

QuerySet full_grid_queries(int h_out, int w_out) {
  if (h_out < 1 || w_out < 1) throw InputError("output size must be >= 1");
  const auto xs = make_coordinate_grid(h_out);
  const auto ys = make_coordinate_grid(w_out);
  QuerySet q;
  q.coords.reserve(2ULL * h_out * w_out);
  q.cells.reserve(2ULL * h_out * w_out);
  for (int i = 0; i < h_out; ++i) {
    for (int j = 0; j < w_out; ++j) {
      q.coords.push_back(xs[i]);
      q.coords.push_back(ys[j]);
      q.cells.push_back(2.0 / h_out);
      q.cells.push_back(2.0 / w_out);
    }
  }
  return q;
}

namespace {

void add_linear(ParameterStore& params, const std::string& name, int out, int in, std::uint64_t seed) {
  params.add_uniform(name + ".weight", {out, in, 1, 1}, in, seed);
  params.add_uniform(name + ".bias", {1, out, 1, 1}, in, seed);
}

Var linear(const Var& x, const ParameterStore& params, const std::string& name) {
  return ops::linear(x, params.get(name + ".weight"), params.get(name + ".bias"));
}

std::string latent_layer(int i) { return "decoder.latent.fc" + std::to_string(i); }
std::string render_layer(int i) { return "decoder.render.fc" + std::to_string(i); }

}  // namespace

void add_decoder_parameters(ParameterStore& params, const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  int in = cfg.latent_input_dim();
  for (int i = 0; i < cfg.latent_layers; ++i) {
    add_linear(params, latent_layer(i), cfg.latent_hidden, in, seed);
    in = cfg.latent_hidden;
  }
  add_linear(params, latent_layer(cfg.latent_layers), cfg.latent_out, in, seed);

  add_linear(params, render_layer(0), cfg.render_width, cfg.render_input_dim(), seed);
  for (int k = 1; k < cfg.K; ++k) add_linear(params, render_layer(k), cfg.render_width, cfg.render_width, seed);
  add_linear(params, render_layer(cfg.K), cfg.out_channels, cfg.render_width, seed);
}

Var lmgb_generate(const Var& z, const ParameterStore& params, const DecoderConfig& cfg) {
  if (z.shape().c != cfg.latent_input_dim() || z.shape().h != 1) {
    throw InputError("latent MLP expects (n, " + std::to_string(cfg.latent_input_dim()) +
                     ", 1, L) columns, got " + z.shape().str());
  }
  Var x = z;
  for (int i = 0; i < cfg.latent_layers; ++i) x = ops::relu(linear(x, params, latent_layer(i)));
  return linear(x, params, latent_layer(cfg.latent_layers));
}

ModulationSlices split_modulation(const Var& latent_out, const DecoderConfig& cfg) {
  if (latent_out.shape().c != cfg.latent_out) {
    throw InputError("latent MLP output has " + std::to_string(latent_out.shape().c) +
                     " channels, expected " + std::to_string(cfg.latent_out));
  }
  ModulationSlices m;
  const int rw = cfg.render_width;
  for (int k = 0; k < cfg.K; ++k) {
    m.alpha.push_back(ops::slice_channels(latent_out, 2 * k * rw, rw));
    m.beta.push_back(ops::slice_channels(latent_out, (2 * k + 1) * rw, rw));
  }
  m.compressed = ops::slice_channels(latent_out, cfg.modulation_dim(), cfg.compressed_dim());
  return m;
}

Var modulated_layer(const Var& h, const Var& alpha, const Var& beta, const Var& weight,
                    const Var& bias, bool modulate) {
  const Var pre = modulate ? ops::film(h, alpha, beta) : h;
  return ops::linear(ops::relu(pre), weight, bias);
}

Var asrb_render(const Var& render_input, const ModulationSlices& mods, const ParameterStore& params,
                const DecoderConfig& cfg) {
  if (render_input.shape().c != cfg.render_input_dim()) {
    throw InputError("render MLP expects " + std::to_string(cfg.render_input_dim()) +
                     " input features, got " + std::to_string(render_input.shape().c));
  }
  const bool modulate = cfg.modulation != Modulation::none;
  Var h = linear(render_input, params, render_layer(0));
  for (int k = 0; k < cfg.K; ++k) {
    const std::string name = render_layer(k + 1);
    h = modulated_layer(h, modulate ? mods.alpha[k] : Var(), modulate ? mods.beta[k] : Var(),
                        params.get(name + ".weight"), params.get(name + ".bias"), modulate);
  }
  return h;
}

LatentField prepare_latents(const Var& features, const ParameterStore& params, const DecoderConfig& cfg,
                            DecodeStats* stats) {
  if (features.shape().c != cfg.latent_dim) {
    throw InputError("decoder expects " + std::to_string(cfg.latent_dim) + "-dim latent codes, got " +
                     features.shape().str());
  }
  LatentField field;
  field.source = cfg.feat_unfold ? ops::unfold3x3(features) : features;
  field.h = features.shape().h;
  field.w = features.shape().w;
  if (cfg.cache_modulation) {
    const Shape s = field.source.shape();
    const Var columns = ops::reshape(field.source, {s.n, s.c, 1, s.h * s.w});
    field.cache = lmgb_generate(columns, params, cfg);
    if (stats) stats->latent_evals += static_cast<std::uint64_t>(s.n) * s.h * s.w;
  }
  return field;
}

Var render_queries(const LatentField& field, std::span<const QuerySet> queries, const ParameterStore& params,
                   const DecoderConfig& cfg, DecodeStats* stats) {
  const int n = field.source.shape().n;
  if (static_cast<int>(queries.size()) != n) throw InputError("need one query set per batch item");
  const int count = queries.front().size();
  if (count < 1) throw InputError("empty query set");
  for (const auto& q : queries) {
    if (q.size() != count || q.cells.size() != q.coords.size()) {
      throw InputError("query sets must have equal sizes with one cell per coordinate");
    }
  }

  const int h = field.h;
  const int w = field.w;
  const int shifts = cfg.local_ensemble ? 4 : 1;
  std::vector<Var> preds;
  std::vector<Tensor> areas;
  for (int s = 0; s < shifts; ++s) {
    const double vx = cfg.local_ensemble ? (s / 2 == 0 ? -1.0 : 1.0) : 0.0;
    const double vy = cfg.local_ensemble ? (s % 2 == 0 ? -1.0 : 1.0) : 0.0;
    std::vector<int> indices(static_cast<std::size_t>(n) * count);
    Tensor rel({n, 2, 1, count});
    Tensor cell({n, 2, 1, count});
    Tensor area({n, 1, 1, count});
    for (int b = 0; b < n; ++b) {
      const auto& q = queries[b];
      for (int i = 0; i < count; ++i) {
        const double x = q.coords[2 * i];
        const double y = q.coords[2 * i + 1];
        if (!(x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0)) {
          throw InputError("query coordinate outside [-1, 1]^2");
        }
        double qx = x;
        double qy = y;
        if (cfg.local_ensemble) {
          constexpr double kShift = 1e-6;
          qx = std::clamp(x + vx / h + kShift, -1.0 + 1e-6, 1.0 - 1e-6);
          qy = std::clamp(y + vy / w + kShift, -1.0 + 1e-6, 1.0 - 1e-6);
        }
        const LatentHit hit = nearest_latent(h, w, qx, qy);
        indices[static_cast<std::size_t>(b) * count + i] = hit.row * w + hit.col;
        const double rx = (x - (-1.0 + (2.0 * hit.row + 1.0) / h)) * h;
        const double ry = (y - (-1.0 + (2.0 * hit.col + 1.0) / w)) * w;
        rel.at(b, 0, 0, i) = rx;
        rel.at(b, 1, 0, i) = ry;
        cell.at(b, 0, 0, i) = q.cells[2 * i];
        cell.at(b, 1, 0, i) = q.cells[2 * i + 1];
        area.at(b, 0, 0, i) = std::abs(rx * ry) + 1e-9;
      }
    }

    Var latent;
    if (field.cache.defined()) {
      latent = ops::gather_columns(field.cache, indices, count);
    } else {
      latent = lmgb_generate(ops::gather_columns(field.source, indices, count), params, cfg);
      if (stats) stats->latent_evals += static_cast<std::uint64_t>(n) * count;
    }
    const ModulationSlices mods = split_modulation(latent, cfg);
    std::vector<Var> parts{mods.compressed, Var(std::move(rel))};
    if (cfg.use_cell) parts.push_back(Var(std::move(cell)));
    preds.push_back(asrb_render(ops::concat_channels(parts), mods, params, cfg));
    areas.push_back(std::move(area));
    if (stats) stats->render_evals += static_cast<std::uint64_t>(n) * count;
  }
  if (shifts == 1) return preds.front();

  // Each prediction is weighted by the area of the diagonally opposite sub-rectangle.
  Tensor total({n, 1, 1, count});
  for (const auto& a : areas) {
    for (std::size_t i = 0; i < a.size(); ++i) total[i] += a[i];
  }
  Var out;
  for (int s = 0; s < 4; ++s) {
    Tensor weight = areas[3 - s];
    for (std::size_t i = 0; i < weight.size(); ++i) weight[i] /= total[i];
    Var term = ops::scale_columns(preds[s], weight);
    out = out.defined() ? ops::add(out, term) : term;
  }
  return out;
}

Var decode_queries(const Var& features, std::span<const QuerySet> queries, const ParameterStore& params,
                   const DecoderConfig& cfg, DecodeStats* stats) {
  return render_queries(prepare_latents(features, params, cfg, stats), queries, params, cfg, stats);
}

Tensor decode_image(const Var& features, int h_out, int w_out, const ParameterStore& params,
                    const DecoderConfig& cfg, DecodeStats* stats, int chunk) {
  if (h_out < 1 || w_out < 1) throw InputError("output size must be >= 1");
  if (chunk < 1) throw InputError("chunk must be >= 1");
  ag::NoGradGuard no_grad;
  const LatentField field = prepare_latents(features, params, cfg, stats);
  const int n = features.shape().n;
  const auto xs = make_coordinate_grid(h_out);
  const auto ys = make_coordinate_grid(w_out);
  const std::size_t total = static_cast<std::size_t>(h_out) * w_out;
  Tensor out({n, cfg.out_channels, h_out, w_out});
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t stop = std::min(total, start + static_cast<std::size_t>(chunk));
    QuerySet q;
    q.coords.reserve(2 * (stop - start));
    q.cells.reserve(2 * (stop - start));
    for (std::size_t p = start; p < stop; ++p) {
      q.coords.push_back(xs[p / w_out]);
      q.coords.push_back(ys[p % w_out]);
      q.cells.push_back(2.0 / h_out);
      q.cells.push_back(2.0 / w_out);
    }
    const std::vector<QuerySet> batch(n, q);
    const Var pred = render_queries(field, batch, params, cfg, stats);
    const int len = static_cast<int>(stop - start);
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < cfg.out_channels; ++c) {
        const double* src = pred.value().plane(b, c);
        double* dst = out.plane(b, c) + start;
        std::copy(src, src + len, dst);
      }
    }
  }
  return out;
}

}  // namespace sgsasr::decoder
