#include "sgsasr/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sgsasr/errors.hpp"
#include "sgsasr/image_io.hpp"

namespace sgsasr::data {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (height < 1 || width < 1) throw ConfigError("synth: canvas must be at least 1x1");
  if (channels != 1 && channels != 3) throw ConfigError("synth: channels must be 1 or 3");
  if (bodies < 0 || panels < 0 || antennas < 0) throw ConfigError("synth: component counts must be >= 0");
  if (supersample < 1) throw ConfigError("synth: supersample must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
  const auto range_ok = [](double lo, double hi) { return lo >= 0.0 && hi <= 1.0 && lo <= hi; };
  if (!range_ok(body_min, body_max) || !range_ok(panel_min, panel_max) ||
      !range_ok(antenna_min, antenna_max)) {
    throw ConfigError("synth: intensity ranges must satisfy 0 <= min <= max <= 1");
  }
  if (!(background >= 0.0 && background <= 1.0)) throw ConfigError("synth: background must be in [0, 1]");
}

SynthSpec SynthSpec::from_config(const Config& cfg) {
  SynthSpec s;
  s.height = cfg.get_int("synth.height", s.height);
  s.width = cfg.get_int("synth.width", s.width);
  s.channels = cfg.get_int("synth.channels", s.channels);
  s.bodies = cfg.get_int("synth.bodies", s.bodies);
  s.panels = cfg.get_int("synth.panels", s.panels);
  s.antennas = cfg.get_int("synth.antennas", s.antennas);
  s.body_min = cfg.get_double("synth.body_min", s.body_min);
  s.body_max = cfg.get_double("synth.body_max", s.body_max);
  s.panel_min = cfg.get_double("synth.panel_min", s.panel_min);
  s.panel_max = cfg.get_double("synth.panel_max", s.panel_max);
  s.antenna_min = cfg.get_double("synth.antenna_min", s.antenna_min);
  s.antenna_max = cfg.get_double("synth.antenna_max", s.antenna_max);
  s.noise_sigma = cfg.get_double("synth.noise_sigma", s.noise_sigma);
  s.background = cfg.get_double("synth.background", s.background);
  s.supersample = cfg.get_int("synth.supersample", s.supersample);
  s.validate();
  return s;
}

void SynthSpec::to_config(Config& cfg) const {
  cfg.set("synth.height", height);
  cfg.set("synth.width", width);
  cfg.set("synth.channels", channels);
  cfg.set("synth.bodies", bodies);
  cfg.set("synth.panels", panels);
  cfg.set("synth.antennas", antennas);
  cfg.set("synth.body_min", body_min);
  cfg.set("synth.body_max", body_max);
  cfg.set("synth.panel_min", panel_min);
  cfg.set("synth.panel_max", panel_max);
  cfg.set("synth.antenna_min", antenna_min);
  cfg.set("synth.antenna_max", antenna_max);
  cfg.set("synth.noise_sigma", noise_sigma);
  cfg.set("synth.background", background);
  cfg.set("synth.supersample", supersample);
}

namespace {

// Oriented rectangle in pixel coordinates (x right, y down).
struct Box {
  double cx, cy;
  double ux, uy;  // unit long axis
  double half_u, half_v;
  double intensity;
  double tint[3];
  int grid = 0;  // panel cells along the long axis; 0 for plain surfaces

  [[nodiscard]] bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double a = dx * ux + dy * uy;
    const double b = -dx * uy + dy * ux;
    return std::abs(a) <= half_u && std::abs(b) <= half_v;
  }

  [[nodiscard]] double shade(double x, double y) const {
    if (grid == 0) return intensity;
    const double a = (x - cx) * ux + (y - cy) * uy;
    const double cell = 2.0 * half_u / grid;
    const double t = (a + half_u) / cell;
    const double frac = t - std::floor(t);
    return frac < 0.12 ? intensity * 0.55 : intensity;
  }
};

Box make_box(double cx, double cy, double angle, double len, double thick, double intensity) {
  Box b{};
  b.cx = cx;
  b.cy = cy;
  b.ux = std::cos(angle);
  b.uy = std::sin(angle);
  b.half_u = len / 2.0;
  b.half_v = thick / 2.0;
  b.intensity = intensity;
  return b;
}

}  // namespace

Image synth_spacecraft_image(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  const double size = std::min(spec.height, spec.width);
  const double pi = std::numbers::pi;

  const double cx = spec.width / 2.0 + rng.uniform(-0.08, 0.08) * spec.width;
  const double cy = spec.height / 2.0 + rng.uniform(-0.08, 0.08) * spec.height;
  const double theta = rng.uniform(0.0, pi);
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);

  const double body_len = rng.uniform(0.16, 0.28) * size;
  const double body_thick = rng.uniform(0.09, 0.15) * size;

  std::vector<Box> boxes;
  for (int i = 0; i < spec.bodies; ++i) {
    const double scale = std::pow(0.7, i);
    const double offset = i == 0 ? 0.0 : (i % 2 == 1 ? 1.0 : -1.0) * (body_len * (0.5 + 0.35 * scale)) *
                                              ((i + 1) / 2);
    boxes.push_back(make_box(cx + offset * ux, cy + offset * uy, theta, body_len * scale,
                             body_thick * scale, rng.uniform(spec.body_min, spec.body_max)));
  }

  const double panel_len = rng.uniform(0.14, 0.26) * size;
  const double panel_thick = rng.uniform(0.07, 0.12) * size;
  const double strut_len = rng.uniform(0.02, 0.05) * size;
  const double strut_thick = std::max(1.0, 0.012 * size);
  const double panel_intensity = rng.uniform(spec.panel_min, spec.panel_max);
  for (int j = 0; j < spec.panels; ++j) {
    const double along = (j - (spec.panels - 1) / 2.0) * panel_thick * 1.3;
    for (int side : {-1, 1}) {
      const double strut_mid = body_thick / 2.0 + strut_len / 2.0;
      const double panel_mid = body_thick / 2.0 + strut_len + panel_len / 2.0;
      // Panels extend across the body axis.
      boxes.push_back(make_box(cx + along * ux - side * strut_mid * uy, cy + along * uy + side * strut_mid * ux,
                               theta + pi / 2.0, strut_len, strut_thick, panel_intensity * 0.8));
      Box panel = make_box(cx + along * ux - side * panel_mid * uy, cy + along * uy + side * panel_mid * ux,
                           theta + pi / 2.0, panel_len, panel_thick, panel_intensity);
      panel.grid = 4;
      boxes.push_back(panel);
    }
  }

  for (int k = 0; k < spec.antennas; ++k) {
    const double end = (k % 2 == 0 ? 1.0 : -1.0) * body_len / 2.0;
    const double dir = theta + (k % 2 == 0 ? 0.0 : pi) + rng.uniform(-0.6, 0.6);
    const double len = rng.uniform(0.08, 0.2) * size;
    const double thick = std::max(0.8, 0.008 * size);
    const double sx = cx + end * ux;
    const double sy = cy + end * uy;
    boxes.push_back(make_box(sx + std::cos(dir) * len / 2.0, sy + std::sin(dir) * len / 2.0, dir, len, thick,
                             rng.uniform(spec.antenna_min, spec.antenna_max)));
  }

  for (auto& b : boxes) {
    for (double& t : b.tint) t = spec.channels == 3 ? rng.uniform(0.85, 1.0) : 1.0;
  }

  const int ss = spec.supersample;
  Image out({1, spec.channels, spec.height, spec.width}, spec.background);
  std::vector<double> acc(spec.channels);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss;
          const double py = y + (sy + 0.5) / ss;
          for (int c = 0; c < spec.channels; ++c) {
            double v = spec.background;
            for (const auto& b : boxes) {
              if (b.contains(px, py)) v = std::max(v, b.shade(px, py) * b.tint[c]);
            }
            acc[c] += v;
          }
        }
      }
      for (int c = 0; c < spec.channels; ++c) out.at(0, c, y, x) = acc[c] / (ss * ss);
    }
  }

  if (spec.noise_sigma > 0.0) {
    for (auto& v : out.values()) v += spec.noise_sigma * rng.normal();
  }
  return clamp01(std::move(out));
}

double cubic_kernel(double x, double a) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<int> start;  // first tap per output index
  std::vector<int> count;
  std::vector<int> index;  // clamped source indices, `max_taps` per output
  std::vector<double> weight;
  int max_taps = 0;
};

Taps make_taps(int in, int out) {
  const double ratio = static_cast<double>(in) / out;
  const double support_scale = std::max(1.0, ratio);
  const double support = 2.0 * support_scale;
  Taps t;
  t.max_taps = static_cast<int>(std::ceil(2.0 * support)) + 2;
  t.index.assign(static_cast<std::size_t>(out) * t.max_taps, 0);
  t.weight.assign(static_cast<std::size_t>(out) * t.max_taps, 0.0);
  for (int i = 0; i < out; ++i) {
    const double centre = (i + 0.5) * ratio - 0.5;
    const int lo = static_cast<int>(std::floor(centre - support)) + 1;
    const int hi = static_cast<int>(std::ceil(centre + support)) - 1;
    double sum = 0.0;
    int n = 0;
    for (int j = lo; j <= hi && n < t.max_taps; ++j) {
      const double w = cubic_kernel((centre - j) / support_scale);
      if (w == 0.0) continue;
      t.index[i * t.max_taps + n] = std::clamp(j, 0, in - 1);
      t.weight[i * t.max_taps + n] = w;
      sum += w;
      ++n;
    }
    for (int k = 0; k < n; ++k) t.weight[i * t.max_taps + k] /= sum;
  }
  return t;
}

}  // namespace

Image bicubic_resize(const Image& image, int h, int w) {
  if (h < 1 || w < 1) throw InputError("bicubic_resize: target size must be >= 1");
  const Shape s = image.shape();
  if (s.numel() == 0) throw InputError("bicubic_resize: empty image");
  const Taps th = make_taps(s.h, h);
  const Taps tw = make_taps(s.w, w);

  Tensor rows({s.n, s.c, s.h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = image.plane(n, c);
      double* dst = rows.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int k = 0; k < tw.max_taps; ++k) {
            const double wt = tw.weight[x * tw.max_taps + k];
            if (wt != 0.0) acc += wt * src[y * s.w + tw.index[x * tw.max_taps + k]];
          }
          dst[y * w + x] = acc;
        }
      }
    }
  }
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = rows.plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int k = 0; k < th.max_taps; ++k) {
            const double wt = th.weight[y * th.max_taps + k];
            if (wt != 0.0) acc += wt * src[th.index[y * th.max_taps + k] * w + x];
          }
          dst[y * w + x] = acc;
        }
      }
    }
  }
  return out;
}

Image degrade(const Image& hr, int h, int w) { return clamp01(bicubic_resize(hr, h, w)); }

TrainingSample make_training_sample(const Image& hr, double s_min, double s_max, int p, Rng& rng,
                                    int query_count) {
  if (hr.n() != 1) throw InputError("make_training_sample expects a single image");
  if (p < 1) throw InputError("patch size must be >= 1");
  if (!(s_min >= 1.0) || !(s_max >= s_min)) {
    throw InputError("scale range must satisfy 1 <= s_min <= s_max");
  }
  const long largest = std::lround(p * s_max);
  if (hr.h() < largest || hr.w() < largest) {
    throw InputError("HR image " + hr.shape().str() + " too small for " + std::to_string(largest) +
                     "-pixel crops (patch " + std::to_string(p) + ", max scale " + format_double(s_max) + ")");
  }

  TrainingSample sample;
  sample.scale = rng.uniform(s_min, s_max);
  const int hc = static_cast<int>(std::lround(p * sample.scale));
  sample.crop_size = hc;
  sample.crop_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(hr.h() - hc + 1)));
  sample.crop_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(hr.w() - hc + 1)));

  const int channels = hr.c();
  Image crop({1, channels, hc, hc});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < hc; ++y) {
      for (int x = 0; x < hc; ++x) crop.at(0, c, y, x) = hr.at(0, c, sample.crop_y + y, sample.crop_x + x);
    }
  }
  sample.lr = degrade(crop, p, p);

  const int total = hc * hc;
  const int q = query_count < 0 ? p * p : query_count;
  if (q < 1 || q > total) {
    throw InputError("query count " + std::to_string(q) + " outside [1, " + std::to_string(total) + "]");
  }
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < q; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(total - i)));
    std::swap(order[i], order[j]);
  }
  sample.pixel_indices.assign(order.begin(), order.begin() + q);

  const auto grid = decoder::make_coordinate_grid(hc);
  sample.queries.coords.reserve(2 * q);
  sample.queries.cells.reserve(2 * q);
  sample.targets = Tensor({1, channels, 1, q});
  for (int i = 0; i < q; ++i) {
    const int idx = sample.pixel_indices[i];
    const int y = idx / hc;
    const int x = idx % hc;
    sample.queries.coords.push_back(grid[y]);
    sample.queries.coords.push_back(grid[x]);
    sample.queries.cells.push_back(2.0 / hc);
    sample.queries.cells.push_back(2.0 / hc);
    for (int c = 0; c < channels; ++c) sample.targets.at(0, c, 0, i) = crop.at(0, c, y, x);
  }
  return sample;
}

ImageFolder::ImageFolder(const fs::path& dir, const std::string& extension) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DatasetError("image folder not found: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) files_.push_back(entry.path());
  }
  if (ec) throw DatasetError("cannot list " + dir.string() + ": " + ec.message());
  if (files_.empty()) throw DatasetError("no " + extension + " files in " + dir.string());
  std::sort(files_.begin(), files_.end());
}

Image ImageFolder::load(std::size_t i) const { return read_png(files_.at(i)); }

std::vector<Image> ImageFolder::load_all() const {
  std::vector<Image> out;
  out.reserve(files_.size());
  for (std::size_t i = 0; i < files_.size(); ++i) out.push_back(load(i));
  return out;
}

ImageFolder load_image_folder(const fs::path& dir, const std::string& extension) {
  return ImageFolder(dir, extension);
}

Image to_channels(const Image& image, int channels) {
  if (image.c() == channels) return image;
  if (channels == 1 && image.c() == 3) {
    Image out({image.n(), 1, image.h(), image.w()});
    for (int n = 0; n < image.n(); ++n) {
      for (std::size_t i = 0; i < image.shape().plane(); ++i) {
        out.plane(n, 0)[i] = (image.plane(n, 0)[i] + image.plane(n, 1)[i] + image.plane(n, 2)[i]) / 3.0;
      }
    }
    return out;
  }
  if (channels == 3 && image.c() == 1) {
    Image out({image.n(), 3, image.h(), image.w()});
    for (int n = 0; n < image.n(); ++n) {
      for (int c = 0; c < 3; ++c) {
        std::copy(image.plane(n, 0), image.plane(n, 0) + image.shape().plane(), out.plane(n, c));
      }
    }
    return out;
  }
  throw InputError("cannot convert " + std::to_string(image.c()) + " channels to " + std::to_string(channels));
}

}  // namespace sgsasr::data
