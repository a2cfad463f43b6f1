#include "sgsasr/metrics.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "sgsasr/errors.hpp"

namespace sgsasr::metrics {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InputError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.size() == 0) throw InputError(std::string(what) + ": empty images");
}

}  // namespace

double psnr(const Image& a, const Image& b, double max_val) {
  require_same_shape(a, b, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double centre = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - centre) * (i - centre) / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) w[y * size + x] = g[y] * g[x];
  }
  return w;
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  constexpr int kWin = 11;
  const Shape s = a.shape();
  if (s.h < kWin || s.w < kWin) {
    throw InputError("ssim: images must be at least 11x11, got " + s.str());
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto win = gaussian_window(kWin, 1.5);
  const int oh = s.h - kWin + 1;
  const int ow = s.w - kWin + 1;

  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* pa = a.plane(n, c);
      const double* pb = b.plane(n, c);
      double channel = 0.0;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double ma = 0.0, mb = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
          for (int dy = 0; dy < kWin; ++dy) {
            const double* ra = pa + (y + dy) * s.w + x;
            const double* rb = pb + (y + dy) * s.w + x;
            const double* rw = win.data() + dy * kWin;
            for (int dx = 0; dx < kWin; ++dx) {
              const double wv = rw[dx];
              const double va = ra[dx];
              const double vb = rb[dx];
              ma += wv * va;
              mb += wv * vb;
              aa += wv * va * va;
              bb += wv * vb * vb;
              ab += wv * va * vb;
            }
          }
          const double va = aa - ma * ma;
          const double vb = bb - mb * mb;
          const double cov = ab - ma * mb;
          channel += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
      }
      total += channel / (static_cast<double>(oh) * ow);
    }
  }
  return total / (static_cast<double>(s.n) * s.c);
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
  return fmt::format("{:.4f}", db);
}

MetricReport MetricReport::aggregate(std::vector<ImageScore> scores) {
  MetricReport r;
  r.per_image = std::move(scores);
  double psnr_sum = 0.0;
  int finite = 0;
  double ssim_sum = 0.0;
  for (const auto& s : r.per_image) {
    if (std::isinf(s.psnr_db)) {
      ++r.infinite_psnr;
    } else {
      psnr_sum += s.psnr_db;
      ++finite;
    }
    ssim_sum += s.ssim;
  }
  r.psnr_db = finite > 0 ? psnr_sum / finite : std::numeric_limits<double>::infinity();
  r.ssim = r.per_image.empty() ? 0.0 : ssim_sum / static_cast<double>(r.per_image.size());
  return r;
}

std::string MetricReport::table(const std::string& title, bool per_image_rows) const {
  std::string out = fmt::format("{:<24} {:>10} {:>8}\n", title, "PSNR(dB)", "SSIM");
  if (per_image_rows) {
    for (const auto& s : per_image) {
      out += fmt::format("  {:<22} {:>10} {:>8.4f}\n", s.name, format_psnr(s.psnr_db), s.ssim);
    }
  }
  out += fmt::format("{:<24} {:>10} {:>8.4f}\n", "mean", format_psnr(psnr_db), ssim);
  if (infinite_psnr > 0) out += fmt::format("({} identical image(s) excluded from the PSNR mean)\n", infinite_psnr);
  return out;
}

std::string MetricReport::key_values(const std::string& prefix, bool per_image_rows) const {
  std::string out;
  out += fmt::format("{}psnr={}\n", prefix, format_psnr(psnr_db));
  out += fmt::format("{}ssim={:.6f}\n", prefix, ssim);
  out += fmt::format("{}images={}\n", prefix, per_image.size());
  out += fmt::format("{}infinite_psnr={}\n", prefix, infinite_psnr);
  if (per_image_rows) {
    for (const auto& s : per_image) {
      out += fmt::format("{}image.{}.psnr={}\n", prefix, s.name, format_psnr(s.psnr_db));
      out += fmt::format("{}image.{}.ssim={:.6f}\n", prefix, s.name, s.ssim);
    }
  }
  return out;
}

}  // namespace sgsasr::metrics
