#include "sgsasr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "sgsasr/errors.hpp"

namespace sgsasr::ops {

namespace {

thread_local std::uint64_t g_flops = 0;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw InputError(msg);
}

// out (M x L) = W (M x K) * X (K x L) + bias. Each output element sums over k in
// ascending order independent of L, which makes column results batch-invariant.
void gemm_forward(const double* w, int m_rows, int k_dim, const double* x, int cols,
                  const double* bias, double* out) {
  for (int m = 0; m < m_rows; ++m) {
    double* o = out + static_cast<std::size_t>(m) * cols;
    const double b = bias ? bias[m] : 0.0;
    for (int j = 0; j < cols; ++j) o[j] = b;
    const double* wr = w + static_cast<std::size_t>(m) * k_dim;
    for (int k = 0; k < k_dim; ++k) {
      const double wv = wr[k];
      const double* xr = x + static_cast<std::size_t>(k) * cols;
      for (int j = 0; j < cols; ++j) o[j] += wv * xr[j];
    }
  }
}

// Accumulates dW += dOut * X^T, dX += W^T * dOut, dB += rowsum(dOut).
void gemm_backward(const double* w, int m_rows, int k_dim, const double* x, int cols,
                   const double* dout, double* dw, double* dx, double* db) {
  ConstMap dO(dout, m_rows, cols);
  if (dw) {
    MutMap(dw, m_rows, k_dim).noalias() += dO * ConstMap(x, k_dim, cols).transpose();
  }
  if (dx) {
    MutMap(dx, k_dim, cols).noalias() += ConstMap(w, m_rows, k_dim).transpose() * dO;
  }
  if (db) {
    for (int m = 0; m < m_rows; ++m) db[m] += dO.row(m).sum();
  }
}

struct ConvGeometry {
  int n, cin, h, w, cout, kh, kw, stride, pad, groups, ho, wo, cin_g, cout_g;
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const int plane_out = g.ho * g.wo;
  for (int c = 0; c < g.cin_g; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * plane_out;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* r = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(r, r + g.wo, 0.0);
            continue;
          }
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            r[ox] = (ix >= 0 && ix < g.w) ? xc[iy * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
  const int plane_out = g.ho * g.wo;
  for (int c = 0; c < g.cin_g; ++c) {
    double* dxc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const double* row =
            cols + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * plane_out;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dxc[iy * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

bool is_depthwise(const ConvGeometry& g) {
  return g.groups == g.cin && g.cin == g.cout && g.groups > 1;
}

void depthwise_forward(const double* x, const double* w, const double* bias,
                       const ConvGeometry& g, double* out) {
  for (int c = 0; c < g.cin; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    const double* wc = w + static_cast<std::size_t>(c) * g.kh * g.kw;
    double* oc = out + static_cast<std::size_t>(c) * g.ho * g.wo;
    const double b = bias ? bias[c] : 0.0;
    for (int oy = 0; oy < g.ho; ++oy) {
      for (int ox = 0; ox < g.wo; ++ox) {
        double acc = b;
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            acc += wc[ky * g.kw + kx] * xc[iy * g.w + ix];
          }
        }
        oc[oy * g.wo + ox] = acc;
      }
    }
  }
}

void depthwise_backward(const double* x, const double* w, const ConvGeometry& g,
                        const double* dout, double* dw, double* dx, double* db) {
  for (int c = 0; c < g.cin; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    const double* wc = w + static_cast<std::size_t>(c) * g.kh * g.kw;
    const double* dc = dout + static_cast<std::size_t>(c) * g.ho * g.wo;
    double* dwc = dw ? dw + static_cast<std::size_t>(c) * g.kh * g.kw : nullptr;
    double* dxc = dx ? dx + static_cast<std::size_t>(c) * g.h * g.w : nullptr;
    for (int oy = 0; oy < g.ho; ++oy) {
      for (int ox = 0; ox < g.wo; ++ox) {
        const double d = dc[oy * g.wo + ox];
        if (db) db[c] += d;
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            if (dwc) dwc[ky * g.kw + kx] += d * xc[iy * g.w + ix];
            if (dxc) dxc[iy * g.w + ix] += d * wc[ky * g.kw + kx];
          }
        }
      }
    }
  }
}

// Grad buffer of a parent if it participates in differentiation, else nullptr.
double* grad_ptr(const Var& v) {
  if (!v.defined() || !v.requires_grad()) return nullptr;
  return v.node()->grad_buffer().data();
}

int broadcast_channels(const Var& w, int channels, const char* what) {
  const auto k = static_cast<int>(w.value().size());
  require(k == 1 || k == channels,
          std::string(what) + " weight must hold 1 or " + std::to_string(channels) +
              " elements, got " + std::to_string(k));
  return k;
}

}  // namespace

std::uint64_t flop_count() { return g_flops; }
void add_flops(std::uint64_t n) { g_flops += n; }

Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dSpec spec) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(spec.groups >= 1 && xs.c % spec.groups == 0 && ws.n % spec.groups == 0,
          "conv2d: channels not divisible by groups");
  require(ws.c == xs.c / spec.groups,
          "conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  require(spec.stride >= 1 && spec.padding >= 0, "conv2d: invalid stride/padding");
  ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, spec.stride, spec.padding,
                 spec.groups, 0, 0, xs.c / spec.groups, ws.n / spec.groups};
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  require(g.ho >= 1 && g.wo >= 1, "conv2d: output would be empty for input " + xs.str());
  if (bias.defined()) require(static_cast<int>(bias.value().size()) == g.cout, "conv2d: bias size");

  const int k_dim = g.cin_g * g.kh * g.kw;
  const int plane_out = g.ho * g.wo;
  Tensor out({g.n, g.cout, g.ho, g.wo});
  const double* bptr = bias.defined() ? bias.value().data() : nullptr;
  const bool pointwise = is_pointwise(g);
  const bool depthwise = is_depthwise(g);
  std::vector<double> cols;
  if (!pointwise && !depthwise) cols.resize(static_cast<std::size_t>(k_dim) * plane_out);

  for (int n = 0; n < g.n; ++n) {
    if (depthwise) {
      depthwise_forward(x.value().plane(n, 0), weight.value().data(), bptr, g, out.plane(n, 0));
      continue;
    }
    for (int grp = 0; grp < g.groups; ++grp) {
      const double* xg = x.value().plane(n, grp * g.cin_g);
      const double* src = xg;
      if (!pointwise) {
        im2col(xg, g, cols.data());
        src = cols.data();
      }
      gemm_forward(weight.value().data() + static_cast<std::size_t>(grp) * g.cout_g * k_dim,
                   g.cout_g, k_dim, src, plane_out, bptr ? bptr + grp * g.cout_g : nullptr,
                   out.plane(n, grp * g.cout_g));
    }
  }
  add_flops(2ULL * g.n * g.cout * plane_out * k_dim);

  return ag::make_result(std::move(out), {x, weight, bias}, [x, weight, bias, g, pointwise, depthwise,
                                                            k_dim, plane_out](const Tensor& dout) {
    double* dx = grad_ptr(x);
    double* dw = grad_ptr(weight);
    double* db = grad_ptr(bias);
    std::vector<double> cols;
    std::vector<double> dcols;
    if (!pointwise && !depthwise) {
      cols.resize(static_cast<std::size_t>(k_dim) * plane_out);
      if (dx) dcols.resize(cols.size());
    }
    for (int n = 0; n < g.n; ++n) {
      if (depthwise) {
        depthwise_backward(x.value().plane(n, 0), weight.value().data(), g, dout.plane(n, 0), dw,
                           dx ? dx + x.value().index(n, 0, 0, 0) : nullptr, db);
        continue;
      }
      for (int grp = 0; grp < g.groups; ++grp) {
        const double* xg = x.value().plane(n, grp * g.cin_g);
        const double* src = xg;
        if (!pointwise) {
          im2col(xg, g, cols.data());
          src = cols.data();
        }
        const std::size_t woff = static_cast<std::size_t>(grp) * g.cout_g * k_dim;
        double* dx_target = nullptr;
        if (dx) {
          if (pointwise) {
            dx_target = dx + x.value().index(n, grp * g.cin_g, 0, 0);
          } else {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            dx_target = dcols.data();
          }
        }
        gemm_backward(weight.value().data() + woff, g.cout_g, k_dim, src, plane_out,
                      dout.plane(n, grp * g.cout_g), dw ? dw + woff : nullptr, dx_target,
                      db ? db + grp * g.cout_g : nullptr);
        if (dx && !pointwise) col2im(dcols.data(), g, dx + x.value().index(n, grp * g.cin_g, 0, 0));
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.shape().h == 1, "linear expects column matrices (n, features, 1, count)");
  require(weight.shape().h == 1 && weight.shape().w == 1, "linear weight must be (out, in, 1, 1)");
  return conv2d(x, weight, bias);
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape s = x.shape();
  require(static_cast<int>(gamma.value().size()) == s.c && static_cast<int>(beta.value().size()) == s.c,
          "layer_norm: affine parameters must have one entry per channel");
  const std::size_t plane = s.plane();
  Tensor out(s);
  Tensor xhat(s);
  std::vector<double> rstd(static_cast<std::size_t>(s.n) * plane);
  const double* gm = gamma.value().data();
  const double* bt = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      double mean = 0.0;
      for (int c = 0; c < s.c; ++c) mean += x.value().plane(n, c)[p];
      mean /= s.c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double d = x.value().plane(n, c)[p] - mean;
        var += d * d;
      }
      var /= s.c;
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[n * plane + p] = r;
      for (int c = 0; c < s.c; ++c) {
        const double xh = (x.value().plane(n, c)[p] - mean) * r;
        xhat.plane(n, c)[p] = xh;
        out.plane(n, c)[p] = gm[c] * xh + bt[c];
      }
    }
  }
  add_flops(kLayerNormFlopsPerElement * s.numel());

  return ag::make_result(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), s, plane](const Tensor& dout) {
        double* dx = grad_ptr(x);
        double* dg = grad_ptr(gamma);
        double* db = grad_ptr(beta);
        const double* gm = gamma.value().data();
        for (int n = 0; n < s.n; ++n) {
          for (std::size_t p = 0; p < plane; ++p) {
            double sum_d = 0.0;
            double sum_dx = 0.0;
            for (int c = 0; c < s.c; ++c) {
              const std::size_t i = xhat.index(n, c, 0, 0) + p;
              const double dy = dout[i];
              if (dg) dg[c] += dy * xhat[i];
              if (db) db[c] += dy;
              const double dxh = dy * gm[c];
              sum_d += dxh;
              sum_dx += dxh * xhat[i];
            }
            if (!dx) continue;
            const double r = rstd[n * plane + p];
            for (int c = 0; c < s.c; ++c) {
              const std::size_t i = xhat.index(n, c, 0, 0) + p;
              const double dxh = dout[i] * gm[c];
              dx[i] += r * (dxh - sum_d / s.c - xhat[i] * sum_dx / s.c);
            }
          }
        }
      });
}

Var simple_gate(const Var& x) {
  const Shape s = x.shape();
  require(s.c % 2 == 0, "simple_gate: channel count must be even, got " + std::to_string(s.c));
  const int half = s.c / 2;
  Shape os = s;
  os.c = half;
  Tensor out(os);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < half; ++c) {
      const double* a = x.value().plane(n, c);
      const double* b = x.value().plane(n, c + half);
      double* o = out.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) o[p] = a[p] * b[p];
    }
  }
  add_flops(os.numel());
  return ag::make_result(std::move(out), {x}, [x, s, half, plane](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < half; ++c) {
        const double* a = x.value().plane(n, c);
        const double* b = x.value().plane(n, c + half);
        const double* d = dout.plane(n, c);
        double* da = dx + x.value().index(n, c, 0, 0);
        double* dbp = dx + x.value().index(n, c + half, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) {
          da[p] += d[p] * b[p];
          dbp[p] += d[p] * a[p];
        }
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out.at(n, c, 0, 0) = acc / static_cast<double>(plane);
    }
  }
  add_flops(s.numel());
  return ag::make_result(std::move(out), {x}, [x, s, plane](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double g = dout.at(n, c, 0, 0) / static_cast<double>(plane);
        double* d = dx + x.value().index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) d[i] += g;
      }
    }
  });
}

Var mul_channel_broadcast(const Var& x, const Var& s) {
  const Shape xs = x.shape();
  require(s.shape() == Shape{xs.n, xs.c, 1, 1}, "mul_channel_broadcast: scale must be (n, c, 1, 1)");
  const std::size_t plane = xs.plane();
  Tensor out(xs);
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const double k = s.value().at(n, c, 0, 0);
      const double* a = x.value().plane(n, c);
      double* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = a[i] * k;
    }
  }
  add_flops(xs.numel());
  return ag::make_result(std::move(out), {x, s}, [x, s, xs, plane](const Tensor& dout) {
    double* dx = grad_ptr(x);
    double* ds = grad_ptr(s);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const double k = s.value().at(n, c, 0, 0);
        const double* a = x.value().plane(n, c);
        const double* d = dout.plane(n, c);
        if (dx) {
          double* o = dx + x.value().index(n, c, 0, 0);
          for (std::size_t i = 0; i < plane; ++i) o[i] += d[i] * k;
        }
        if (ds) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += d[i] * a[i];
          ds[s.value().index(n, c, 0, 0)] += acc;
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  add_flops(out.size());
  return ag::make_result(std::move(out), {a, b}, [a, b](const Tensor& dout) {
    if (double* da = grad_ptr(a)) {
      for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i];
    }
    if (double* db = grad_ptr(b)) {
      for (std::size_t i = 0; i < dout.size(); ++i) db[i] += dout[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  add_flops(out.size());
  return ag::make_result(std::move(out), {a, b}, [a, b](const Tensor& dout) {
    if (double* da = grad_ptr(a)) {
      for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * b.value()[i];
    }
    if (double* db = grad_ptr(b)) {
      for (std::size_t i = 0; i < dout.size(); ++i) db[i] += dout[i] * a.value()[i];
    }
  });
}

Var scale(const Var& x, const Var& w) {
  const Shape s = x.shape();
  const int k = broadcast_channels(w, s.c, "scale");
  const std::size_t plane = s.plane();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double f = w.value()[k == 1 ? 0 : c];
      const double* a = x.value().plane(n, c);
      double* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = f * a[i];
    }
  }
  add_flops(s.numel());
  return ag::make_result(std::move(out), {x, w}, [x, w, s, k, plane](const Tensor& dout) {
    double* dx = grad_ptr(x);
    double* dw = grad_ptr(w);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const int wi = k == 1 ? 0 : c;
        const double f = w.value()[wi];
        const double* a = x.value().plane(n, c);
        const double* d = dout.plane(n, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          if (dx) dx[x.value().index(n, c, 0, 0) + i] += d[i] * f;
          acc += d[i] * a[i];
        }
        if (dw) dw[wi] += acc;
      }
    }
  });
}

Var weighted_sum(const Var& a, const Var& w1, const Var& b, const Var& w2) {
  require(a.shape() == b.shape(),
          "weighted_sum: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const Shape s = a.shape();
  const int k1 = broadcast_channels(w1, s.c, "weighted_sum");
  const int k2 = broadcast_channels(w2, s.c, "weighted_sum");
  const std::size_t plane = s.plane();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double f1 = w1.value()[k1 == 1 ? 0 : c];
      const double f2 = w2.value()[k2 == 1 ? 0 : c];
      const double* pa = a.value().plane(n, c);
      const double* pb = b.value().plane(n, c);
      double* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = f1 * pa[i] + f2 * pb[i];
    }
  }
  add_flops(kWeightedFuseFlopsPerElement * s.numel());
  return ag::make_result(std::move(out), {a, w1, b, w2},
                         [a, w1, b, w2, s, k1, k2, plane](const Tensor& dout) {
    double* da = grad_ptr(a);
    double* db = grad_ptr(b);
    double* dw1 = grad_ptr(w1);
    double* dw2 = grad_ptr(w2);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const int i1 = k1 == 1 ? 0 : c;
        const int i2 = k2 == 1 ? 0 : c;
        const std::size_t base = a.value().index(n, c, 0, 0);
        double acc1 = 0.0;
        double acc2 = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = dout[base + i];
          if (da) da[base + i] += d * w1.value()[i1];
          if (db) db[base + i] += d * w2.value()[i2];
          acc1 += d * a.value()[base + i];
          acc2 += d * b.value()[base + i];
        }
        if (dw1) dw1[i1] += acc1;
        if (dw2) dw2[i2] += acc2;
      }
    }
  });
}

Var pixel_shuffle(const Var& x, int factor) {
  const Shape s = x.shape();
  const int rr = factor * factor;
  require(factor >= 1 && s.c % rr == 0, "pixel_shuffle: channels not divisible by factor^2");
  const Shape os{s.n, s.c / rr, s.h * factor, s.w * factor};
  // Output element -> input element index map, shared by forward and backward.
  std::vector<std::size_t> src(os.numel());
  {
    std::size_t o = 0;
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) {
            const int ic = c * rr + (y % factor) * factor + (xx % factor);
            src[o++] = x.value().index(n, ic, y / factor, xx / factor);
          }
  }
  Tensor out(os);
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = x.value()[src[i]];
  return ag::make_result(std::move(out), {x}, [x, src = std::move(src)](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (std::size_t i = 0; i < src.size(); ++i) dx[src[i]] += dout[i];
  });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.n == os.n && s.h == os.h && s.w == os.w, "concat_channels: spatial/batch mismatch");
    os.c += s.c;
  }
  const std::size_t plane = os.plane();
  Tensor out(os);
  for (int n = 0; n < os.n; ++n) {
    int offset = 0;
    for (const auto& p : parts) {
      const std::size_t count = static_cast<std::size_t>(p.shape().c) * plane;
      std::memcpy(out.plane(n, offset), p.value().plane(n, 0), count * sizeof(double));
      offset += p.shape().c;
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return ag::make_result(std::move(out), inputs, [inputs, os, plane](const Tensor& dout) {
    for (int n = 0; n < os.n; ++n) {
      int offset = 0;
      for (const auto& p : inputs) {
        const std::size_t count = static_cast<std::size_t>(p.shape().c) * plane;
        if (double* dp = grad_ptr(p)) {
          double* dst = dp + p.value().index(n, 0, 0, 0);
          const double* srcp = dout.plane(n, offset);
          for (std::size_t i = 0; i < count; ++i) dst[i] += srcp[i];
        }
        offset += p.shape().c;
      }
    }
  });
}

Var slice_channels(const Var& x, int start, int count) {
  const Shape s = x.shape();
  require(start >= 0 && count >= 1 && start + count <= s.c, "slice_channels: range out of bounds");
  Shape os = s;
  os.c = count;
  const std::size_t block = static_cast<std::size_t>(count) * s.plane();
  Tensor out(os);
  for (int n = 0; n < s.n; ++n) {
    std::memcpy(out.plane(n, 0), x.value().plane(n, start), block * sizeof(double));
  }
  return ag::make_result(std::move(out), {x}, [x, s, start, block](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (int n = 0; n < s.n; ++n) {
      double* dst = dx + x.value().index(n, start, 0, 0);
      const double* srcp = dout.plane(n, 0);
      for (std::size_t i = 0; i < block; ++i) dst[i] += srcp[i];
    }
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  add_flops(out.size());
  return ag::make_result(std::move(out), {x}, [x](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      if (x.value()[i] > 0.0) dx[i] += dout[i];
    }
  });
}

Var film(const Var& h, const Var& alpha, const Var& beta) {
  require(h.shape() == alpha.shape() && h.shape() == beta.shape(), "film: shape mismatch");
  Tensor out(h.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 + alpha.value()[i]) * h.value()[i] + beta.value()[i];
  }
  add_flops(kFilmFlopsPerElement * out.size());
  return ag::make_result(std::move(out), {h, alpha, beta}, [h, alpha, beta](const Tensor& dout) {
    double* dh = grad_ptr(h);
    double* da = grad_ptr(alpha);
    double* db = grad_ptr(beta);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      if (dh) dh[i] += dout[i] * (1.0 + alpha.value()[i]);
      if (da) da[i] += dout[i] * h.value()[i];
      if (db) db[i] += dout[i];
    }
  });
}

Var gather_columns(const Var& x, std::span<const int> indices, int count) {
  const Shape s = x.shape();
  require(count >= 1 && indices.size() == static_cast<std::size_t>(s.n) * count,
          "gather_columns: need n * count indices");
  const int plane = static_cast<int>(s.plane());
  for (int idx : indices) require(idx >= 0 && idx < plane, "gather_columns: index out of range");
  Tensor out({s.n, s.c, 1, count});
  for (int n = 0; n < s.n; ++n) {
    const int* ids = indices.data() + static_cast<std::size_t>(n) * count;
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* o = out.plane(n, c);
      for (int q = 0; q < count; ++q) o[q] = src[ids[q]];
    }
  }
  std::vector<int> ids(indices.begin(), indices.end());
  return ag::make_result(std::move(out), {x}, [x, s, count, ids = std::move(ids)](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (int n = 0; n < s.n; ++n) {
      const int* id = ids.data() + static_cast<std::size_t>(n) * count;
      for (int c = 0; c < s.c; ++c) {
        double* dst = dx + x.value().index(n, c, 0, 0);
        const double* d = dout.plane(n, c);
        for (int q = 0; q < count; ++q) dst[id[q]] += d[q];
      }
    }
  });
}

Var unfold3x3(const Var& x) {
  const Shape s = x.shape();
  Tensor out({s.n, s.c * 9, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int k = 0; k < 9; ++k) {
        const int dy = k / 3 - 1;
        const int dx = k % 3 - 1;
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) {
            const int iy = y + dy;
            const int ix = xx + dx;
            out.at(n, c * 9 + k, y, xx) =
                (iy >= 0 && iy < s.h && ix >= 0 && ix < s.w) ? x.value().at(n, c, iy, ix) : 0.0;
          }
      }
  return ag::make_result(std::move(out), {x}, [x, s](const Tensor& dout) {
    double* dxp = grad_ptr(x);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int k = 0; k < 9; ++k) {
          const int dy = k / 3 - 1;
          const int dx = k % 3 - 1;
          for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
              const int iy = y + dy;
              const int ix = xx + dx;
              if (iy >= 0 && iy < s.h && ix >= 0 && ix < s.w) {
                dxp[x.value().index(n, c, iy, ix)] += dout.at(n, c * 9 + k, y, xx);
              }
            }
        }
  });
}

Var scale_columns(const Var& x, const Tensor& weights) {
  const Shape s = x.shape();
  require(s.h == 1 && weights.shape() == Shape{s.n, 1, 1, s.w}, "scale_columns: weights must be (n, 1, 1, count)");
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int q = 0; q < s.w; ++q) out.at(n, c, 0, q) = x.value().at(n, c, 0, q) * weights.at(n, 0, 0, q);
  add_flops(s.numel());
  return ag::make_result(std::move(out), {x}, [x, s, weights](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int q = 0; q < s.w; ++q) {
          dx[x.value().index(n, c, 0, q)] += dout.at(n, c, 0, q) * weights.at(n, 0, 0, q);
        }
  });
}

Var reshape(const Var& x, Shape shape) {
  require(shape.numel() == x.value().size(), "reshape: element count mismatch " + x.shape().str() +
                                                 " -> " + shape.str());
  return ag::make_result(x.value().reshaped(shape), {x}, [x](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
  });
}

Var crop(const Var& x, int h, int w) {
  const Shape s = x.shape();
  require(h >= 1 && w >= 1 && h <= s.h && w <= s.w, "crop: window exceeds input");
  if (h == s.h && w == s.w) return x;
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        std::memcpy(&out.at(n, c, y, 0), x.value().data() + x.value().index(n, c, y, 0), w * sizeof(double));
  return ag::make_result(std::move(out), {x}, [x, s, h, w](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) dx[x.value().index(n, c, y, xx)] += dout.at(n, c, y, xx);
  });
}

Var l1_loss(const Var& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "l1_loss: cardinality mismatch " + pred.shape().str() + " vs " + target.shape().str());
  require(target.size() > 0, "l1_loss: empty pixel set");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) acc += std::abs(pred.value()[i] - target[i]);
  const double count = static_cast<double>(target.size());
  add_flops(3 * target.size());
  return ag::make_result(Tensor({1, 1, 1, 1}, acc / count), {pred},
                         [pred, target, count](const Tensor& dout) {
    double* dp = grad_ptr(pred);
    const double g = dout[0] / count;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double d = pred.value()[i] - target[i];
      if (d > 0.0) dp[i] += g;
      else if (d < 0.0) dp[i] -= g;
    }
  });
}

Var dot_constant(const Var& x, const Tensor& r) {
  require(x.shape() == r.shape(), "dot_constant: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += x.value()[i] * r[i];
  add_flops(2 * r.size());
  return ag::make_result(Tensor({1, 1, 1, 1}, acc), {x}, [x, r](const Tensor& dout) {
    double* dx = grad_ptr(x);
    for (std::size_t i = 0; i < r.size(); ++i) dx[i] += dout[0] * r[i];
  });
}

namespace {
// Mirror index without repeating the edge sample; periodic for pads wider than the input.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}
}  // namespace

Tensor pad_reflect(const Tensor& x, int h, int w) {
  require(h >= x.h() && w >= x.w(), "pad_reflect: target smaller than input");
  if (h == x.h() && w == x.w()) return x;
  Tensor out({x.n(), x.c(), h, w});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, reflect_index(y, x.h()), reflect_index(xx, x.w()));
  return out;
}

}  // namespace sgsasr::ops
