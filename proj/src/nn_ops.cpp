#include "emocpd/nn_ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace emocpd::nn {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

struct ConvGeometry {
  int64_t batch, cin, d, h, w;
  int64_t cout, k;
  int64_t stride, pad;
  int64_t od, oh, ow;

  int64_t in_spatial() const { return d * h * w; }
  int64_t out_spatial() const { return od * oh * ow; }
  int64_t patch() const { return cin * k * k * k; }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, int stride, int padding) {
  require(xs.size() == 5, "conv3d input must be rank 5, got " + shape_str(xs));
  require(ws.size() == 5, "conv3d weight must be rank 5, got " + shape_str(ws));
  require(ws[2] == ws[3] && ws[3] == ws[4], "conv3d kernel must be cubic");
  ConvGeometry g;
  g.batch = xs[0];
  g.cin = xs[1];
  g.d = xs[2];
  g.h = xs[3];
  g.w = xs[4];
  g.cout = ws[0];
  g.k = ws[2];
  g.stride = stride;
  g.pad = padding;
  require(ws[1] == g.cin, "conv3d channel mismatch: input " + shape_str(xs) + " vs weight " +
                              shape_str(ws));
  require(g.k == 1 || g.k == 3, "conv3d kernel must be 1 or 3");
  require(stride == 1 || stride == 2, "conv3d stride must be 1 or 2");
  require(padding == 0 || padding == 1, "conv3d padding must be 0 or 1");
  auto out_dim = [&](int64_t in) { return (in + 2 * g.pad - g.k) / g.stride + 1; };
  g.od = out_dim(g.d);
  g.oh = out_dim(g.h);
  g.ow = out_dim(g.w);
  require(g.od > 0 && g.oh > 0 && g.ow > 0, "conv3d output would be empty");
  return g;
}

// Patch-major layout: cols[(ci,kz,ky,kx), (od,oh,ow)].
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const int64_t P = g.out_spatial();
  for (int64_t ci = 0; ci < g.cin; ++ci) {
    const double* xc = x + ci * g.in_spatial();
    for (int64_t kz = 0; kz < g.k; ++kz)
      for (int64_t ky = 0; ky < g.k; ++ky)
        for (int64_t kx = 0; kx < g.k; ++kx) {
          double* row = cols + (((ci * g.k + kz) * g.k + ky) * g.k + kx) * P;
          int64_t p = 0;
          for (int64_t od = 0; od < g.od; ++od) {
            int64_t id = od * g.stride - g.pad + kz;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              int64_t ih = oh * g.stride - g.pad + ky;
              bool plane_ok = id >= 0 && id < g.d && ih >= 0 && ih < g.h;
              for (int64_t ow = 0; ow < g.ow; ++ow, ++p) {
                int64_t iw = ow * g.stride - g.pad + kx;
                row[p] = (plane_ok && iw >= 0 && iw < g.w) ? xc[(id * g.h + ih) * g.w + iw] : 0.0;
              }
            }
          }
        }
  }
}

// Scatter-add of dCols back onto dX.
void col2im(const ConvGeometry& g, const double* cols, double* dx) {
  const int64_t P = g.out_spatial();
  for (int64_t ci = 0; ci < g.cin; ++ci) {
    double* xc = dx + ci * g.in_spatial();
    for (int64_t kz = 0; kz < g.k; ++kz)
      for (int64_t ky = 0; ky < g.k; ++ky)
        for (int64_t kx = 0; kx < g.k; ++kx) {
          const double* row = cols + (((ci * g.k + kz) * g.k + ky) * g.k + kx) * P;
          int64_t p = 0;
          for (int64_t od = 0; od < g.od; ++od) {
            int64_t id = od * g.stride - g.pad + kz;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              int64_t ih = oh * g.stride - g.pad + ky;
              bool plane_ok = id >= 0 && id < g.d && ih >= 0 && ih < g.h;
              for (int64_t ow = 0; ow < g.ow; ++ow, ++p) {
                int64_t iw = ow * g.stride - g.pad + kx;
                if (plane_ok && iw >= 0 && iw < g.w) xc[(id * g.h + ih) * g.w + iw] += row[p];
              }
            }
          }
        }
  }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, padding);
  require(b.shape() == Shape{g.cout}, "conv3d bias must be [Cout]");

  const int64_t P = g.out_spatial();
  const int64_t CK = g.patch();
  const bool direct = g.k == 1 && g.stride == 1 && g.pad == 0;

  std::vector<double> y(static_cast<size_t>(g.batch * g.cout * P));
  std::vector<double> cols;
  if (!direct) cols.resize(static_cast<size_t>(CK * P));

  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* bd = b.data().data();
  for (int64_t n = 0; n < g.batch; ++n) {
    const double* xb = xd + n * g.cin * g.in_spatial();
    const double* src = xb;
    if (!direct) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    double* yb = y.data() + n * g.cout * P;
    detail::gemm(false, false, g.cout, P, CK, wd, CK, src, P, 0.0, yb, P);
    for (int64_t co = 0; co < g.cout; ++co) {
      double bias = bd[co];
      double* row = yb + co * P;
      for (int64_t p = 0; p < P; ++p) row[p] += bias;
    }
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return make_op(
      {g.batch, g.cout, g.od, g.oh, g.ow}, std::move(y), {x, w, b}, [g, xn, wn, bn](Node& self) {
        const int64_t P = g.out_spatial();
        const int64_t CK = g.patch();
        const bool direct = g.k == 1 && g.stride == 1 && g.pad == 0;
        const double* dy = self.grad.data();
        const double* xd = xn->value.data();
        const double* wd = wn->value.data();

        double* dw = wn->requires_grad ? wn->grad_data() : nullptr;
        double* db = bn->requires_grad ? bn->grad_data() : nullptr;
        double* dx = xn->requires_grad ? xn->grad_data() : nullptr;

        std::vector<double> cols;
        std::vector<double> dcols;
        if (!direct && (dw || dx)) cols.resize(static_cast<size_t>(CK * P));
        if (dx) dcols.resize(static_cast<size_t>(CK * P));

        for (int64_t n = 0; n < g.batch; ++n) {
          const double* dyb = dy + n * g.cout * P;
          const double* xb = xd + n * g.cin * g.in_spatial();
          const double* src = xb;
          if (!direct && (dw || dx)) {
            im2col(g, xb, cols.data());
            src = cols.data();
          }
          if (dw)  // dW[co, ck] += sum_p dY[co, p] * cols[ck, p]
            detail::gemm(false, true, g.cout, CK, P, dyb, P, src, P, 1.0, dw, CK);
          if (db)
            for (int64_t co = 0; co < g.cout; ++co) {
              const double* row = dyb + co * P;
              double sum = 0.0;
              for (int64_t p = 0; p < P; ++p) sum += row[p];
              db[co] += sum;
            }
          if (dx) {
            double* dst = direct ? dx + n * g.cin * g.in_spatial() : dcols.data();
            // dCols[ck, p] = sum_co W[co, ck] * dY[co, p]
            detail::gemm(true, false, CK, P, g.cout, wd, CK, dyb, P, direct ? 1.0 : 0.0, dst, P);
            if (!direct) col2im(g, dcols.data(), dx + n * g.cin * g.in_spatial());
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.shape().size() == 2, "linear input must be rank 2");
  require(w.shape().size() == 2, "linear weight must be rank 2");
  const int64_t batch = x.shape()[0], in = x.shape()[1];
  const int64_t out = w.shape()[0];
  require(w.shape()[1] == in,
          "linear dimension mismatch: " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(b.shape() == Shape{out}, "linear bias must be [out]");

  std::vector<double> y(static_cast<size_t>(batch * out));
  detail::gemm(false, true, batch, out, in, x.data().data(), in, w.data().data(), in, 0.0, y.data(),
               out);
  const double* bd = b.data().data();
  for (int64_t i = 0; i < batch; ++i)
    for (int64_t j = 0; j < out; ++j) y[static_cast<size_t>(i * out + j)] += bd[j];

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return make_op({batch, out}, std::move(y), {x, w, b}, [batch, in, out, xn, wn, bn](Node& self) {
    const double* dy = self.grad.data();
    if (xn->requires_grad)
      detail::gemm(false, false, batch, in, out, dy, out, wn->value.data(), in, 1.0, xn->grad_data(),
                   in);
    if (wn->requires_grad)
      detail::gemm(true, false, out, in, batch, dy, out, xn->value.data(), in, 1.0, wn->grad_data(),
                   in);
    if (bn->requires_grad) {
      double* db = bn->grad_data();
      for (int64_t i = 0; i < batch; ++i)
        for (int64_t j = 0; j < out; ++j) db[j] += dy[i * out + j];
    }
  });
}

Tensor activation(const Tensor& x, Act kind) {
  if (kind == Act::none) return x;
  const auto& xv = x.data();
  std::vector<double> y(xv.size());
  switch (kind) {
    case Act::relu:
      for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case Act::sigmoid:
      for (size_t i = 0; i < xv.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
      break;
    case Act::silu:
      for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] / (1.0 + std::exp(-xv[i]));
      break;
    default:
      break;
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(y), {x}, [kind, xn](Node& self) {
    if (!xn->requires_grad) return;
    const double* dy = self.grad.data();
    const double* xv = xn->value.data();
    double* dx = xn->grad_data();
    const size_t n = xn->value.size();
    switch (kind) {
      case Act::relu:
        for (size_t i = 0; i < n; ++i) dx[i] += xv[i] > 0.0 ? dy[i] : 0.0;
        break;
      case Act::sigmoid:
        for (size_t i = 0; i < n; ++i) {
          double s = 1.0 / (1.0 + std::exp(-xv[i]));
          dx[i] += dy[i] * s * (1.0 - s);
        }
        break;
      case Act::silu:
        for (size_t i = 0; i < n; ++i) {
          double s = 1.0 / (1.0 + std::exp(-xv[i]));
          dx[i] += dy[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
        break;
      default:
        break;
    }
  });
}

Tensor relu(const Tensor& x) { return activation(x, Act::relu); }
Tensor silu(const Tensor& x) { return activation(x, Act::silu); }
Tensor sigmoid(const Tensor& x) { return activation(x, Act::sigmoid); }

Tensor global_max_pool(const Tensor& x) {
  require(x.shape().size() == 5, "global_max_pool expects [B,C,D,H,W]");
  const int64_t batch = x.shape()[0], ch = x.shape()[1];
  const int64_t spatial = x.shape()[2] * x.shape()[3] * x.shape()[4];
  require(spatial >= 1, "global_max_pool needs spatial extent");

  const auto& xv = x.data();
  std::vector<double> y(static_cast<size_t>(batch * ch));
  std::vector<int64_t> argmax(static_cast<size_t>(batch * ch));
  for (int64_t bc = 0; bc < batch * ch; ++bc) {
    const double* slice = xv.data() + bc * spatial;
    double best = slice[0];
    int64_t best_i = 0;
    for (int64_t i = 1; i < spatial; ++i)
      if (slice[i] > best) {  // first maximum wins ties
        best = slice[i];
        best_i = i;
      }
    y[static_cast<size_t>(bc)] = best;
    argmax[static_cast<size_t>(bc)] = best_i;
  }

  auto xn = x.node();
  return make_op({batch, ch, 1, 1, 1}, std::move(y), {x},
                 [batch, ch, spatial, argmax, xn](Node& self) {
                   if (!xn->requires_grad) return;
                   const double* dy = self.grad.data();
                   double* dx = xn->grad_data();
                   for (int64_t bc = 0; bc < batch * ch; ++bc)
                     dx[bc * spatial + argmax[static_cast<size_t>(bc)]] += dy[bc];
                 });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormBuffers& buffers, bool training, double momentum, double eps) {
  require(x.shape().size() >= 2, "batch_norm expects rank >= 2");
  const int64_t batch = x.shape()[0], ch = x.shape()[1];
  require(batch >= 1, "batch_norm on empty batch");
  require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch},
          "batch_norm affine parameters must be [C]");
  require(static_cast<int64_t>(buffers.running_mean.size()) == ch, "running stats channel mismatch");

  int64_t spatial = 1;
  for (size_t i = 2; i < x.shape().size(); ++i) spatial *= x.shape()[i];
  const int64_t per_channel = batch * spatial;

  const auto& xv = x.data();
  std::vector<double> mean(static_cast<size_t>(ch), 0.0);
  std::vector<double> invstd(static_cast<size_t>(ch), 0.0);

  if (training) {
    for (int64_t c = 0; c < ch; ++c) {
      double sum = 0.0;
      for (int64_t n = 0; n < batch; ++n) {
        const double* slice = xv.data() + (n * ch + c) * spatial;
        for (int64_t s = 0; s < spatial; ++s) sum += slice[s];
      }
      mean[static_cast<size_t>(c)] = sum / per_channel;
    }
    for (int64_t c = 0; c < ch; ++c) {
      double m = mean[static_cast<size_t>(c)];
      double sq = 0.0;
      for (int64_t n = 0; n < batch; ++n) {
        const double* slice = xv.data() + (n * ch + c) * spatial;
        for (int64_t s = 0; s < spatial; ++s) sq += (slice[s] - m) * (slice[s] - m);
      }
      double var = sq / per_channel;  // population variance, also for the buffers
      invstd[static_cast<size_t>(c)] = 1.0 / std::sqrt(var + eps);
      buffers.running_mean[static_cast<size_t>(c)] =
          (1.0 - momentum) * buffers.running_mean[static_cast<size_t>(c)] + momentum * m;
      buffers.running_var[static_cast<size_t>(c)] =
          (1.0 - momentum) * buffers.running_var[static_cast<size_t>(c)] + momentum * var;
    }
  } else {
    for (int64_t c = 0; c < ch; ++c) {
      mean[static_cast<size_t>(c)] = buffers.running_mean[static_cast<size_t>(c)];
      invstd[static_cast<size_t>(c)] =
          1.0 / std::sqrt(buffers.running_var[static_cast<size_t>(c)] + eps);
    }
  }

  const double* gv = gamma.data().data();
  const double* bv = beta.data().data();
  std::vector<double> xhat(xv.size());
  std::vector<double> y(xv.size());
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t c = 0; c < ch; ++c) {
      const double* slice = xv.data() + (n * ch + c) * spatial;
      double* xh = xhat.data() + (n * ch + c) * spatial;
      double* ys = y.data() + (n * ch + c) * spatial;
      double m = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      for (int64_t s = 0; s < spatial; ++s) {
        xh[s] = (slice[s] - m) * is;
        ys[s] = gv[c] * xh[s] + bv[c];
      }
    }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto xhat_p = std::make_shared<std::vector<double>>(std::move(xhat));
  auto invstd_p = std::make_shared<std::vector<double>>(std::move(invstd));
  return make_op(
      x.shape(), std::move(y), {x, gamma, beta},
      [batch, ch, spatial, training, xn, gn, bn, xhat_p, invstd_p](Node& self) {
        const int64_t per_channel = batch * spatial;
        const double* dy = self.grad.data();
        const double* xh = xhat_p->data();
        const double* gv = gn->value.data();

        // Channel reductions are shared between all three gradients.
        std::vector<double> sum_dy(static_cast<size_t>(ch), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<size_t>(ch), 0.0);
        for (int64_t n = 0; n < batch; ++n)
          for (int64_t c = 0; c < ch; ++c) {
            const double* dys = dy + (n * ch + c) * spatial;
            const double* xhs = xh + (n * ch + c) * spatial;
            double a = 0.0, b = 0.0;
            for (int64_t s = 0; s < spatial; ++s) {
              a += dys[s];
              b += dys[s] * xhs[s];
            }
            sum_dy[static_cast<size_t>(c)] += a;
            sum_dy_xhat[static_cast<size_t>(c)] += b;
          }

        if (bn->requires_grad) {
          double* db = bn->grad_data();
          for (int64_t c = 0; c < ch; ++c) db[c] += sum_dy[static_cast<size_t>(c)];
        }
        if (gn->requires_grad) {
          double* dg = gn->grad_data();
          for (int64_t c = 0; c < ch; ++c) dg[c] += sum_dy_xhat[static_cast<size_t>(c)];
        }
        if (xn->requires_grad) {
          double* dx = xn->grad_data();
          for (int64_t n = 0; n < batch; ++n)
            for (int64_t c = 0; c < ch; ++c) {
              const double* dys = dy + (n * ch + c) * spatial;
              const double* xhs = xh + (n * ch + c) * spatial;
              double* dxs = dx + (n * ch + c) * spatial;
              double g = gv[c], is = (*invstd_p)[static_cast<size_t>(c)];
              if (training) {
                double sd = sum_dy[static_cast<size_t>(c)] / per_channel;
                double sdx = sum_dy_xhat[static_cast<size_t>(c)] / per_channel;
                for (int64_t s = 0; s < spatial; ++s)
                  dxs[s] += g * is * (dys[s] - sd - xhs[s] * sdx);
              } else {
                for (int64_t s = 0; s < spatial; ++s) dxs[s] += g * is * dys[s];
              }
            }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.shape().size() >= 2, "layer_norm expects rank >= 2");
  const int64_t batch = x.shape()[0], ch = x.shape()[1];
  int64_t spatial = 1;
  for (size_t i = 2; i < x.shape().size(); ++i) spatial *= x.shape()[i];
  const int64_t per_sample = ch * spatial;
  require(per_sample >= 2, "layer_norm needs at least 2 elements per sample");
  require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch},
          "layer_norm affine parameters must be [C]");

  const auto& xv = x.data();
  const double* gv = gamma.data().data();
  const double* bv = beta.data().data();
  std::vector<double> xhat(xv.size());
  std::vector<double> y(xv.size());
  std::vector<double> invstd(static_cast<size_t>(batch));
  for (int64_t n = 0; n < batch; ++n) {
    const double* xs = xv.data() + n * per_sample;
    double sum = 0.0;
    for (int64_t i = 0; i < per_sample; ++i) sum += xs[i];
    double m = sum / per_sample;
    double sq = 0.0;
    for (int64_t i = 0; i < per_sample; ++i) sq += (xs[i] - m) * (xs[i] - m);
    double is = 1.0 / std::sqrt(sq / per_sample + eps);
    invstd[static_cast<size_t>(n)] = is;
    double* xh = xhat.data() + n * per_sample;
    double* ys = y.data() + n * per_sample;
    for (int64_t c = 0; c < ch; ++c)
      for (int64_t s = 0; s < spatial; ++s) {
        int64_t i = c * spatial + s;
        xh[i] = (xs[i] - m) * is;
        ys[i] = gv[c] * xh[i] + bv[c];
      }
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto xhat_p = std::make_shared<std::vector<double>>(std::move(xhat));
  auto invstd_p = std::make_shared<std::vector<double>>(std::move(invstd));
  return make_op(
      x.shape(), std::move(y), {x, gamma, beta},
      [batch, ch, spatial, xn, gn, bn, xhat_p, invstd_p](Node& self) {
        const int64_t per_sample = ch * spatial;
        const double* dy = self.grad.data();
        const double* xh = xhat_p->data();
        const double* gv = gn->value.data();

        if (bn->requires_grad || gn->requires_grad) {
          double* db = bn->requires_grad ? bn->grad_data() : nullptr;
          double* dg = gn->requires_grad ? gn->grad_data() : nullptr;
          for (int64_t n = 0; n < batch; ++n)
            for (int64_t c = 0; c < ch; ++c) {
              const double* dys = dy + n * per_sample + c * spatial;
              const double* xhs = xh + n * per_sample + c * spatial;
              double a = 0.0, b = 0.0;
              for (int64_t s = 0; s < spatial; ++s) {
                a += dys[s];
                b += dys[s] * xhs[s];
              }
              if (db) db[c] += a;
              if (dg) dg[c] += b;
            }
        }
        if (xn->requires_grad) {
          double* dx = xn->grad_data();
          std::vector<double> g(static_cast<size_t>(per_sample));
          for (int64_t n = 0; n < batch; ++n) {
            const double* dys = dy + n * per_sample;
            const double* xhs = xh + n * per_sample;
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t c = 0; c < ch; ++c)
              for (int64_t s = 0; s < spatial; ++s) {
                int64_t i = c * spatial + s;
                g[static_cast<size_t>(i)] = dys[i] * gv[c];
                sum_g += g[static_cast<size_t>(i)];
                sum_gx += g[static_cast<size_t>(i)] * xhs[i];
              }
            double mg = sum_g / per_sample, mgx = sum_gx / per_sample;
            double is = (*invstd_p)[static_cast<size_t>(n)];
            double* dxs = dx + n * per_sample;
            for (int64_t i = 0; i < per_sample; ++i)
              dxs[i] += is * (g[static_cast<size_t>(i)] - mg - xhs[i] * mgx);
          }
        }
      });
}

Tensor softmax(const Tensor& x, int axis) {
  const auto& xs = x.shape();
  int rank = static_cast<int>(xs.size());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "softmax axis out of range");

  int64_t outer = 1, len = xs[static_cast<size_t>(axis)], inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xs[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= xs[static_cast<size_t>(i)];

  const auto& xv = x.data();
  std::vector<double> y(xv.size());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const double* src = xv.data() + o * len * inner + i;
      double* dst = y.data() + o * len * inner + i;
      double mx = src[0];
      for (int64_t l = 1; l < len; ++l) mx = std::max(mx, src[l * inner]);
      double sum = 0.0;
      for (int64_t l = 0; l < len; ++l) {
        double e = std::exp(src[l * inner] - mx);
        dst[l * inner] = e;
        sum += e;
      }
      for (int64_t l = 0; l < len; ++l) dst[l * inner] /= sum;
    }

  auto xn = x.node();
  auto yv = std::make_shared<std::vector<double>>(y);  // softmax output needed for backward
  return make_op(xs, std::move(y), {x}, [outer, len, inner, xn, yv](Node& self) {
    if (!xn->requires_grad) return;
    const double* dy = self.grad.data();
    const double* yd = yv->data();
    double* dx = xn->grad_data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        const double* ys = yd + o * len * inner + i;
        const double* dys = dy + o * len * inner + i;
        double* dxs = dx + o * len * inner + i;
        double dot = 0.0;
        for (int64_t l = 0; l < len; ++l) dot += dys[l * inner] * ys[l * inner];
        for (int64_t l = 0; l < len; ++l)
          dxs[l * inner] += (dys[l * inner] - dot) * ys[l * inner];
      }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.shape().size() == 2, "cross_entropy expects [B,K] logits");
  const int64_t batch = logits.shape()[0], classes = logits.shape()[1];
  require(static_cast<int64_t>(labels.size()) == batch, "label count != batch size");
  for (int label : labels)
    if (label < 0 || label >= classes)
      throw Error("label " + std::to_string(label) + " out of range [0," +
                  std::to_string(classes) + ")");

  const auto& zv = logits.data();
  // Save softmax for the backward pass; loss via logsumexp.
  std::vector<double> soft(zv.size());
  double loss = 0.0;
  for (int64_t n = 0; n < batch; ++n) {
    const double* z = zv.data() + n * classes;
    double* s = soft.data() + n * classes;
    double mx = z[0];
    for (int64_t k = 1; k < classes; ++k) mx = std::max(mx, z[k]);
    double sum = 0.0;
    for (int64_t k = 0; k < classes; ++k) {
      s[k] = std::exp(z[k] - mx);
      sum += s[k];
    }
    for (int64_t k = 0; k < classes; ++k) s[k] /= sum;
    loss += -(z[labels[static_cast<size_t>(n)]] - mx - std::log(sum));
  }
  loss /= static_cast<double>(batch);

  auto zn = logits.node();
  auto soft_p = std::make_shared<std::vector<double>>(std::move(soft));
  auto labels_p = std::make_shared<std::vector<int>>(labels);
  return make_op({1}, {loss}, {logits}, [batch, classes, zn, soft_p, labels_p](Node& self) {
    if (!zn->requires_grad) return;
    double dL = self.grad[0];
    double* dz = zn->grad_data();
    const double* s = soft_p->data();
    for (int64_t n = 0; n < batch; ++n) {
      int label = (*labels_p)[static_cast<size_t>(n)];
      for (int64_t k = 0; k < classes; ++k) {
        double delta = k == label ? 1.0 : 0.0;
        dz[n * classes + k] += dL * (s[n * classes + k] - delta) / batch;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> y(av.size());
  for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(y), {a, b}, [an, bn](Node& self) {
    const double* dy = self.grad.data();
    if (an->requires_grad) {
      double* da = an->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) da[i] += dy[i];
    }
    if (bn->requires_grad) {
      double* db = bn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) db[i] += dy[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> y(av.size());
  for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(y), {a, b}, [an, bn](Node& self) {
    const double* dy = self.grad.data();
    if (an->requires_grad) {
      double* da = an->grad_data();
      const double* bv2 = bn->value.data();
      for (size_t i = 0; i < self.grad.size(); ++i) da[i] += dy[i] * bv2[i];
    }
    if (bn->requires_grad) {
      double* db = bn->grad_data();
      const double* av2 = an->value.data();
      for (size_t i = 0; i < self.grad.size(); ++i) db[i] += dy[i] * av2[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto& av = a.data();
  std::vector<double> y(av.size());
  for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] * factor;
  auto an = a.node();
  return make_op(a.shape(), std::move(y), {a}, [an, factor](Node& self) {
    if (!an->requires_grad) return;
    const double* dy = self.grad.data();
    double* da = an->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) da[i] += dy[i] * factor;
  });
}

Tensor mul_gate(const Tensor& x, const Tensor& gate) {
  const auto& xs = x.shape();
  const auto& gs = gate.shape();
  require(xs.size() == gs.size() && xs.size() >= 2, "mul_gate rank mismatch");
  require(xs[0] == gs[0] && xs[1] == gs[1], "mul_gate batch/channel mismatch");
  for (size_t i = 2; i < gs.size(); ++i) require(gs[i] == 1, "gate spatial dims must be 1");

  const int64_t bc = xs[0] * xs[1];
  int64_t spatial = 1;
  for (size_t i = 2; i < xs.size(); ++i) spatial *= xs[i];

  const auto& xv = x.data();
  const auto& gv = gate.data();
  std::vector<double> y(xv.size());
  for (int64_t i = 0; i < bc; ++i) {
    double g = gv[static_cast<size_t>(i)];
    const double* src = xv.data() + i * spatial;
    double* dst = y.data() + i * spatial;
    for (int64_t s = 0; s < spatial; ++s) dst[s] = src[s] * g;
  }

  auto xn = x.node();
  auto gn = gate.node();
  return make_op(xs, std::move(y), {x, gate}, [bc, spatial, xn, gn](Node& self) {
    const double* dy = self.grad.data();
    if (xn->requires_grad) {
      double* dx = xn->grad_data();
      const double* gv2 = gn->value.data();
      for (int64_t i = 0; i < bc; ++i) {
        double g = gv2[i];
        for (int64_t s = 0; s < spatial; ++s) dx[i * spatial + s] += dy[i * spatial + s] * g;
      }
    }
    if (gn->requires_grad) {
      double* dg = gn->grad_data();
      const double* xv2 = xn->value.data();
      for (int64_t i = 0; i < bc; ++i) {
        double sum = 0.0;
        for (int64_t s = 0; s < spatial; ++s) sum += dy[i * spatial + s] * xv2[i * spatial + s];
        dg[i] += sum;
      }
    }
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  require(shape_numel(shape) == x.numel(), "reshape to incompatible element count");
  auto xn = x.node();
  std::vector<double> y = x.data();
  return make_op(shape, std::move(y), {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    double* dx = xn->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  });
}

Tensor transpose_last2(const Tensor& x) {
  const auto& xs = x.shape();
  require(xs.size() >= 2, "transpose_last2 needs rank >= 2");
  const int64_t rows = xs[xs.size() - 2], cols = xs[xs.size() - 1];
  int64_t outer = 1;
  for (size_t i = 0; i + 2 < xs.size(); ++i) outer *= xs[i];

  Shape ys = xs;
  std::swap(ys[ys.size() - 2], ys[ys.size() - 1]);

  const auto& xv = x.data();
  std::vector<double> y(xv.size());
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = xv.data() + o * rows * cols;
    double* dst = y.data() + o * rows * cols;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }

  auto xn = x.node();
  return make_op(ys, std::move(y), {x}, [outer, rows, cols, xn](Node& self) {
    if (!xn->requires_grad) return;
    const double* dy = self.grad.data();
    double* dx = xn->grad_data();
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = dy + o * rows * cols;
      double* dst = dx + o * rows * cols;
      for (int64_t c = 0; c < cols; ++c)
        for (int64_t r = 0; r < rows; ++r) dst[r * cols + c] += src[c * rows + r];
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == bs.size() && as.size() >= 2, "bmm rank mismatch");
  for (size_t i = 0; i + 2 < as.size(); ++i)
    require(as[i] == bs[i], "bmm leading dimensions differ");
  const int64_t m = as[as.size() - 2], k = as[as.size() - 1];
  require(bs[bs.size() - 2] == k, "bmm inner dimension mismatch: " + shape_str(as) + " x " +
                                      shape_str(bs));
  const int64_t n = bs[bs.size() - 1];
  int64_t outer = 1;
  for (size_t i = 0; i + 2 < as.size(); ++i) outer *= as[i];

  Shape ys = as;
  ys[ys.size() - 1] = n;

  std::vector<double> y(static_cast<size_t>(outer * m * n));
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (int64_t o = 0; o < outer; ++o)
    detail::gemm(false, false, m, n, k, av + o * m * k, k, bv + o * k * n, n, 0.0,
                 y.data() + o * m * n, n);

  auto an = a.node();
  auto bn = b.node();
  return make_op(ys, std::move(y), {a, b}, [outer, m, n, k, an, bn](Node& self) {
    const double* dy = self.grad.data();
    if (an->requires_grad) {
      double* da = an->grad_data();
      const double* bv2 = bn->value.data();
      for (int64_t o = 0; o < outer; ++o)  // dA = dY * B^T
        detail::gemm(false, true, m, k, n, dy + o * m * n, n, bv2 + o * k * n, n, 1.0,
                     da + o * m * k, k);
    }
    if (bn->requires_grad) {
      double* db = bn->grad_data();
      const double* av2 = an->value.data();
      for (int64_t o = 0; o < outer; ++o)  // dB = A^T * dY
        detail::gemm(true, false, k, n, m, av2 + o * m * k, k, dy + o * m * n, n, 1.0,
                     db + o * k * n, n);
    }
  });
}

Tensor sum_all(const Tensor& x) {
  const auto& xv = x.data();
  double sum = 0.0;
  for (double v : xv) sum += v;
  auto xn = x.node();
  return make_op({1}, {sum}, {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    double dy = self.grad[0];
    double* dx = xn->grad_data();
    for (size_t i = 0; i < xn->value.size(); ++i) dx[i] += dy;
  });
}

}  // namespace emocpd::nn
