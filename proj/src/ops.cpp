#include "sketchmatch/ops.hpp"

#include <algorithm>
#include <cmath>

namespace sketchmatch::ops {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

void check_2d(const char* op, const Tensor& t) {
  require(t.ndim() == 2,
          std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

Tensor output_like(const Tensor& a, Shape shape) {
  Tensor out = Tensor::zeros(std::move(shape));
  out.set_requires_grad(a.requires_grad());
  return out;
}

// out.requires_grad = union of inputs; recording happens only when a tape is
// active and some input requires grad.
bool propagate(Tensor& out, std::initializer_list<const Tensor*> inputs) {
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || t->requires_grad();
  out.set_requires_grad(rg);
  return rg && Tape::active() != nullptr;
}

void accumulate(const NodePtr& n, std::size_t i, real v) {
  n->ensure_grad();
  n->grad[i] += v;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = output_like(a, a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (propagate(out, {&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = output_like(a, a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (propagate(out, {&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = output_like(a, a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (propagate(out, {&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, real c) {
  Tensor out = output_like(a, a.shape());
  const auto& av = a.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (propagate(out, {&a})) {
    NodePtr an = a.node(), on = out.node();
    Tape::active()->record([an, on, c] {
      if (on->grad.empty() || !an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
    });
  }
  return out;
}

namespace {

// C[m,n] += A[m,k] * B[k,n]; ikj order so the inner loop is contiguous.
void matmul_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k,
                std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const real aip = a[i * k + p];
      if (aip == real(0)) continue;
      const real* brow = b + p * n;
      real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m,n] += A^T[m,k] * B[k,n] where A is stored [k,m].
void matmul_tn_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const real* arow = a + p * m;
    const real* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const real aip = arow[i];
      if (aip == real(0)) continue;
      real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B^T[k,n] where B is stored [n,k].
void matmul_nt_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const real* brow = b + j * k;
      real acc = real(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d("matmul", a);
  check_2d("matmul", b);
  require(a.cols() == b.rows(), "matmul: inner extents differ, " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  matmul_acc(a.value().data(), b.value().data(), out.raw_value().data(), m, k, n);
  if (propagate(out, {&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();  // dA += G * B^T
        matmul_nt_acc(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB += A^T * G
        matmul_tn_acc(an->value.data(), on->grad.data(), bn->grad.data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_2d("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  const auto& av = a.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
  if (propagate(out, {&a})) {
    NodePtr an = a.node(), on = out.node();
    Tape::active()->record([an, on, m, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_2d("affine", x);
  check_2d("affine", w);
  require(x.cols() == w.rows(), "affine: input/weight extents differ, " +
                                    shape_str(x.shape()) + " vs " +
                                    shape_str(w.shape()));
  require(b.ndim() == 1 && b.shape()[0] == w.cols(),
          "affine: bias shape " + shape_str(b.shape()) + " does not match weight " +
              shape_str(w.shape()));
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  Tensor out = Tensor::zeros({m, n});
  auto& ov = out.raw_value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = bv[j];
  matmul_acc(x.value().data(), w.value().data(), ov.data(), m, k, n);
  if (propagate(out, {&x, &w, &b})) {
    NodePtr xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    Tape::active()->record([xn, wn, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        xn->ensure_grad();
        matmul_nt_acc(on->grad.data(), wn->value.data(), xn->grad.data(), m, n, k);
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        matmul_tn_acc(xn->value.data(), on->grad.data(), wn->grad.data(), k, m, n);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += on->grad[i * n + j];
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  require(x.ndim() == 3, "conv2d: input must be [c, h, w], got " + shape_str(x.shape()));
  require(weight.ndim() == 4,
          "conv2d: weight must be [o, c, kh, kw], got " + shape_str(weight.shape()));
  require(x.shape()[0] == weight.shape()[1],
          "conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " +
              shape_str(weight.shape()));
  require(bias.ndim() == 1 && bias.shape()[0] == weight.shape()[0],
          "conv2d: bias shape " + shape_str(bias.shape()) + " does not match weight " +
              shape_str(weight.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
  require(h + 2 * pad >= kh && w + 2 * pad >= kw,
          "conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
              shape_str(x.shape()));
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;

  Tensor out = Tensor::zeros({co, oh, ow});
  const real* xv = x.value().data();
  const real* wv = weight.value().data();
  const real* bv = bias.value().data();
  real* ov = out.raw_value().data();
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        real acc = bv[o];
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                  static_cast<std::ptrdiff_t>(pad);
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                  static_cast<std::ptrdiff_t>(pad);
        for (std::size_t c = 0; c < ci; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += xv[(c * h + iy) * w + ix] * wv[((o * ci + c) * kh + ky) * kw + kx];
            }
          }
        }
        ov[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }

  if (propagate(out, {&x, &weight, &bias})) {
    NodePtr xn = x.node(), wn = weight.node(), bn = bias.node(), on = out.node();
    Tape::active()->record([xn, wn, bn, on, ci, h, w, co, kh, kw, oh, ow, stride, pad] {
      if (on->grad.empty()) return;
      const real* g = on->grad.data();
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t o = 0; o < co; ++o) {
          real acc = real(0);
          for (std::size_t i = 0; i < oh * ow; ++i) acc += g[o * oh * ow + i];
          bn->grad[o] += acc;
        }
      }
      const bool need_x = xn->requires_grad;
      const bool need_w = wn->requires_grad;
      if (!need_x && !need_w) return;
      if (need_x) xn->ensure_grad();
      if (need_w) wn->ensure_grad();
      for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const real go = g[(o * oh + oy) * ow + ox];
            if (go == real(0)) continue;
            const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                      static_cast<std::ptrdiff_t>(pad);
            const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                      static_cast<std::ptrdiff_t>(pad);
            for (std::size_t c = 0; c < ci; ++c) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(ky);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(kx);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t xi = (c * h + iy) * w + ix;
                  const std::size_t wi = ((o * ci + c) * kh + ky) * kw + kx;
                  if (need_x) xn->grad[xi] += go * wn->value[wi];
                  if (need_w) wn->grad[wi] += go * xn->value[xi];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = output_like(x, x.shape());
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > real(0) ? xv[i] : real(0);
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (xn->value[i] > real(0)) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = output_like(x, x.shape());
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = real(1) / (real(1) + std::exp(-xv[i]));
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const real y = on->value[i];
        xn->grad[i] += on->grad[i] * y * (real(1) - y);
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  check_2d("softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, n});
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < m; ++i) {
    real mx = xv[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    real sum = real(0);
    for (std::size_t j = 0; j < n; ++j) {
      ov[i * n + j] = std::exp(xv[i * n + j] - mx);
      sum += ov[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] /= sum;
  }
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, m, n] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        real dot = real(0);
        for (std::size_t j = 0; j < n; ++j)
          dot += on->grad[i * n + j] * on->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[i * n + j] += on->value[i * n + j] * (on->grad[i * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
  check_2d("layer_norm_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  require(gain.ndim() == 1 && gain.shape()[0] == n,
          "layer_norm_rows: gain shape " + shape_str(gain.shape()) +
              " does not match input " + shape_str(x.shape()));
  require(bias.ndim() == 1 && bias.shape()[0] == n,
          "layer_norm_rows: bias shape " + shape_str(bias.shape()) +
              " does not match input " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({m, n});
  std::vector<real> xhat(m * n), inv_sigma(m);
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < m; ++i) {
    real mean = real(0);
    for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
    mean /= static_cast<real>(n);
    real var = real(0);
    for (std::size_t j = 0; j < n; ++j) {
      const real d = xv[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<real>(n);
    const real inv = real(1) / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mean) * inv;
      ov[i * n + j] = gv[j] * xhat[i * n + j] + bv[j];
    }
  }
  if (propagate(out, {&x, &gain, &bias})) {
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    auto xh = std::make_shared<std::vector<real>>(std::move(xhat));
    auto is = std::make_shared<std::vector<real>>(std::move(inv_sigma));
    Tape::active()->record([xn, gn, bn, on, xh, is, m, n] {
      if (on->grad.empty()) return;
      const real* g = on->grad.data();
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gn->grad[j] += g[i * n + j] * (*xh)[i * n + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += g[i * n + j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          real mean_dxh = real(0), mean_dxh_xh = real(0);
          for (std::size_t j = 0; j < n; ++j) {
            const real dxh = g[i * n + j] * gn->value[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * (*xh)[i * n + j];
          }
          mean_dxh /= static_cast<real>(n);
          mean_dxh_xh /= static_cast<real>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const real dxh = g[i * n + j] * gn->value[j];
            xn->grad[i * n + j] +=
                (*is)[i] * (dxh - mean_dxh - (*xh)[i * n + j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, real rate, Rng& rng, bool training) {
  require(rate >= real(0) && rate < real(1),
          "dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == real(0)) return x;
  const real keep_scale = real(1) / (real(1) - rate);
  auto mask = std::make_shared<std::vector<real>>(x.size());
  Tensor out = output_like(x, x.shape());
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : real(0);
    ov[i] = xv[i] * (*mask)[i];
  }
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, mask] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor mean_square(const Tensor& x) {
  const std::size_t n = x.size();
  require(n > 0, "mean_square: empty tensor");
  real acc = real(0);
  for (real v : x.value()) acc += v * v;
  Tensor out = Tensor::scalar(acc / static_cast<real>(n));
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, n] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      const real g = on->grad[0] * real(2) / static_cast<real>(n);
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += g * xn->value[i];
    });
  }
  return out;
}

Tensor euclidean_norm(const Tensor& x) {
  real acc = real(0);
  for (real v : x.value()) acc += v * v;
  const real nrm = std::sqrt(acc);
  Tensor out = Tensor::scalar(nrm);
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, nrm] {
      if (on->grad.empty() || !xn->requires_grad || nrm == real(0)) return;
      xn->ensure_grad();
      const real g = on->grad[0] / nrm;
      for (std::size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += g * xn->value[i];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const std::size_t n = x.size();
  require(n > 0, "mean_all: empty tensor");
  real acc = real(0);
  for (real v : x.value()) acc += v;
  Tensor out = Tensor::scalar(acc / static_cast<real>(n));
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, n] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      const real g = on->grad[0] / static_cast<real>(n);
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += g;
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.size(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = Tensor::from(std::move(shape), x.value());
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  check_2d("take_rows", x);
  const std::size_t n = x.cols();
  for (std::size_t r : rows)
    require(r < x.rows(), "take_rows: row index " + std::to_string(r) +
                              " out of range for " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({rows.size(), n});
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.begin() + rows[i] * n, n, ov.begin() + i * n);
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    auto idx = std::make_shared<std::vector<std::size_t>>(rows);
    Tape::active()->record([xn, on, idx, n] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[(*idx)[i] * n + j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  check_2d("slice_cols", x);
  require(start + count <= x.cols(),
          "slice_cols: range [" + std::to_string(start) + ", " +
              std::to_string(start + count) + ") exceeds " + shape_str(x.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, count});
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.begin() + i * n + start, count, ov.begin() + i * count);
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, start, count, m, n] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j)
          xn->grad[i * n + start + j] += on->grad[i * count + j];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    check_2d("concat_rows", p);
    require(p.cols() == n, "concat_rows: column mismatch " + shape_str(p.shape()) +
                               " vs " + shape_str(parts[0].shape()));
    m += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, n});
  auto& ov = out.raw_value();
  std::size_t row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.value().begin(), p.value().end(), ov.begin() + row * n);
    row += p.rows();
  }
  out.set_requires_grad(rg);
  if (rg && Tape::active()) {
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      offsets.push_back(off);
      off += p.size();
    }
    NodePtr on = out.node();
    Tape::active()->record([nodes, offsets, on] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        nodes[i]->ensure_grad();
        for (std::size_t j = 0; j < nodes[i]->value.size(); ++j)
          nodes[i]->grad[j] += on->grad[offsets[i] + j];
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    check_2d("concat_cols", p);
    require(p.rows() == m, "concat_cols: row mismatch " + shape_str(p.shape()) +
                               " vs " + shape_str(parts[0].shape()));
    n += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, n});
  auto& ov = out.raw_value();
  std::size_t col = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.value().begin() + i * pc, pc, ov.begin() + i * n + col);
    col += pc;
  }
  out.set_requires_grad(rg);
  if (rg && Tape::active()) {
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> col_offsets, col_counts;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      col_offsets.push_back(off);
      col_counts.push_back(p.cols());
      off += p.cols();
    }
    NodePtr on = out.node();
    Tape::active()->record([nodes, col_offsets, col_counts, on, m, n] {
      if (on->grad.empty()) return;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (!nodes[p]->requires_grad) continue;
        nodes[p]->ensure_grad();
        const std::size_t pc = col_counts[p], start = col_offsets[p];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pc; ++j)
            nodes[p]->grad[i * pc + j] += on->grad[i * n + start + j];
      }
    });
  }
  return out;
}

Tensor stack_scalars(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "stack_scalars: no parts");
  Tensor out = Tensor::zeros({parts.size()});
  auto& ov = out.raw_value();
  bool rg = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require(parts[i].is_scalar(), "stack_scalars: part " + std::to_string(i) +
                                      " has shape " + shape_str(parts[i].shape()));
    ov[i] = parts[i].value()[0];
    rg = rg || parts[i].requires_grad();
  }
  out.set_requires_grad(rg);
  if (rg && Tape::active()) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    NodePtr on = out.node();
    Tape::active()->record([nodes, on] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        nodes[i]->ensure_grad();
        nodes[i]->grad[0] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor rows_l2_normalize(const Tensor& x) {
  check_2d("rows_l2_normalize", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, n});
  auto norms = std::make_shared<std::vector<real>>(m, real(0));
  const auto& xv = x.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < m; ++i) {
    real acc = real(0);
    for (std::size_t j = 0; j < n; ++j) acc += xv[i * n + j] * xv[i * n + j];
    const real nrm = std::sqrt(acc);
    (*norms)[i] = nrm;
    if (nrm > real(0))
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] / nrm;
  }
  if (propagate(out, {&x})) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record([xn, on, norms, m, n] {
      if (on->grad.empty() || !xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const real nrm = (*norms)[i];
        if (nrm == real(0)) continue;
        real dot = real(0);
        for (std::size_t j = 0; j < n; ++j)
          dot += on->grad[i * n + j] * on->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[i * n + j] += (on->grad[i * n + j] - dot * on->value[i * n + j]) / nrm;
      }
    });
  }
  return out;
}

Tensor scatter_matrix(const Tensor& values, const std::vector<std::size_t>& row_pos,
                      const std::vector<std::size_t>& col_pos, std::size_t n_rows,
                      std::size_t n_cols) {
  check_2d("scatter_matrix", values);
  require(values.rows() == row_pos.size() && values.cols() == col_pos.size(),
          "scatter_matrix: values " + shape_str(values.shape()) + " vs positions [" +
              std::to_string(row_pos.size()) + ", " + std::to_string(col_pos.size()) + "]");
  for (std::size_t r : row_pos)
    require(r < n_rows, "scatter_matrix: row position out of range");
  for (std::size_t c : col_pos)
    require(c < n_cols, "scatter_matrix: col position out of range");
  Tensor out = Tensor::zeros({n_rows, n_cols});
  const auto& vv = values.value();
  auto& ov = out.raw_value();
  for (std::size_t i = 0; i < row_pos.size(); ++i)
    for (std::size_t j = 0; j < col_pos.size(); ++j)
      ov[row_pos[i] * n_cols + col_pos[j]] = vv[i * col_pos.size() + j];
  if (propagate(out, {&values})) {
    NodePtr vn = values.node(), on = out.node();
    auto rp = std::make_shared<std::vector<std::size_t>>(row_pos);
    auto cp = std::make_shared<std::vector<std::size_t>>(col_pos);
    Tape::active()->record([vn, on, rp, cp, n_cols] {
      if (on->grad.empty() || !vn->requires_grad) return;
      vn->ensure_grad();
      for (std::size_t i = 0; i < rp->size(); ++i)
        for (std::size_t j = 0; j < cp->size(); ++j)
          vn->grad[i * cp->size() + j] += on->grad[(*rp)[i] * n_cols + (*cp)[j]];
    });
  }
  return out;
}

}  // namespace sketchmatch::ops
