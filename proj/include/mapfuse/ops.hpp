#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mapfuse/tape.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {
namespace detail {

// ---- raw dense kernels (no tape) ----------------------------------------

// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void matmul_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < m * n; ++i) c[i] = T(0);
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <class T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = T(0);
      for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
template <class T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < k * n; ++i) c[i] = T(0);
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      T* crow = c + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
T softplus(T x) {
  // log(1 + exp(x)) without overflow
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <class T>
T norm_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <class T>
T norm_pdf(T x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return T(inv_sqrt_2pi) * std::exp(T(-0.5) * x * x);
}

}  // namespace detail

// ---- tape primitives ------------------------------------------------------
//
// Each op validates shapes, computes the forward value, and, when any input
// requires a gradient, registers a backward closure that reads values back
// from the tape by node id.

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  bool req = t.any_wants_grad({a, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ai = a.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      if (tp.wants_grad(ai)) {
        Tensor<T>& ga = tp.grad_buf(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.wants_grad(bi)) {
        Tensor<T>& gb = tp.grad_buf(bi);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  bool req = t.any_wants_grad({a, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ai = a.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      if (tp.wants_grad(ai)) {
        Tensor<T>& ga = tp.grad_buf(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.wants_grad(bi)) {
        Tensor<T>& gb = tp.grad_buf(bi);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  bool req = t.any_wants_grad({a, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ai = a.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& av = tp.val_of(ai);
      const Tensor<T>& bv2 = tp.val_of(bi);
      if (tp.wants_grad(ai)) {
        Tensor<T>& ga = tp.grad_buf(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (tp.wants_grad(bi)) {
        Tensor<T>& gb = tp.grad_buf(bi);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> scale(Var<T> a, T c) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  bool req = t.wants_grad(a.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ai = a.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      Tensor<T>& ga = tp.grad_buf(ai);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }
  return {&t, id};
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(as) + " * " +
                                shape_str(bs));
  const int64_t m = as[0], k = as[1], n = bs[1];
  Tape<T>& t = *a.tape;
  Tensor<T> out({m, n});
  detail::matmul_nn(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  bool req = t.any_wants_grad({a, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ai = a.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      if (tp.wants_grad(ai))
        detail::matmul_nt(g.data(), tp.val_of(bi).data(), tp.grad_buf(ai).data(), m, n, k, true);
      if (tp.wants_grad(bi))
        detail::matmul_tn(tp.val_of(ai).data(), g.data(), tp.grad_buf(bi).data(), m, k, n, true);
    });
  }
  return {&t, id};
}

// a[m,k] * b[n,k]^T -> [m,n]
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[1])
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  const int64_t m = as[0], k = as[1], n = bs[0];
  Tape<T>& t = *a.tape;
  Tensor<T> out({m, n});
  detail::matmul_nt(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  bool req = t.any_wants_grad({a, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ai = a.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      if (tp.wants_grad(ai))
        detail::matmul_nn(g.data(), tp.val_of(bi).data(), tp.grad_buf(ai).data(), m, n, k, true);
      if (tp.wants_grad(bi))
        detail::matmul_tn(g.data(), tp.val_of(ai).data(), tp.grad_buf(bi).data(), m, n, k, true);
    });
  }
  return {&t, id};
}

// x[R,C] + b[C] broadcast over rows
template <class T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
  const Shape& xs = x.shape();
  if (xs.size() != 2 || b.shape() != Shape{xs[1]})
    throw std::invalid_argument("add_rowvec: incompatible shapes");
  const int64_t r = xs[0], c = xs[1];
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  const Tensor<T>& bv = b.value();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  bool req = t.any_wants_grad({x, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      if (tp.wants_grad(xi)) {
        Tensor<T>& gx = tp.grad_buf(xi);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (tp.wants_grad(bi)) {
        Tensor<T>& gb = tp.grad_buf(bi);
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add_rowvec(matmul(x, w), b);
}

// exact erf form: x * Phi(x)
template <class T>
Var<T> gelu(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= detail::norm_cdf(out[i]);
  bool req = t.wants_grad(x.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& xv = tp.val_of(xi);
      Tensor<T>& gx = tp.grad_buf(xi);
      for (int64_t i = 0; i < g.size(); ++i) {
        const T v = xv[i];
        gx[i] += g[i] * (detail::norm_cdf(v) + v * detail::norm_pdf(v));
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(out[i]);
  bool req = t.wants_grad(x.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& s = tp.val_of(id);
      Tensor<T>& gx = tp.grad_buf(xi);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (T(1) - s[i]);
    });
  }
  return {&t, id};
}

template <class T>
Var<T> softmax_rows(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw std::invalid_argument("softmax_rows: rank-2 input required");
  const int64_t r = xs[0], c = xs[1];
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (int64_t i = 0; i < r; ++i) {
    T* row = out.data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T z = T(0);
    for (int64_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const T inv = T(1) / z;
    for (int64_t j = 0; j < c; ++j) row[j] *= inv;
  }
  bool req = t.wants_grad(x.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& s = tp.val_of(id);
      Tensor<T>& gx = tp.grad_buf(xi);
      for (int64_t i = 0; i < r; ++i) {
        const T* srow = s.data() + i * c;
        const T* grow = g.data() + i * c;
        T dot = T(0);
        for (int64_t j = 0; j < c; ++j) dot += srow[j] * grow[j];
        T* gxrow = gx.data() + i * c;
        for (int64_t j = 0; j < c; ++j) gxrow[j] += srow[j] * (grow[j] - dot);
      }
    });
  }
  return {&t, id};
}

// Normalizes over the trailing axis, then affine. eps keeps the zero-variance
// case finite.
template <class T>
Var<T> layernorm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw std::invalid_argument("layernorm: empty shape");
  const int64_t c = xs.back();
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c})
    throw std::invalid_argument("layernorm: gain/bias must match trailing extent");
  const int64_t rows = numel(xs) / c;
  Tape<T>& t = *x.tape;
  Tensor<T> out(xs);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  for (int64_t i = 0; i < rows; ++i) {
    const T* row = xv.data() + i * c;
    T mean = T(0);
    for (int64_t j = 0; j < c; ++j) mean += row[j];
    mean /= T(c);
    T var = T(0);
    for (int64_t j = 0; j < c; ++j) {
      const T d = row[j] - mean;
      var += d * d;
    }
    var /= T(c);
    const T rstd = T(1) / std::sqrt(var + eps);
    T* orow = out.data() + i * c;
    for (int64_t j = 0; j < c; ++j) orow[j] = gv[j] * ((row[j] - mean) * rstd) + bv[j];
  }
  bool req = t.any_wants_grad({x, gain, bias});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id, gi = gain.id, bi = bias.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& xv2 = tp.val_of(xi);
      const Tensor<T>& gv2 = tp.val_of(gi);
      const bool wx = tp.wants_grad(xi), wg = tp.wants_grad(gi), wb = tp.wants_grad(bi);
      for (int64_t i = 0; i < rows; ++i) {
        const T* row = xv2.data() + i * c;
        const T* grow = g.data() + i * c;
        T mean = T(0);
        for (int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= T(c);
        T var = T(0);
        for (int64_t j = 0; j < c; ++j) {
          const T d = row[j] - mean;
          var += d * d;
        }
        var /= T(c);
        const T rstd = T(1) / std::sqrt(var + eps);
        if (wg) {
          Tensor<T>& gg = tp.grad_buf(gi);
          for (int64_t j = 0; j < c; ++j) gg[j] += grow[j] * ((row[j] - mean) * rstd);
        }
        if (wb) {
          Tensor<T>& gb = tp.grad_buf(bi);
          for (int64_t j = 0; j < c; ++j) gb[j] += grow[j];
        }
        if (wx) {
          Tensor<T>& gx = tp.grad_buf(xi);
          T* gxrow = gx.data() + i * c;
          T sum_gy = T(0), sum_gyx = T(0);
          for (int64_t j = 0; j < c; ++j) {
            const T gy = grow[j] * gv2[j];
            const T xh = (row[j] - mean) * rstd;
            sum_gy += gy;
            sum_gyx += gy * xh;
          }
          const T inv_c = T(1) / T(c);
          for (int64_t j = 0; j < c; ++j) {
            const T gy = grow[j] * gv2[j];
            const T xh = (row[j] - mean) * rstd;
            gxrow[j] += rstd * (gy - inv_c * sum_gy - xh * inv_c * sum_gyx);
          }
        }
      }
    });
  }
  return {&t, id};
}

// Same-spatial-size convolution: odd square kernel, zero padding, stride 1.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4) throw std::invalid_argument("conv2d: rank mismatch");
  const int64_t ci = xs[0], h = xs[1], wd = xs[2];
  const int64_t co = ws[0], k = ws[2];
  if (ws[1] != ci) throw std::invalid_argument("conv2d: channel mismatch");
  if (ws[3] != k || k % 2 == 0) throw std::invalid_argument("conv2d: odd square kernel required");
  if (b.shape() != Shape{co}) throw std::invalid_argument("conv2d: bias extent mismatch");
  const int64_t r = (k - 1) / 2;
  Tape<T>& t = *x.tape;
  Tensor<T> out({co, h, wd});
  {
    const T* xp = x.value().data();
    const T* wp = w.value().data();
    const T* bp = b.value().data();
    for (int64_t o = 0; o < co; ++o) {
      T* oplane = out.data() + o * h * wd;
      const T bb = bp[o];
      for (int64_t i = 0; i < h * wd; ++i) oplane[i] = bb;
      for (int64_t c = 0; c < ci; ++c) {
        const T* xplane = xp + c * h * wd;
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) {
            const T wv = wp[((o * ci + c) * k + ky) * k + kx];
            if (wv == T(0)) continue;
            const int64_t dy = ky - r, dx = kx - r;
            const int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min<int64_t>(h, h - dy);
            const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(wd, wd - dx);
            for (int64_t y = y0; y < y1; ++y) {
              T* orow = oplane + y * wd;
              const T* xrow = xplane + (y + dy) * wd + dx;
              for (int64_t xx = x0; xx < x1; ++xx) orow[xx] += wv * xrow[xx];
            }
          }
      }
    }
  }
  bool req = t.any_wants_grad({x, w, b});
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id, wi = w.id, bi = b.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const T* gp = g.data();
      if (tp.wants_grad(bi)) {
        Tensor<T>& gb = tp.grad_buf(bi);
        for (int64_t o = 0; o < co; ++o) {
          T s = T(0);
          const T* gplane = gp + o * h * wd;
          for (int64_t i = 0; i < h * wd; ++i) s += gplane[i];
          gb[o] += s;
        }
      }
      if (tp.wants_grad(xi)) {
        Tensor<T>& gx = tp.grad_buf(xi);
        const T* wp = tp.val_of(wi).data();
        for (int64_t o = 0; o < co; ++o) {
          const T* gplane = gp + o * h * wd;
          for (int64_t c = 0; c < ci; ++c) {
            T* gxplane = gx.data() + c * h * wd;
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const T wv = wp[((o * ci + c) * k + ky) * k + kx];
                if (wv == T(0)) continue;
                const int64_t dy = ky - r, dx = kx - r;
                const int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min<int64_t>(h, h - dy);
                const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(wd, wd - dx);
                for (int64_t y = y0; y < y1; ++y) {
                  const T* grow = gplane + y * wd;
                  T* gxrow = gxplane + (y + dy) * wd + dx;
                  for (int64_t xx = x0; xx < x1; ++xx) gxrow[xx] += wv * grow[xx];
                }
              }
          }
        }
      }
      if (tp.wants_grad(wi)) {
        Tensor<T>& gw = tp.grad_buf(wi);
        const T* xp = tp.val_of(xi).data();
        for (int64_t o = 0; o < co; ++o) {
          const T* gplane = gp + o * h * wd;
          for (int64_t c = 0; c < ci; ++c) {
            const T* xplane = xp + c * h * wd;
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t dy = ky - r, dx = kx - r;
                const int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min<int64_t>(h, h - dy);
                const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(wd, wd - dx);
                T s = T(0);
                for (int64_t y = y0; y < y1; ++y) {
                  const T* grow = gplane + y * wd;
                  const T* xrow = xplane + (y + dy) * wd + dx;
                  for (int64_t xx = x0; xx < x1; ++xx) s += grow[xx] * xrow[xx];
                }
                gw[((o * ci + c) * k + ky) * k + kx] += s;
              }
          }
        }
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = *x.tape;
  T s = T(0);
  const Tensor<T>& xv = x.value();
  for (int64_t i = 0; i < xv.size(); ++i) s += xv[i];
  bool req = t.wants_grad(x.id);
  int32_t id = t.new_node(Tensor<T>::scalar(s), req);
  if (req) {
    int32_t xi = x.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const T g = tp.grad_buf(id)[0];
      Tensor<T>& gx = tp.grad_buf(xi);
      for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return {&t, id};
}

template <class T>
Var<T> mean(Var<T> x) {
  const int64_t n = x.value().size();
  return scale(sum(x), T(1) / T(n));
}

template <class T>
Var<T> reshape(Var<T> x, Shape s) {
  if (numel(s) != x.value().size()) throw std::invalid_argument("reshape: numel mismatch");
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  Shape old = out.shape;
  out.shape = std::move(s);
  bool req = t.wants_grad(x.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      Tensor<T>& gx = tp.grad_buf(xi);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return {&t, id};
}

// Concatenation along axis 0; trailing extents must agree.
template <class T>
Var<T> concat0(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: empty input list");
  Tape<T>& t = *parts[0].tape;
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  int64_t rows = 0;
  bool req = false;
  for (const auto& p : parts) {
    Shape ptail(p.shape().begin() + 1, p.shape().end());
    if (ptail != tail) throw std::invalid_argument("concat0: trailing extents differ");
    rows += p.shape()[0];
    req = req || t.wants_grad(p.id);
  }
  Shape os = tail;
  os.insert(os.begin(), rows);
  Tensor<T> out(os);
  int64_t off = 0;
  std::vector<int32_t> ids;
  std::vector<int64_t> sizes;
  for (const auto& p : parts) {
    const Tensor<T>& pv = p.value();
    std::copy(pv.v.begin(), pv.v.end(), out.v.begin() + off);
    off += pv.size();
    ids.push_back(p.id);
    sizes.push_back(pv.size());
  }
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      int64_t o = 0;
      for (size_t p = 0; p < ids.size(); ++p) {
        if (tp.wants_grad(ids[p])) {
          Tensor<T>& gp = tp.grad_buf(ids[p]);
          for (int64_t i = 0; i < sizes[p]; ++i) gp[i] += g[o + i];
        }
        o += sizes[p];
      }
    });
  }
  return {&t, id};
}

// out[g,:] = x[idx[g],:]; backward scatter-adds.
template <class T>
Var<T> gather_rows(Var<T> x, std::vector<int64_t> idx) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw std::invalid_argument("gather_rows: rank-2 input required");
  const int64_t c = xs[1];
  for (int64_t i : idx)
    if (i < 0 || i >= xs[0]) throw std::invalid_argument("gather_rows: index out of range");
  Tape<T>& t = *x.tape;
  Tensor<T> out({static_cast<int64_t>(idx.size()), c});
  const Tensor<T>& xv = x.value();
  for (size_t gg = 0; gg < idx.size(); ++gg)
    std::copy_n(xv.data() + idx[gg] * c, c, out.data() + static_cast<int64_t>(gg) * c);
  bool req = t.wants_grad(x.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t xi = x.id;
    t.set_back(id, [=, ix = std::move(idx)](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      Tensor<T>& gx = tp.grad_buf(xi);
      for (size_t gg = 0; gg < ix.size(); ++gg) {
        const T* grow = g.data() + static_cast<int64_t>(gg) * c;
        T* xrow = gx.data() + ix[gg] * c;
        for (int64_t j = 0; j < c; ++j) xrow[j] += grow[j];
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> slice_rows(Var<T> x, int64_t begin, int64_t end) {
  std::vector<int64_t> idx;
  idx.reserve(static_cast<size_t>(end - begin));
  for (int64_t i = begin; i < end; ++i) idx.push_back(i);
  return gather_rows(x, std::move(idx));
}

// Elementwise Huber-style penalty on a residual.
template <class T>
Var<T> smooth_l1(Var<T> d, T delta) {
  Tape<T>& t = *d.tape;
  Tensor<T> out = d.value();
  for (int64_t i = 0; i < out.size(); ++i) {
    const T a = std::abs(out[i]);
    out[i] = a <= delta ? T(0.5) * out[i] * out[i] / delta : a - T(0.5) * delta;
  }
  bool req = t.wants_grad(d.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t di = d.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& dv = tp.val_of(di);
      Tensor<T>& gd = tp.grad_buf(di);
      for (int64_t i = 0; i < g.size(); ++i) {
        const T v = dv[i];
        const T dd = v > delta ? T(1) : (v < -delta ? T(-1) : v / delta);
        gd[i] += g[i] * dd;
      }
    });
  }
  return {&t, id};
}

// Pairwise reduction keeps the average exact when all inputs are identical.
template <class T>
Var<T> pairwise_mean(std::vector<Var<T>> vs) {
  if (vs.empty()) throw std::invalid_argument("pairwise_mean: empty input");
  while (vs.size() > 1) {
    std::vector<Var<T>> next;
    for (size_t i = 0; i + 1 < vs.size(); i += 2)
      next.push_back(scale(add(vs[i], vs[i + 1]), T(0.5)));
    if (vs.size() % 2 == 1) next.push_back(vs.back());
    vs = std::move(next);
  }
  return vs[0];
}

// Elementwise sigmoid focal terms from logits against {0,1} targets.
// Internally works on z = y ? logit : -logit so log p_t stays stable.
template <class T>
Var<T> focal_bce(Var<T> logits, const Tensor<T>& targets01, T alpha, T gamma) {
  if (logits.shape() != targets01.shape)
    throw std::invalid_argument("focal_bce: target shape mismatch");
  Tape<T>& t = *logits.tape;
  const Tensor<T>& lv = logits.value();
  Tensor<T> out(lv.shape);
  for (int64_t i = 0; i < lv.size(); ++i) {
    const bool pos = targets01[i] > T(0.5);
    const T z = pos ? lv[i] : -lv[i];
    const T at = pos ? alpha : T(1) - alpha;
    const T q = detail::stable_sigmoid(-z);           // 1 - p_t
    const T sp = detail::softplus(-z);                // -log p_t
    out[i] = at * std::pow(q, gamma) * sp;
  }
  bool req = t.wants_grad(logits.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t li = logits.id;
    t.set_back(id, [=, tgt = targets01](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& lv2 = tp.val_of(li);
      Tensor<T>& gl = tp.grad_buf(li);
      for (int64_t i = 0; i < g.size(); ++i) {
        const bool pos = tgt[i] > T(0.5);
        const T z = pos ? lv2[i] : -lv2[i];
        const T at = pos ? alpha : T(1) - alpha;
        const T q = detail::stable_sigmoid(-z);
        const T sp = detail::softplus(-z);
        // d/dz [at * q^gamma * sp] = -at * q^gamma * (gamma*(1-q)*sp + q)
        const T dz = -at * std::pow(q, gamma) * (gamma * (T(1) - q) * sp + q);
        gl[i] += g[i] * (pos ? dz : -dz);
      }
    });
  }
  return {&t, id};
}

}  // namespace mapfuse
