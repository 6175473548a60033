#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mapfuse/ops.hpp"
#include "mapfuse/rng.hpp"
#include "mapfuse/tape.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

enum class SsmMode { kRecurrence, kScan, kKernel };

inline const char* to_string(SsmMode m) {
  switch (m) {
    case SsmMode::kRecurrence: return "recurrence";
    case SsmMode::kScan: return "scan";
    case SsmMode::kKernel: return "kernel";
  }
  return "?";
}

// ---- first-order linear recurrence x_k = a_k * x_{k-1} + b_k --------------

// Reference left fold, complex coefficients as (re, im) pairs. x_0 = 0, so
// the solution overwrites b.
template <class T>
void linear_recurrence_fold(const T* a_re, const T* a_im, T* b_re, T* b_im, int64_t len) {
  T xr = T(0), xi = T(0);
  for (int64_t k = 0; k < len; ++k) {
    const T nr = a_re[k] * xr - a_im[k] * xi + b_re[k];
    const T ni = a_re[k] * xi + a_im[k] * xr + b_im[k];
    xr = nr;
    xi = ni;
    b_re[k] = xr;
    b_im[k] = xi;
  }
}

namespace detail {

// Work-efficient in-place inclusive sweep over an associative combine.
// combine(i, j) must implement f[j] = f[i] (then) f[j].
template <class Combine>
void blelloch_inclusive(int64_t len, Combine&& combine) {
  if (len <= 1) return;
  int64_t d = 1;
  for (; d < len; d *= 2)
    for (int64_t i = 2 * d - 1; i < len; i += 2 * d) combine(i - d, i);
  for (d /= 2; d >= 1; d /= 2)
    for (int64_t i = 3 * d - 1; i < len; i += 2 * d) combine(i - d, i);
}

}  // namespace detail

// Log-depth prefix solution of the same recurrence via the associative rule
// (a1,b1)∘(a2,b2) = (a1*a2, a2*b1 + b2). Clobbers a with prefix coefficient
// products; leaves the solution in b.
template <class T>
void parallel_linear_scan(T* a_re, T* a_im, T* b_re, T* b_im, int64_t len) {
  detail::blelloch_inclusive(len, [&](int64_t l, int64_t r) {
    const T ar = a_re[r], ai = a_im[r];
    const T nbr = ar * b_re[l] - ai * b_im[l] + b_re[r];
    const T nbi = ar * b_im[l] + ai * b_re[l] + b_im[r];
    b_re[r] = nbr;
    b_im[r] = nbi;
    const T nar = ar * a_re[l] - ai * a_im[l];
    const T nai = ar * a_im[l] + ai * a_re[l];
    a_re[r] = nar;
    a_im[r] = nai;
  });
}

// Real-coefficient convenience overloads.
template <class T>
void linear_recurrence_fold(const T* a, T* b, int64_t len) {
  T x = T(0);
  for (int64_t k = 0; k < len; ++k) {
    x = a[k] * x + b[k];
    b[k] = x;
  }
}

template <class T>
void parallel_linear_scan(T* a, T* b, int64_t len) {
  detail::blelloch_inclusive(len, [&](int64_t l, int64_t r) {
    b[r] = a[r] * b[l] + b[r];
    a[r] = a[r] * a[l];
  });
}

// ---- diagonal state space layer -------------------------------------------

// Per-channel SISO diagonal SSM. The state matrix is diag(lambda) with
// lambda = -exp(r) + i*lam_im, discretized with step exp(log_dt):
//   A = exp(dt*lambda), B = (A - 1)/lambda
//   x_k = A (.) x_{k-1} + B u_k,  y_k = Re(sum_j w_j x_kj) + d_skip u_k
template <class T>
struct DssParams {
  Tensor<T> r;       // [ch, n], lambda_re = -exp(r)
  Tensor<T> lam_im;  // [ch, n]
  Tensor<T> log_dt;  // [ch]
  Tensor<T> w_re;    // [ch, n]
  Tensor<T> w_im;    // [ch, n]
  Tensor<T> d_skip;  // [ch]

  int64_t channels() const { return r.shape[0]; }
  int64_t state_size() const { return r.shape[1]; }

  static DssParams init(int64_t ch, int64_t n, Rng& rng) {
    DssParams p;
    p.r = Tensor<T>({ch, n});
    p.lam_im = Tensor<T>({ch, n});
    p.log_dt = Tensor<T>({ch});
    p.w_re = Tensor<T>({ch, n});
    p.w_im = Tensor<T>({ch, n});
    p.d_skip = Tensor<T>::full({ch}, T(1));
    const T wstd = T(1) / std::sqrt(T(n));
    for (int64_t h = 0; h < ch; ++h) {
      p.log_dt[h] = T(rng.uniform(std::log(0.001), std::log(0.1)));
      for (int64_t j = 0; j < n; ++j) {
        p.r.at(h, j) = T(std::log(rng.uniform(0.5, 1.5)));
        p.lam_im.at(h, j) = T(M_PI) * T(j);
        p.w_re.at(h, j) = T(rng.normal()) * wstd;
        p.w_im.at(h, j) = T(rng.normal()) * wstd;
      }
    }
    return p;
  }
};

template <class T>
struct DssVars {
  Var<T> r, lam_im, log_dt, w_re, w_im, d_skip;
};

namespace detail {

// Discretized per-state coefficients for one channel.
template <class T>
struct DssCoeffs {
  std::vector<T> a_re, a_im;  // exp(dt*lambda)
  std::vector<T> b_re, b_im;  // (A-1)/lambda
  std::vector<T> l_re, l_im;  // lambda
  T dt;
};

template <class T>
DssCoeffs<T> dss_coeffs(const Tensor<T>& r, const Tensor<T>& lam_im, const Tensor<T>& log_dt,
                        int64_t h) {
  const int64_t n = r.shape[1];
  DssCoeffs<T> c;
  c.a_re.resize(n);
  c.a_im.resize(n);
  c.b_re.resize(n);
  c.b_im.resize(n);
  c.l_re.resize(n);
  c.l_im.resize(n);
  c.dt = std::exp(log_dt[h]);
  for (int64_t j = 0; j < n; ++j) {
    const T lre = -std::exp(r.at(h, j));
    const T lim = lam_im.at(h, j);
    const T mag = std::exp(c.dt * lre);
    const T are = mag * std::cos(c.dt * lim);
    const T aim = mag * std::sin(c.dt * lim);
    const T den = lre * lre + lim * lim;
    c.a_re[j] = are;
    c.a_im[j] = aim;
    c.b_re[j] = ((are - T(1)) * lre + aim * lim) / den;
    c.b_im[j] = (aim * lre - (are - T(1)) * lim) / den;
    c.l_re[j] = lre;
    c.l_im[j] = lim;
  }
  return c;
}

}  // namespace detail

// Applies the DSS layer to a sequence u[L, ch]. All three modes produce the
// same output up to floating-point evaluation order. Backward runs the
// adjoint recurrence using states saved during forward.
template <class T>
Var<T> dss_apply(Var<T> u, const DssVars<T>& p, SsmMode mode = SsmMode::kRecurrence) {
  const Shape& us = u.shape();
  if (us.size() != 2) throw std::invalid_argument("dss_apply: rank-2 input required");
  const int64_t len = us[0];
  const int64_t ch = p.r.shape()[0];
  const int64_t n = p.r.shape()[1];
  if (len < 1) throw std::invalid_argument("dss_apply: empty sequence");
  if (us[1] != ch) throw std::invalid_argument("dss_apply: channel mismatch");

  Tape<T>& t = *u.tape;
  const Tensor<T>& uv = u.value();
  const Tensor<T>& rv = p.r.value();
  const Tensor<T>& liv = p.lam_im.value();
  const Tensor<T>& ldv = p.log_dt.value();
  const Tensor<T>& wrv = p.w_re.value();
  const Tensor<T>& wiv = p.w_im.value();
  const Tensor<T>& dv = p.d_skip.value();

  const bool req =
      t.any_wants_grad({u, p.r, p.lam_im, p.log_dt, p.w_re, p.w_im, p.d_skip});

  Tensor<T> out({len, ch});
  // saved states x[k] per channel, layout [ch][L*n], only kept when needed
  auto x_re = std::make_shared<std::vector<T>>();
  auto x_im = std::make_shared<std::vector<T>>();
  const bool save_states = req;
  if (save_states) {
    x_re->assign(static_cast<size_t>(ch * len * n), T(0));
    x_im->assign(static_cast<size_t>(ch * len * n), T(0));
  }

  std::vector<T> sr(n), si(n), tmp_ar, tmp_ai;
  for (int64_t h = 0; h < ch; ++h) {
    auto c = detail::dss_coeffs(rv, liv, ldv, h);
    const T dsk = dv[h];
    const T* wr = wrv.data() + h * n;
    const T* wi = wiv.data() + h * n;

    auto emit = [&](int64_t k, const T* xr, const T* xi) {
      T y = T(0);
      for (int64_t j = 0; j < n; ++j) y += wr[j] * xr[j] - wi[j] * xi[j];
      out[k * ch + h] = y + dsk * uv[k * ch + h];
    };

    if (mode == SsmMode::kRecurrence || (mode == SsmMode::kKernel && save_states)) {
      std::fill(sr.begin(), sr.end(), T(0));
      std::fill(si.begin(), si.end(), T(0));
      for (int64_t k = 0; k < len; ++k) {
        const T uk = uv[k * ch + h];
        for (int64_t j = 0; j < n; ++j) {
          const T nr = c.a_re[j] * sr[j] - c.a_im[j] * si[j] + c.b_re[j] * uk;
          const T ni = c.a_re[j] * si[j] + c.a_im[j] * sr[j] + c.b_im[j] * uk;
          sr[j] = nr;
          si[j] = ni;
        }
        if (save_states) {
          std::copy(sr.begin(), sr.end(), x_re->begin() + (h * len + k) * n);
          std::copy(si.begin(), si.end(), x_im->begin() + (h * len + k) * n);
        }
        if (mode == SsmMode::kRecurrence) emit(k, sr.data(), si.data());
      }
    }

    if (mode == SsmMode::kScan) {
      // per-state scans along the sequence
      std::vector<T> br(len), bi(len);
      tmp_ar.resize(len);
      tmp_ai.resize(len);
      std::vector<T> yacc(len, T(0));
      for (int64_t j = 0; j < n; ++j) {
        for (int64_t k = 0; k < len; ++k) {
          const T uk = uv[k * ch + h];
          tmp_ar[k] = c.a_re[j];
          tmp_ai[k] = c.a_im[j];
          br[k] = c.b_re[j] * uk;
          bi[k] = c.b_im[j] * uk;
        }
        parallel_linear_scan(tmp_ar.data(), tmp_ai.data(), br.data(), bi.data(), len);
        for (int64_t k = 0; k < len; ++k) yacc[k] += wr[j] * br[k] - wi[j] * bi[k];
        if (save_states)
          for (int64_t k = 0; k < len; ++k) {
            (*x_re)[(h * len + k) * n + j] = br[k];
            (*x_im)[(h * len + k) * n + j] = bi[k];
          }
      }
      for (int64_t k = 0; k < len; ++k) out[k * ch + h] = yacc[k] + dsk * uv[k * ch + h];
    }

    if (mode == SsmMode::kKernel) {
      // materialize K_l = Re(sum_j w_j B_j A^l) and convolve causally
      std::vector<T> kern(len);
      std::vector<T> pr(n), pi(n);  // A^l running powers
      for (int64_t j = 0; j < n; ++j) {
        pr[j] = T(1);
        pi[j] = T(0);
      }
      for (int64_t l = 0; l < len; ++l) {
        T kl = T(0);
        for (int64_t j = 0; j < n; ++j) {
          const T cr = c.b_re[j] * pr[j] - c.b_im[j] * pi[j];
          const T cim = c.b_re[j] * pi[j] + c.b_im[j] * pr[j];
          kl += wr[j] * cr - wi[j] * cim;
          const T npr = c.a_re[j] * pr[j] - c.a_im[j] * pi[j];
          const T npi = c.a_re[j] * pi[j] + c.a_im[j] * pr[j];
          pr[j] = npr;
          pi[j] = npi;
        }
        kern[l] = kl;
      }
      for (int64_t k = 0; k < len; ++k) {
        T y = T(0);
        for (int64_t m = 0; m <= k; ++m) y += kern[k - m] * uv[m * ch + h];
        out[k * ch + h] = y + dsk * uv[k * ch + h];
      }
    }
  }

  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t ui = u.id, ri = p.r.id, li = p.lam_im.id, di = p.log_dt.id;
    int32_t wri = p.w_re.id, wii = p.w_im.id, ski = p.d_skip.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      const Tensor<T>& uv2 = tp.val_of(ui);
      const Tensor<T>& rv2 = tp.val_of(ri);
      const Tensor<T>& liv2 = tp.val_of(li);
      const Tensor<T>& ldv2 = tp.val_of(di);
      const Tensor<T>& wrv2 = tp.val_of(wri);
      const Tensor<T>& wiv2 = tp.val_of(wii);
      const Tensor<T>& dv2 = tp.val_of(ski);
      const bool wu = tp.wants_grad(ui);

      std::vector<T> xbar_re(n), xbar_im(n);
      std::vector<T> ga_re(n), ga_im(n), gb_re(n), gb_im(n), gw_re(n), gw_im(n);

      for (int64_t h = 0; h < ch; ++h) {
        auto c = detail::dss_coeffs(rv2, liv2, ldv2, h);
        const T* wr = wrv2.data() + h * n;
        const T* wi = wiv2.data() + h * n;
        const T dsk = dv2[h];
        std::fill(xbar_re.begin(), xbar_re.end(), T(0));
        std::fill(xbar_im.begin(), xbar_im.end(), T(0));
        std::fill(ga_re.begin(), ga_re.end(), T(0));
        std::fill(ga_im.begin(), ga_im.end(), T(0));
        std::fill(gb_re.begin(), gb_re.end(), T(0));
        std::fill(gb_im.begin(), gb_im.end(), T(0));
        std::fill(gw_re.begin(), gw_re.end(), T(0));
        std::fill(gw_im.begin(), gw_im.end(), T(0));
        T gd = T(0);

        for (int64_t k = len - 1; k >= 0; --k) {
          const T gk = g[k * ch + h];
          const T uk = uv2[k * ch + h];
          gd += gk * uk;
          const T* xr = x_re->data() + (h * len + k) * n;
          const T* xi = x_im->data() + (h * len + k) * n;
          const T* xr_prev = k > 0 ? x_re->data() + (h * len + k - 1) * n : nullptr;
          const T* xi_prev = k > 0 ? x_im->data() + (h * len + k - 1) * n : nullptr;
          T gu = dsk * gk;
          for (int64_t j = 0; j < n; ++j) {
            // xbar_k = g_k conj(w_j) + conj(A_j) xbar_{k+1}
            const T nbr = gk * wr[j] + c.a_re[j] * xbar_re[j] + c.a_im[j] * xbar_im[j];
            const T nbi = -gk * wi[j] + c.a_re[j] * xbar_im[j] - c.a_im[j] * xbar_re[j];
            xbar_re[j] = nbr;
            xbar_im[j] = nbi;
            gw_re[j] += gk * xr[j];
            gw_im[j] -= gk * xi[j];
            gb_re[j] += nbr * uk;
            gb_im[j] += nbi * uk;
            if (k > 0) {
              ga_re[j] += nbr * xr_prev[j] + nbi * xi_prev[j];
              ga_im[j] += nbi * xr_prev[j] - nbr * xi_prev[j];
            }
            gu += c.b_re[j] * nbr + c.b_im[j] * nbi;  // Re(conj(B) xbar)
          }
          if (wu) tp.grad_buf(ui)[k * ch + h] += gu;
        }

        // chain to lambda, dt, r, lam_im
        T g_dt = T(0);
        Tensor<T>* gr = tp.wants_grad(ri) ? &tp.grad_buf(ri) : nullptr;
        Tensor<T>* gli = tp.wants_grad(li) ? &tp.grad_buf(li) : nullptr;
        for (int64_t j = 0; j < n; ++j) {
          const T are = c.a_re[j], aim = c.a_im[j];
          const T lre = c.l_re[j], lim = c.l_im[j];
          const T den = lre * lre + lim * lim;
          // dA/dlambda = dt*A ; dB/dlambda = (dt*A - B)/lambda
          const T dA_re = c.dt * are, dA_im = c.dt * aim;
          const T num_re = dA_re - c.b_re[j], num_im = dA_im - c.b_im[j];
          const T dB_re = (num_re * lre + num_im * lim) / den;
          const T dB_im = (num_im * lre - num_re * lim) / den;
          // grad_lambda = conj(dA/dl)*gA + conj(dB/dl)*gB
          const T gl_re = dA_re * ga_re[j] + dA_im * ga_im[j] + dB_re * gb_re[j] +
                          dB_im * gb_im[j];
          const T gl_im = dA_re * ga_im[j] - dA_im * ga_re[j] + dB_re * gb_im[j] -
                          dB_im * gb_re[j];
          // dA/ddt = lambda*A ; dB/ddt = A
          const T dAdt_re = lre * are - lim * aim;
          const T dAdt_im = lre * aim + lim * are;
          g_dt += dAdt_re * ga_re[j] + dAdt_im * ga_im[j] + are * gb_re[j] + aim * gb_im[j];
          if (gr) gr->at(h, j) += lre * gl_re;  // dlambda_re/dr = -exp(r) = lre
          if (gli) gli->at(h, j) += gl_im;
        }
        if (tp.wants_grad(di)) tp.grad_buf(di)[h] += c.dt * g_dt;
        if (tp.wants_grad(wri))
          for (int64_t j = 0; j < n; ++j) tp.grad_buf(wri).at(h, j) += gw_re[j];
        if (tp.wants_grad(wii))
          for (int64_t j = 0; j < n; ++j) tp.grad_buf(wii).at(h, j) += gw_im[j];
        if (tp.wants_grad(ski)) tp.grad_buf(ski)[h] += gd;
      }
    });
  }
  return {&t, id};
}

// ---- gated state space block ----------------------------------------------

// Four projections around the DSS layer with multiplicative gating and a
// residual connection:
//   V = GELU(S Wv); U = GELU(S Wu); Y = DSS(U); U' = Y Wy; O = (U' (.) V) Wo + S
template <class T>
struct GssParams {
  Tensor<T> w_v;  // [C, beta*C]
  Tensor<T> w_u;  // [C, alpha*C]
  Tensor<T> w_y;  // [alpha*C, beta*C]
  Tensor<T> w_o;  // [beta*C, C]
  DssParams<T> dss;

  static GssParams init(int64_t c, double alpha, double beta, int64_t state_size, Rng& rng) {
    const int64_t ac = static_cast<int64_t>(std::llround(alpha * static_cast<double>(c)));
    const int64_t bc = static_cast<int64_t>(std::llround(beta * static_cast<double>(c)));
    if (ac <= 0 || bc <= 0) throw std::invalid_argument("gss: alpha*C and beta*C must be >= 1");
    GssParams p;
    auto randn = [&rng](Shape s, double std) {
      Tensor<T> t(std::move(s));
      for (int64_t i = 0; i < t.size(); ++i) t[i] = T(rng.normal() * std);
      return t;
    };
    p.w_v = randn({c, bc}, 1.0 / std::sqrt(double(c)));
    p.w_u = randn({c, ac}, 1.0 / std::sqrt(double(c)));
    p.w_y = randn({ac, bc}, 1.0 / std::sqrt(double(ac)));
    p.w_o = randn({bc, c}, 1.0 / std::sqrt(double(bc)));
    p.dss = DssParams<T>::init(ac, state_size, rng);
    return p;
  }
};

template <class T>
struct GssVars {
  Var<T> w_v, w_u, w_y, w_o;
  DssVars<T> dss;
};

template <class T>
Var<T> gss_block(Var<T> s, const GssVars<T>& p, SsmMode mode = SsmMode::kRecurrence) {
  const Shape& ss = s.shape();
  if (ss.size() != 2 || ss[1] != p.w_v.shape()[0])
    throw std::invalid_argument("gss_block: input width mismatch");
  Var<T> v = gelu(matmul(s, p.w_v));
  Var<T> u = gelu(matmul(s, p.w_u));
  Var<T> y = dss_apply(u, p.dss, mode);
  Var<T> up = matmul(y, p.w_y);
  Var<T> o = matmul(mul(up, v), p.w_o);
  return add(o, s);
}

}  // namespace mapfuse
