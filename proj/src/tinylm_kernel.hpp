#pragma once

// Forward and backward passes of the toy transformer, templated on the
// scalar type so the same code runs in float for training and in double for
// finite-difference checks. All reductions run in a fixed serial order.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "reflex/tinylm.hpp"

namespace reflex::tinylm::detail {

enum LayerSlot : std::size_t {
  kLn1G, kLn1B, kWq, kWk, kWv, kWo, kBo, kLn2G, kLn2B, kW1, kB1, kW2, kB2, kSlots
};
enum FinalSlot : std::size_t { kLnfG, kLnfB, kUnembed, kUnembedB };

inline constexpr std::size_t kTokEmb = 0;
inline constexpr std::size_t kPosEmb = 1;
inline constexpr double kLnEps = 1e-5;

inline std::size_t layer_index(std::size_t layer, std::size_t slot) {
  return 2 + layer * kSlots + slot;
}
inline std::size_t final_index(std::size_t n_layers, std::size_t slot) {
  return 2 + n_layers * kSlots + slot;
}

template <class S>
struct InjectionT {
  std::size_t layer = 0;
  const float* direction = nullptr;
  S multiplier = 0;
  std::size_t from_position = 0;
};

template <class S>
struct LayerCache {
  std::vector<S> xhat1, rstd1, a, q, k, v, probs, o, x1, xhat2, rstd2, c, u, gz, y;
};

template <class S>
struct Cache {
  std::size_t T = 0;
  std::vector<S> x0;
  std::vector<LayerCache<S>> layers;
  std::vector<S> xhatf, rstdf, f, logits;
};

// out[T][N] = x[T][K] * w[K][N] (+ b)
template <class S>
void matmul(const S* x, const S* w, const S* b, S* out, std::size_t T, std::size_t K,
            std::size_t N) {
  for (std::size_t t = 0; t < T; ++t) {
    S* o = out + t * N;
    for (std::size_t n = 0; n < N; ++n) o[n] = b ? b[n] : S(0);
    const S* xr = x + t * K;
    for (std::size_t k = 0; k < K; ++k) {
      const S a = xr[k];
      const S* wr = w + k * N;
      for (std::size_t n = 0; n < N; ++n) o[n] += a * wr[n];
    }
  }
}

// Accumulates into dx (when non-null), dw and db (when non-null).
template <class S>
void matmul_backward(const S* x, const S* w, const S* dout, S* dx, S* dw, S* db, std::size_t T,
                     std::size_t K, std::size_t N) {
  for (std::size_t t = 0; t < T; ++t) {
    const S* d = dout + t * N;
    const S* xr = x + t * K;
    for (std::size_t k = 0; k < K; ++k) {
      const S* wr = w + k * N;
      S* dwr = dw + k * N;
      const S a = xr[k];
      S acc = 0;
      for (std::size_t n = 0; n < N; ++n) {
        acc += d[n] * wr[n];
        dwr[n] += a * d[n];
      }
      if (dx) dx[t * K + k] += acc;
    }
    if (db) {
      for (std::size_t n = 0; n < N; ++n) db[n] += d[n];
    }
  }
}

template <class S>
void layer_norm(const S* x, const S* g, const S* b, S* xhat, S* rstd, S* out, std::size_t T,
                std::size_t D) {
  for (std::size_t t = 0; t < T; ++t) {
    const S* xr = x + t * D;
    S mean = 0;
    for (std::size_t i = 0; i < D; ++i) mean += xr[i];
    mean /= static_cast<S>(D);
    S var = 0;
    for (std::size_t i = 0; i < D; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<S>(D);
    const S r = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    rstd[t] = r;
    for (std::size_t i = 0; i < D; ++i) {
      const S h = (xr[i] - mean) * r;
      xhat[t * D + i] = h;
      out[t * D + i] = h * g[i] + b[i];
    }
  }
}

// Accumulates into dx, dg, db.
template <class S>
void layer_norm_backward(const S* xhat, const S* rstd, const S* g, const S* dout, S* dx, S* dg,
                         S* db, std::size_t T, std::size_t D) {
  std::vector<S> dxhat(D);
  for (std::size_t t = 0; t < T; ++t) {
    const S* d = dout + t * D;
    const S* h = xhat + t * D;
    S mean_d = 0;
    S mean_dh = 0;
    for (std::size_t i = 0; i < D; ++i) {
      dg[i] += d[i] * h[i];
      db[i] += d[i];
      dxhat[i] = d[i] * g[i];
      mean_d += dxhat[i];
      mean_dh += dxhat[i] * h[i];
    }
    mean_d /= static_cast<S>(D);
    mean_dh /= static_cast<S>(D);
    for (std::size_t i = 0; i < D; ++i) {
      dx[t * D + i] += rstd[t] * (dxhat[i] - mean_d - h[i] * mean_dh);
    }
  }
}

template <class S>
S gelu(S u) {
  const S c = static_cast<S>(0.7978845608028654);
  return S(0.5) * u * (S(1) + std::tanh(c * (u + static_cast<S>(0.044715) * u * u * u)));
}

template <class S>
S gelu_grad(S u) {
  const S c = static_cast<S>(0.7978845608028654);
  const S th = std::tanh(c * (u + static_cast<S>(0.044715) * u * u * u));
  return S(0.5) * (S(1) + th) +
         S(0.5) * u * (S(1) - th * th) * c * (S(1) + static_cast<S>(3 * 0.044715) * u * u);
}

template <class S>
void run_forward(const ModelConfig& cfg, std::span<const S* const> w,
                 std::span<const TokenId> ids, const InjectionT<S>* inj, Cache<S>& c) {
  const std::size_t T = ids.size();
  const std::size_t D = cfg.hidden_dim;
  const std::size_t F = cfg.ffn_dim();
  const std::size_t H = cfg.n_heads;
  const std::size_t hd = cfg.head_dim();
  const std::size_t V = cfg.vocab_size;
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));

  c.T = T;
  c.x0.assign(T * D, S(0));
  for (std::size_t t = 0; t < T; ++t) {
    const S* te = w[kTokEmb] + static_cast<std::size_t>(ids[t]) * D;
    const S* pe = w[kPosEmb] + t * D;
    for (std::size_t i = 0; i < D; ++i) c.x0[t * D + i] = te[i] + pe[i];
  }

  c.layers.resize(cfg.n_layers);
  const S* x = c.x0.data();
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    auto& L = c.layers[l];
    auto P = [&](std::size_t slot) { return w[layer_index(l, slot)]; };
    L.xhat1.resize(T * D);
    L.rstd1.resize(T);
    L.a.resize(T * D);
    layer_norm(x, P(kLn1G), P(kLn1B), L.xhat1.data(), L.rstd1.data(), L.a.data(), T, D);

    L.q.resize(T * D);
    L.k.resize(T * D);
    L.v.resize(T * D);
    matmul<S>(L.a.data(), P(kWq), nullptr, L.q.data(), T, D, D);
    matmul<S>(L.a.data(), P(kWk), nullptr, L.k.data(), T, D, D);
    matmul<S>(L.a.data(), P(kWv), nullptr, L.v.data(), T, D, D);

    L.probs.assign(H * T * T, S(0));
    L.o.assign(T * D, S(0));
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        S* p = L.probs.data() + (h * T + t) * T;
        const S* qt = L.q.data() + t * D + h * hd;
        S mx = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          const S* ks = L.k.data() + s * D + h * hd;
          S dot = 0;
          for (std::size_t j = 0; j < hd; ++j) dot += qt[j] * ks[j];
          p[s] = dot * scale;
          if (p[s] > mx) mx = p[s];
        }
        S sum = 0;
        for (std::size_t s = 0; s <= t; ++s) {
          p[s] = std::exp(p[s] - mx);
          sum += p[s];
        }
        for (std::size_t s = 0; s <= t; ++s) p[s] /= sum;
        S* ot = L.o.data() + t * D + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          const S* vs = L.v.data() + s * D + h * hd;
          for (std::size_t j = 0; j < hd; ++j) ot[j] += p[s] * vs[j];
        }
      }
    }

    L.x1.resize(T * D);
    matmul<S>(L.o.data(), P(kWo), P(kBo), L.x1.data(), T, D, D);
    for (std::size_t i = 0; i < T * D; ++i) L.x1[i] += x[i];

    L.xhat2.resize(T * D);
    L.rstd2.resize(T);
    L.c.resize(T * D);
    layer_norm(L.x1.data(), P(kLn2G), P(kLn2B), L.xhat2.data(), L.rstd2.data(), L.c.data(), T, D);

    L.u.resize(T * F);
    matmul<S>(L.c.data(), P(kW1), P(kB1), L.u.data(), T, D, F);
    L.gz.resize(T * F);
    for (std::size_t i = 0; i < T * F; ++i) L.gz[i] = gelu(L.u[i]);

    L.y.resize(T * D);
    matmul<S>(L.gz.data(), P(kW2), P(kB2), L.y.data(), T, F, D);
    for (std::size_t i = 0; i < T * D; ++i) L.y[i] += L.x1[i];

    if (inj && inj->layer == l && inj->multiplier != S(0)) {
      for (std::size_t t = inj->from_position; t < T; ++t) {
        for (std::size_t i = 0; i < D; ++i) {
          L.y[t * D + i] += inj->multiplier * static_cast<S>(inj->direction[i]);
        }
      }
    }
    x = L.y.data();
  }

  c.xhatf.resize(T * D);
  c.rstdf.resize(T);
  c.f.resize(T * D);
  const std::size_t nl = cfg.n_layers;
  layer_norm(x, w[final_index(nl, kLnfG)], w[final_index(nl, kLnfB)], c.xhatf.data(),
             c.rstdf.data(), c.f.data(), T, D);
  c.logits.resize(T * V);
  matmul<S>(c.f.data(), w[final_index(nl, kUnembed)], w[final_index(nl, kUnembedB)],
            c.logits.data(), T, D, V);
}

// Masked next-token cross-entropy. Row t predicts ids[t + 1]; rows before
// prompt_len - 1 are ignored. Writes scale * dLoss/dlogits into dlogits when
// non-null and returns the summed loss.
template <class S>
double masked_cross_entropy(const Cache<S>& c, std::size_t V, std::span<const TokenId> ids,
                            std::size_t prompt_len, S scale, std::vector<S>* dlogits) {
  const std::size_t T = ids.size();
  if (dlogits) dlogits->assign(T * V, S(0));
  double total = 0.0;
  std::vector<S> p(V);
  for (std::size_t t = prompt_len - 1; t + 1 < T; ++t) {
    const S* row = c.logits.data() + t * V;
    S mx = row[0];
    for (std::size_t i = 1; i < V; ++i) mx = row[i] > mx ? row[i] : mx;
    S sum = 0;
    for (std::size_t i = 0; i < V; ++i) {
      p[i] = std::exp(row[i] - mx);
      sum += p[i];
    }
    const TokenId target = ids[t + 1];
    total += static_cast<double>(std::log(sum) - (row[target] - mx));
    if (dlogits) {
      S* d = dlogits->data() + t * V;
      for (std::size_t i = 0; i < V; ++i) d[i] = scale * p[i] / sum;
      d[target] -= scale;
    }
  }
  return total;
}

// Accumulates parameter gradients into g.
template <class S>
void run_backward(const ModelConfig& cfg, std::span<const S* const> w, std::span<S* const> g,
                  std::span<const TokenId> ids, const Cache<S>& c, const std::vector<S>& dlogits) {
  const std::size_t T = ids.size();
  const std::size_t D = cfg.hidden_dim;
  const std::size_t F = cfg.ffn_dim();
  const std::size_t H = cfg.n_heads;
  const std::size_t hd = cfg.head_dim();
  const std::size_t V = cfg.vocab_size;
  const std::size_t nl = cfg.n_layers;
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));

  std::vector<S> df(T * D, S(0));
  matmul_backward<S>(c.f.data(), w[final_index(nl, kUnembed)], dlogits.data(), df.data(),
                     g[final_index(nl, kUnembed)], g[final_index(nl, kUnembedB)], T, D, V);
  std::vector<S> dx(T * D, S(0));
  layer_norm_backward<S>(c.xhatf.data(), c.rstdf.data(), w[final_index(nl, kLnfG)], df.data(),
                         dx.data(), g[final_index(nl, kLnfG)], g[final_index(nl, kLnfB)], T, D);

  std::vector<S> dgz(T * F), du(T * F), dc(T * D), dx1(T * D), dob(T * D), dq(T * D), dk(T * D),
      dv(T * D), da(T * D), dp(T);
  for (std::size_t l = nl; l-- > 0;) {
    const auto& L = c.layers[l];
    auto P = [&](std::size_t slot) { return w[layer_index(l, slot)]; };
    auto G = [&](std::size_t slot) { return g[layer_index(l, slot)]; };

    // y = x1 + gelu(c W1 + b1) W2 + b2
    std::fill(dgz.begin(), dgz.end(), S(0));
    matmul_backward<S>(L.gz.data(), P(kW2), dx.data(), dgz.data(), G(kW2), G(kB2), T, F, D);
    for (std::size_t i = 0; i < T * F; ++i) du[i] = dgz[i] * gelu_grad(L.u[i]);
    std::fill(dc.begin(), dc.end(), S(0));
    matmul_backward<S>(L.c.data(), P(kW1), du.data(), dc.data(), G(kW1), G(kB1), T, D, F);
    dx1 = dx;
    layer_norm_backward<S>(L.xhat2.data(), L.rstd2.data(), P(kLn2G), dc.data(), dx1.data(),
                           G(kLn2G), G(kLn2B), T, D);

    // x1 = x + o Wo + bo
    std::fill(dob.begin(), dob.end(), S(0));
    matmul_backward<S>(L.o.data(), P(kWo), dx1.data(), dob.data(), G(kWo), G(kBo), T, D, D);

    std::fill(dq.begin(), dq.end(), S(0));
    std::fill(dk.begin(), dk.end(), S(0));
    std::fill(dv.begin(), dv.end(), S(0));
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const S* p = L.probs.data() + (h * T + t) * T;
        const S* dot = dob.data() + t * D + h * hd;
        S weighted = 0;
        for (std::size_t s = 0; s <= t; ++s) {
          const S* vs = L.v.data() + s * D + h * hd;
          S* dvs = dv.data() + s * D + h * hd;
          S acc = 0;
          for (std::size_t j = 0; j < hd; ++j) {
            acc += dot[j] * vs[j];
            dvs[j] += p[s] * dot[j];
          }
          dp[s] = acc;
          weighted += p[s] * acc;
        }
        const S* qt = L.q.data() + t * D + h * hd;
        S* dqt = dq.data() + t * D + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          const S ds = p[s] * (dp[s] - weighted) * scale;
          const S* ks = L.k.data() + s * D + h * hd;
          S* dks = dk.data() + s * D + h * hd;
          for (std::size_t j = 0; j < hd; ++j) {
            dqt[j] += ds * ks[j];
            dks[j] += ds * qt[j];
          }
        }
      }
    }

    std::fill(da.begin(), da.end(), S(0));
    matmul_backward<S>(L.a.data(), P(kWq), dq.data(), da.data(), G(kWq), nullptr, T, D, D);
    matmul_backward<S>(L.a.data(), P(kWk), dk.data(), da.data(), G(kWk), nullptr, T, D, D);
    matmul_backward<S>(L.a.data(), P(kWv), dv.data(), da.data(), G(kWv), nullptr, T, D, D);

    dx = dx1;
    layer_norm_backward<S>(L.xhat1.data(), L.rstd1.data(), P(kLn1G), da.data(), dx.data(),
                           G(kLn1G), G(kLn1B), T, D);
  }

  for (std::size_t t = 0; t < T; ++t) {
    S* gt = g[kTokEmb] + static_cast<std::size_t>(ids[t]) * D;
    S* gp = g[kPosEmb] + t * D;
    for (std::size_t i = 0; i < D; ++i) {
      gt[i] += dx[t * D + i];
      gp[i] += dx[t * D + i];
    }
  }
}

}  // namespace reflex::tinylm::detail
