#pragma once

#include <cstdint>
#include <string>

#include "adamae/autodiff.hpp"

namespace adamae {

// Multiply-accumulate counter. `param_macs` covers products between
// activations and parameter matrices (the affine-in-token-count part that
// compute/memory proxies track); `attn_macs` covers the quadratic
// data-data products inside attention (QK^T and attention-times-V).
struct MacCounter {
  std::uint64_t param_macs = 0;
  std::uint64_t attn_macs = 0;
};

inline std::size_t attention_heads(std::size_t dim) {
  std::size_t heads = dim / 64;
  if (heads < 1) heads = 1;
  while (dim % heads != 0) --heads;
  return heads;
}

// Parameter indices of one pre-norm transformer block (MHA + MLP, GELU,
// MLP ratio fixed by the caller).
struct BlockRefs {
  std::size_t ln1_g, ln1_b;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_g, ln2_b;
  std::size_t w1, b1, w2, b2;
  std::size_t dim = 0;
  std::size_t hidden = 0;
};

template <typename Real>
BlockRefs register_block(ParamSet<Real>& ps, const std::string& prefix,
                         std::size_t dim, double mlp_ratio, Partition part,
                         Rng& rng) {
  const std::size_t hidden =
      static_cast<std::size_t>(static_cast<double>(dim) * mlp_ratio);
  const Real std02 = Real(0.02);
  auto weight = [&](std::size_t r, std::size_t c) {
    return Tensor<Real>::truncated_normal({r, c}, rng, std02);
  };
  BlockRefs b;
  b.dim = dim;
  b.hidden = hidden;
  b.ln1_g = ps.add(prefix + ".ln1.g", part, false, Tensor<Real>({dim}, Real(1)));
  b.ln1_b = ps.add(prefix + ".ln1.b", part, false, Tensor<Real>({dim}));
  b.wq = ps.add(prefix + ".attn.wq", part, true, weight(dim, dim));
  b.bq = ps.add(prefix + ".attn.bq", part, false, Tensor<Real>({dim}));
  b.wk = ps.add(prefix + ".attn.wk", part, true, weight(dim, dim));
  b.bk = ps.add(prefix + ".attn.bk", part, false, Tensor<Real>({dim}));
  b.wv = ps.add(prefix + ".attn.wv", part, true, weight(dim, dim));
  b.bv = ps.add(prefix + ".attn.bv", part, false, Tensor<Real>({dim}));
  b.wo = ps.add(prefix + ".attn.wo", part, true, weight(dim, dim));
  b.bo = ps.add(prefix + ".attn.bo", part, false, Tensor<Real>({dim}));
  b.ln2_g = ps.add(prefix + ".ln2.g", part, false, Tensor<Real>({dim}, Real(1)));
  b.ln2_b = ps.add(prefix + ".ln2.b", part, false, Tensor<Real>({dim}));
  b.w1 = ps.add(prefix + ".mlp.w1", part, true, weight(dim, hidden));
  b.b1 = ps.add(prefix + ".mlp.b1", part, false, Tensor<Real>({hidden}));
  b.w2 = ps.add(prefix + ".mlp.w2", part, true, weight(hidden, dim));
  b.b2 = ps.add(prefix + ".mlp.b2", part, false, Tensor<Real>({dim}));
  return b;
}

constexpr double kLayerNormEps = 1e-6;

template <typename Real>
Var<Real> linear(Var<Real> x, Var<Real> w, Var<Real> b, MacCounter* macs) {
  if (macs != nullptr) {
    const auto& xs = x.value().shape();
    const auto& ws = w.value().shape();
    macs->param_macs +=
        static_cast<std::uint64_t>(xs[0]) * ws[0] * ws[1];
  }
  return add_row_vector(matmul(x, w), b);
}

template <typename Real>
Var<Real> block_forward(Var<Real> x, const ParamBinding<Real>& p,
                        const BlockRefs& b, MacCounter* macs = nullptr) {
  Tape<Real>& tape = *x.tape;
  (void)tape;
  const std::size_t n = x.value().shape()[0];
  const std::size_t dim = b.dim;
  const std::size_t heads = attention_heads(dim);
  const std::size_t dh = dim / heads;

  Var<Real> h = layer_norm_rows(x, p[b.ln1_g], p[b.ln1_b],
                                static_cast<Real>(kLayerNormEps));
  Var<Real> q = linear(h, p[b.wq], p[b.bq], macs);
  Var<Real> k = linear(h, p[b.wk], p[b.bk], macs);
  Var<Real> v = linear(h, p[b.wv], p[b.bv], macs);

  const Real inv_sqrt_dh =
      static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
  Var<Real> joined;
  for (std::size_t head = 0; head < heads; ++head) {
    Var<Real> qh = slice_cols(q, head * dh, dh);
    Var<Real> kh = slice_cols(k, head * dh, dh);
    Var<Real> vh = slice_cols(v, head * dh, dh);
    Var<Real> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    Var<Real> att = softmax_rows(scores);
    Var<Real> oh = matmul(att, vh);
    if (macs != nullptr)
      macs->attn_macs += 2ull * n * n * dh;  // QK^T and att*V
    joined = (head == 0) ? oh : concat_cols(joined, oh);
  }
  Var<Real> attn_out = linear(joined, p[b.wo], p[b.bo], macs);
  x = add(x, attn_out);

  Var<Real> h2 = layer_norm_rows(x, p[b.ln2_g], p[b.ln2_b],
                                 static_cast<Real>(kLayerNormEps));
  Var<Real> m = gelu(linear(h2, p[b.w1], p[b.b1], macs));
  m = linear(m, p[b.w2], p[b.b2], macs);
  return add(x, m);
}

}  // namespace adamae
