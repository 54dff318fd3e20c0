#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "adamae/blocks.hpp"
#include "adamae/tokenizer.hpp"

namespace adamae {

// Simplex vector over all N tokens, kept as a graph node so the sampling
// loss can differentiate through it.
template <typename Real>
struct ProbabilityMap {
  Var<Real> probs;  // rank-1, length N
  PatchGeometry grid;

  const Tensor<Real>& values() const { return probs.value(); }
};

// Partition of token indices into visible and masked sets.
struct MaskSpec {
  std::vector<std::size_t> visible;  // sorted
  std::vector<std::size_t> masked;   // sorted
  std::vector<std::uint8_t> mask;    // length N, 1 = masked
  std::size_t n_visible = 0;

  std::size_t tokens() const { return mask.size(); }

  static MaskSpec from_visible(std::vector<std::size_t> visible,
                               std::size_t n) {
    MaskSpec s;
    std::sort(visible.begin(), visible.end());
    s.visible = std::move(visible);
    s.n_visible = s.visible.size();
    s.mask.assign(n, 1);
    for (std::size_t i : s.visible) {
      check_shape(i < n, "visible index out of range");
      check(s.mask[i] == 1, "duplicate visible index");
      s.mask[i] = 0;
    }
    s.masked.reserve(n - s.n_visible);
    for (std::size_t i = 0; i < n; ++i)
      if (s.mask[i]) s.masked.push_back(i);
    return s;
  }

  void validate() const {
    check(visible.size() + masked.size() == mask.size(),
          "mask partition is not exhaustive");
    check(std::is_sorted(visible.begin(), visible.end()) &&
              std::is_sorted(masked.begin(), masked.end()),
          "mask index sets must be sorted");
    for (std::size_t i : visible) check(mask[i] == 0, "visible marked masked");
    for (std::size_t i : masked) check(mask[i] == 1, "masked marked visible");
    check(n_visible == visible.size(), "visible count mismatch");
  }
};

// Visible-token count for probability-based masking: floor(N*(1-rho)),
// clamped to at least one visible token.
inline std::size_t visible_count(std::size_t n, double rho) {
  check(rho > 0.0 && rho < 1.0, "masking ratio must lie in (0,1)");
  auto nv = static_cast<std::size_t>(static_cast<double>(n) * (1.0 - rho));
  return std::max<std::size_t>(nv, 1);
}

// ---------------------------------------------------------------------------
// Sampling network
// ---------------------------------------------------------------------------

enum class SamplerKind : std::uint8_t { Mha = 0, Mlp = 1 };
enum class SamplingLossForm : std::uint8_t { Log = 0, Prob = 1 };

struct SamplerArch {
  SamplerKind kind = SamplerKind::Mha;
  std::size_t blocks = 1;
  std::size_t dim = 0;  // score-network width; 0 means the token dim
  double mlp_ratio = 4.0;
};

// Parameter indices of the sampling network (partition theta).
struct SamplerRefs {
  SamplerArch arch;
  bool has_in_proj = false;
  std::size_t in_w = 0, in_b = 0;
  std::vector<BlockRefs> blocks;         // MHA variant
  std::size_t mlp_w1 = 0, mlp_b1 = 0;    // MLP variant
  std::size_t head_w = 0, head_b = 0;
  std::size_t dim = 0;
};

template <typename Real>
SamplerRefs register_sampler(ParamSet<Real>& ps, std::size_t token_dim,
                             const SamplerArch& arch, Rng& rng) {
  SamplerRefs s;
  s.arch = arch;
  s.dim = arch.dim == 0 ? token_dim : arch.dim;
  const Real std02 = Real(0.02);
  auto weight = [&](std::size_t r, std::size_t c) {
    return Tensor<Real>::truncated_normal({r, c}, rng, std02);
  };
  if (s.dim != token_dim) {
    s.has_in_proj = true;
    s.in_w = ps.add("sampler.in.w", Partition::Sampler, true,
                    weight(token_dim, s.dim));
    s.in_b = ps.add("sampler.in.b", Partition::Sampler, false,
                    Tensor<Real>({s.dim}));
  }
  if (arch.kind == SamplerKind::Mha) {
    for (std::size_t i = 0; i < arch.blocks; ++i)
      s.blocks.push_back(register_block(ps, "sampler.blk." + std::to_string(i),
                                        s.dim, arch.mlp_ratio,
                                        Partition::Sampler, rng));
  } else {
    s.mlp_w1 = ps.add("sampler.mlp.w1", Partition::Sampler, true,
                      weight(s.dim, s.dim));
    s.mlp_b1 = ps.add("sampler.mlp.b1", Partition::Sampler, false,
                      Tensor<Real>({s.dim}));
  }
  s.head_w = ps.add("sampler.head.w", Partition::Sampler, true,
                    weight(s.dim, 1));
  s.head_b = ps.add("sampler.head.b", Partition::Sampler, false,
                    Tensor<Real>({1}));
  return s;
}

// Token scores -> probability map. The input tokens are detached first so
// the sampling loss can never reach MAE parameters, and nothing downstream
// of the probabilities feeds the reconstruction path, keeping the two
// parameter partitions exactly decoupled.
template <typename Real>
ProbabilityMap<Real> score_tokens(const TokenBatch<Real>& batch,
                                  const ParamBinding<Real>& p,
                                  const SamplerRefs& s) {
  check(batch.pos_encoded, "score_tokens: tokens must carry positions");
  Var<Real> x = detach(batch.tokens);
  if (s.has_in_proj) x = linear(x, p[s.in_w], p[s.in_b], nullptr);
  if (s.arch.kind == SamplerKind::Mha) {
    for (const BlockRefs& b : s.blocks) x = block_forward(x, p, b);
  } else {
    x = gelu(linear(x, p[s.mlp_w1], p[s.mlp_b1], nullptr));
  }
  Var<Real> logits = linear(x, p[s.head_w], p[s.head_b], nullptr);  // N x 1
  const std::size_t n = logits.value().shape()[0];
  Var<Real> probs = reshape(
      softmax_rows(reshape(logits, Shape{1, n})), Shape{n});
  if (!probs.value().all_finite())
    throw NumericError("score_tokens: non-finite probabilities");
  return ProbabilityMap<Real>{probs, batch.geometry};
}

// Sequential draw without replacement, renormalizing after each pick.
// Reproducible given the rng stream.
template <typename Real>
MaskSpec sample_visible_from(const Tensor<Real>& p, double rho, Rng& rng) {
  const std::size_t n = p.numel();
  const std::size_t nv = visible_count(n, rho);

  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = static_cast<double>(p[i]);
    check(w[i] >= 0.0, "sample_visible: negative probability");
    total += w[i];
  }
  check(total > 0.0, "sample_visible: zero probability mass");

  std::vector<std::size_t> picked;
  picked.reserve(nv);
  for (std::size_t draw = 0; draw < nv; ++draw) {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] <= 0.0) continue;
      acc += w[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    if (chosen == n) {  // guard against accumulated rounding at the tail
      for (std::size_t i = n; i-- > 0;)
        if (w[i] > 0.0) {
          chosen = i;
          break;
        }
    }
    picked.push_back(chosen);
    total -= w[chosen];
    w[chosen] = 0.0;
  }
  MaskSpec spec = MaskSpec::from_visible(std::move(picked), n);
  spec.validate();
  return spec;
}

template <typename Real>
MaskSpec sample_visible(const ProbabilityMap<Real>& pmap, double rho,
                        Rng& rng) {
  return sample_visible_from(pmap.values(), rho, rng);
}

// log P_i under the original (pre-renormalization) distribution, matching a
// single categorical object queried per index.
template <typename Real>
Var<Real> log_prob(const ProbabilityMap<Real>& pmap,
                   const std::vector<std::size_t>& indices) {
  const std::size_t n = pmap.values().numel();
  for (std::size_t i : indices)
    check_shape(i < n, "log_prob: index out of range");
  Var<Real> col = reshape(pmap.probs, Shape{n, 1});
  Var<Real> rows = gather_rows(col, indices);
  return log(reshape(rows, Shape{indices.size()}));
}

// L_S = -sum_{i in I_m} log(P_i) * err_i  (Prob form: -sum P_i * err_i).
// `per_token_err` must be detached; gradients flow to theta only.
template <typename Real>
Var<Real> sampling_loss(const ProbabilityMap<Real>& pmap,
                        const std::vector<std::size_t>& masked,
                        Var<Real> per_token_err,
                        SamplingLossForm form = SamplingLossForm::Log) {
  Tape<Real>& tape = *pmap.probs.tape;
  if (per_token_err.requires_grad())
    throw LogicError("sampling_loss: per-token errors must be detached");
  if (masked.empty()) return make_constant(tape, Tensor<Real>({1}, Real(0)));
  check_shape(per_token_err.value().numel() == masked.size(),
              "sampling_loss: error vector length mismatch");

  Var<Real> weight;
  if (form == SamplingLossForm::Log) {
    weight = log_prob(pmap, masked);
  } else {
    const std::size_t n = pmap.values().numel();
    weight = reshape(gather_rows(reshape(pmap.probs, Shape{n, 1}), masked),
                     Shape{masked.size()});
  }
  return scale(sum(mul(weight, per_token_err)), Real(-1));
}

}  // namespace adamae
