#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adamae/blocks.hpp"
#include "adamae/sampler.hpp"
#include "adamae/tokenizer.hpp"

namespace adamae {

enum class ReconLoss : std::uint8_t { Mse = 0, L1 = 1 };

// Asymmetric MAE dimensions. Paper scale is dim=768, enc_blocks=12,
// dec_dim=384, dec_blocks=4; the toy defaults live in RunConfig.
struct MaeArch {
  std::size_t dim = 64;
  std::size_t enc_blocks = 4;
  std::size_t dec_dim = 32;
  std::size_t dec_blocks = 2;
  double mlp_ratio = 4.0;
};

// Parameter indices of the MAE (partition phi): shared cube embedding,
// encoder stack, projector, mask token, decoder stack and pixel head.
struct MaeRefs {
  MaeArch arch;
  std::size_t cube_size = 0;
  std::size_t embed_w = 0, embed_b = 0;
  std::vector<BlockRefs> encoder;
  std::size_t proj_w = 0, proj_b = 0;
  std::size_t mask_token = 0;
  std::vector<BlockRefs> decoder;
  std::size_t dec_norm_g = 0, dec_norm_b = 0;
  std::size_t head_w = 0, head_b = 0;
};

template <typename Real>
MaeRefs register_mae(ParamSet<Real>& ps, const MaeArch& arch,
                     std::size_t cube_size, Rng& rng) {
  MaeRefs m;
  m.arch = arch;
  m.cube_size = cube_size;
  const Real std02 = Real(0.02);
  auto weight = [&](std::size_t r, std::size_t c) {
    return Tensor<Real>::truncated_normal({r, c}, rng, std02);
  };
  m.embed_w = ps.add("mae.embed.w", Partition::Mae, true,
                     weight(cube_size, arch.dim));
  m.embed_b = ps.add("mae.embed.b", Partition::Mae, false,
                     Tensor<Real>({arch.dim}));
  for (std::size_t i = 0; i < arch.enc_blocks; ++i)
    m.encoder.push_back(register_block(ps, "mae.enc." + std::to_string(i),
                                       arch.dim, arch.mlp_ratio,
                                       Partition::Mae, rng));
  m.proj_w = ps.add("mae.dec.proj.w", Partition::Mae, true,
                    weight(arch.dim, arch.dec_dim));
  m.proj_b = ps.add("mae.dec.proj.b", Partition::Mae, false,
                    Tensor<Real>({arch.dec_dim}));
  // Plain Gaussian init for the shared mask token.
  m.mask_token = ps.add("mae.dec.mask_token", Partition::Mae, false,
                        Tensor<Real>::randn({arch.dec_dim}, rng, std02));
  for (std::size_t i = 0; i < arch.dec_blocks; ++i)
    m.decoder.push_back(register_block(ps, "mae.dec." + std::to_string(i),
                                       arch.dec_dim, arch.mlp_ratio,
                                       Partition::Mae, rng));
  m.dec_norm_g = ps.add("mae.dec.norm.g", Partition::Mae, false,
                        Tensor<Real>({arch.dec_dim}, Real(1)));
  m.dec_norm_b = ps.add("mae.dec.norm.b", Partition::Mae, false,
                        Tensor<Real>({arch.dec_dim}));
  m.head_w = ps.add("mae.dec.head.w", Partition::Mae, true,
                    weight(arch.dec_dim, cube_size));
  m.head_b = ps.add("mae.dec.head.b", Partition::Mae, false,
                    Tensor<Real>({cube_size}));
  return m;
}

// Encoder over visible tokens only; cost scales with N_v.
template <typename Real>
Var<Real> encode(Var<Real> x_visible, const ParamBinding<Real>& p,
                 const MaeRefs& m, MacCounter* macs = nullptr) {
  Var<Real> x = x_visible;
  for (const BlockRefs& b : m.encoder) x = block_forward(x, p, b, macs);
  if (!x.value().all_finite())
    throw NumericError("encode: non-finite activations");
  return x;
}

// Projects encoded visible tokens to decoder width, fills masked positions
// with the shared mask token, and re-injects positional information for all
// N rows (no un-shuffling: each row is addressed by its token index).
template <typename Real>
Var<Real> assemble_decoder_input(Var<Real> f_visible, const MaskSpec& spec,
                                 const ParamBinding<Real>& p,
                                 const MaeRefs& m,
                                 const Tensor<Real>& pos_dec) {
  Tape<Real>& tape = *f_visible.tape;
  check_shape(f_visible.value().shape()[0] == spec.n_visible,
              "assemble: visible feature count mismatch");
  const std::size_t n = spec.tokens();
  check_shape(pos_dec.shape() ==
                  Shape({n, m.arch.dec_dim}),
              "assemble: decoder positional table shape mismatch");

  Var<Real> projected = linear(f_visible, p[m.proj_w], p[m.proj_b], nullptr);
  Var<Real> stacked;
  if (spec.masked.empty()) {
    stacked = projected;
  } else {
    Var<Real> mask_rows =
        broadcast_row(p[m.mask_token], spec.masked.size());
    stacked = concat_rows(projected, mask_rows);
  }

  // Row j of the output comes from position-of-j within the stacked matrix.
  std::vector<std::size_t> source(n);
  for (std::size_t i = 0; i < spec.visible.size(); ++i)
    source[spec.visible[i]] = i;
  for (std::size_t i = 0; i < spec.masked.size(); ++i)
    source[spec.masked[i]] = spec.n_visible + i;
  Var<Real> ordered = gather_rows(stacked, source);
  return add(ordered, make_constant(tape, pos_dec));
}

// Decoder stack plus pixel-cube head; predictions live in patch-normalized
// space.
template <typename Real>
Var<Real> decode(Var<Real> f, const ParamBinding<Real>& p, const MaeRefs& m,
                 MacCounter* macs = nullptr) {
  Var<Real> x = f;
  for (const BlockRefs& b : m.decoder) x = block_forward(x, p, b, macs);
  x = layer_norm_rows(x, p[m.dec_norm_g], p[m.dec_norm_b],
                      static_cast<Real>(kLayerNormEps));
  x = linear(x, p[m.head_w], p[m.head_b], macs);
  if (!x.value().all_finite())
    throw NumericError("decode: non-finite predictions");
  return x;
}

// Masked reconstruction loss over patch-normalized targets.
template <typename Real>
struct ReconstructionResult {
  Var<Real> predictions;    // N x cube_size
  Var<Real> per_token_err;  // |I_m|, differentiable wrt phi
  Var<Real> loss;           // scalar mean over masked tokens

  // The detached copy handed to the sampling loss.
  Var<Real> detached_err() const { return detach(per_token_err); }
};

template <typename Real>
ReconstructionResult<Real> reconstruction_loss(Var<Real> predictions,
                                               const TargetPatches<Real>& tp,
                                               const MaskSpec& spec,
                                               ReconLoss kind = ReconLoss::Mse) {
  check(!spec.masked.empty(),
        "reconstruction_loss: no masked tokens (masking ratio too low)");
  Tape<Real>& tape = *predictions.tape;
  Var<Real> pred_m = gather_rows(predictions, spec.masked);
  Var<Real> target_m = make_constant(
      tape, gather_rows_value(tp.targets, spec.masked));
  Var<Real> resid = sub(pred_m, target_m);
  Var<Real> per_token =
      kind == ReconLoss::Mse ? row_mean(mul(resid, resid))
                             : row_mean(abs(resid));
  Var<Real> loss = scale(sum(per_token),
                         Real(1) / static_cast<Real>(spec.masked.size()));
  if (!std::isfinite(static_cast<double>(loss.value()[0])))
    throw NumericError("reconstruction_loss: non-finite loss");
  return ReconstructionResult<Real>{predictions, per_token, loss};
}

// L = L_R + lambda * L_S; gradients stay partitioned because L_S sees only
// detached MAE values.
template <typename Real>
Var<Real> combined_loss(Var<Real> recon, Var<Real> sampling, Real lambda) {
  check(lambda >= Real(0), "combined_loss: lambda must be >= 0");
  return add(recon, scale(sampling, lambda));
}

}  // namespace adamae
