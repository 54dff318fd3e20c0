#pragma once

#include "adamae/gradcheck.hpp"
#include "adamae/trainer.hpp"

namespace adamae {

enum class LossKind : std::uint8_t { Recon = 0, Sampling = 1, Combined = 2 };

// Scalar loss closures over the parameters with everything else frozen
// (fixed video, fixed mask), rebuilt identically on every call so finite
// differences are well defined. Video-derived constants (cube matrix,
// normalized targets) are precomputed once.
//
// The reconstruction path contains no stop-gradients, so it is a plain
// function of phi. The sampling and combined losses DO contain
// stop-gradients (the sampler reads detached tokens, the sampling loss
// reads detached errors); finite differences cannot see a detach boundary,
// so those closures take the frozen token matrix `x0` and frozen per-token
// errors `err0` captured at the unperturbed parameters. Their analytic
// gradients equal the live training graph's gradients by the stop-gradient
// rule, which the bitwise partition tests check separately.
template <typename Real>
ScalarFn<Real> frozen_loss_fn(ModelState<Real>& state,
                              const VideoTensor<Real>& video,
                              const MaskSpec& mask, LossKind kind,
                              Tensor<Real> x0 = {}, Tensor<Real> err0 = {}) {
  Tensor<Real> cubes = unfold_cubes(video, state.geom);
  TargetPatches<Real> targets = patch_normalize(
      video, state.geom, static_cast<Real>(state.config.patch_norm_eps));
  return [&state, mask, kind, x0, err0, cubes, targets](
             Tape<Real>& tape, const ParamBinding<Real>& p) -> Var<Real> {
    const RunConfig& cfg = state.config;

    Var<Real> sampling;
    if (kind != LossKind::Recon) {
      check(!x0.empty() && !err0.empty(),
            "frozen_loss_fn: sampling checks need frozen x0/err0");
      TokenBatch<Real> frozen{make_constant(tape, x0), state.geom, true};
      ProbabilityMap<Real> pmap = score_tokens(frozen, p, state.sampler);
      sampling = sampling_loss(pmap, mask.masked, make_constant(tape, err0),
                               cfg.sampling_form());
      if (kind == LossKind::Sampling) return sampling;
    }

    Var<Real> tokens = add(
        add_row_vector(matmul(make_constant(tape, cubes),
                              p[state.mae.embed_w]),
                       p[state.mae.embed_b]),
        make_constant(tape, state.pos_enc));
    Var<Real> x_visible = gather_rows(tokens, mask.visible);
    Var<Real> f_visible = encode(x_visible, p, state.mae);
    Var<Real> f =
        assemble_decoder_input(f_visible, mask, p, state.mae, state.pos_dec);
    Var<Real> predictions = decode(f, p, state.mae);
    ReconstructionResult<Real> recon = reconstruction_loss(
        predictions, targets, mask, cfg.recon_loss_kind());
    if (kind == LossKind::Recon) return recon.loss;
    return combined_loss(recon.loss, sampling,
                         static_cast<Real>(cfg.lambda));
  };
}

// Snapshot of the forward pass at the current parameters, for freezing
// stop-gradient inputs.
template <typename Real>
struct FrozenForward {
  Tensor<Real> tokens_with_pos;  // N x d
  Tensor<Real> per_token_err;    // |I_m|
};

template <typename Real>
FrozenForward<Real> capture_forward(ModelState<Real>& state,
                                    const VideoTensor<Real>& video,
                                    const MaskSpec& mask) {
  Tape<Real> tape(/*grad_enabled=*/false);
  ParamBinding<Real> p = bind(state.params, tape);
  TokenBatch<Real> batch = tokenize(tape, video, state.geom,
                                    p[state.mae.embed_w],
                                    p[state.mae.embed_b]);
  apply_positional_encoding(batch, state.pos_enc);
  Var<Real> x_visible = gather_rows(batch.tokens, mask.visible);
  Var<Real> f_visible = encode(x_visible, p, state.mae);
  Var<Real> f =
      assemble_decoder_input(f_visible, mask, p, state.mae, state.pos_dec);
  Var<Real> predictions = decode(f, p, state.mae);
  TargetPatches<Real> targets = patch_normalize(
      video, state.geom, static_cast<Real>(state.config.patch_norm_eps));
  ReconstructionResult<Real> recon = reconstruction_loss(
      predictions, targets, mask, state.config.recon_loss_kind());
  return FrozenForward<Real>{batch.tokens.value(),
                             recon.per_token_err.value()};
}

struct FullGradCheckResult {
  GradCheckResult recon_wrt_phi;
  GradCheckResult sampling_wrt_theta;
  GradCheckResult combined_wrt_all;

  double worst() const {
    return std::max({recon_wrt_phi.max_rel_err,
                     sampling_wrt_theta.max_rel_err,
                     combined_wrt_all.max_rel_err});
  }
};

// Gradient checks on a fresh model from `cfg`: L_R over phi, L_S over
// theta, and the combined loss over every parameter, each against central
// finite differences.
//
// Probes run in extended precision with Richardson extrapolation; plain
// double differences bottom out around |a-b| ~ 1e-11 (cancellation at
// f ~ O(1)), which the 1e-8 relative-error floor cannot absorb for the many
// near-zero gradient coordinates a freshly initialized transformer has.
// Each coordinate is probed once: the combined loss splits into
// L_R(phi) + lambda*L_S(theta) with the cross terms frozen, so the same
// central difference serves both the per-partition check and the combined
// check (constants cancel).
template <typename Real>
FullGradCheckResult run_gradcheck(const RunConfig& cfg, std::uint64_t seed,
                                  double h = 1e-5) {
  RunConfig local = cfg;
  local.seed = seed;
  ModelState<Real> state = init_model_state<Real>(local);
  Rng rng(seed ^ 0x5eedULL);
  // A random video exercises every parameter without needing sprite
  // structure.
  VideoTensor<Real> video = VideoTensor<Real>::zeros(
      local.channels, local.frames, local.height, local.width);
  for (std::size_t i = 0; i < video.data.numel(); ++i)
    video.data[i] = static_cast<Real>(0.5 + 0.25 * rng.normal());
  Tensor<Real> probs = score_video(state, video);
  MaskSpec mask = sample_visible_from(probs, local.rho, rng);
  FrozenForward<Real> frozen = capture_forward(state, video, mask);

  // Analytic gradients of the three losses.
  auto analytic_of = [&](LossKind kind) {
    Tape<Real> tape;
    ParamBinding<Real> binding = bind(state.params, tape);
    Var<Real> loss = frozen_loss_fn(state, video, mask, kind,
                                    frozen.tokens_with_pos,
                                    frozen.per_token_err)(tape, binding);
    check(std::isfinite(static_cast<double>(loss.value()[0])),
          "run_gradcheck: non-finite loss");
    return gradients(tape, loss, binding);
  };
  std::vector<Tensor<Real>> g_recon = analytic_of(LossKind::Recon);
  std::vector<Tensor<Real>> g_sampling = analytic_of(LossKind::Sampling);
  std::vector<Tensor<Real>> g_combined = analytic_of(LossKind::Combined);

  // Extended-precision mirror for the probes.
  ModelState<long double> mirror = init_model_state<long double>(local);
  for (std::size_t i = 0; i < state.params.size(); ++i)
    mirror.params[i].value =
        Tensor<long double>::cast_from(state.params[i].value);
  VideoTensor<long double> video_hd{
      video.channels, video.frames, video.height, video.width,
      Tensor<long double>::cast_from(video.data)};
  ScalarFn<long double> recon_hd =
      frozen_loss_fn(mirror, video_hd, mask, LossKind::Recon);
  ScalarFn<long double> sampling_hd = frozen_loss_fn(
      mirror, video_hd, mask, LossKind::Sampling,
      Tensor<long double>::cast_from(frozen.tokens_with_pos),
      Tensor<long double>::cast_from(frozen.per_token_err));

  auto probe = [&](const ScalarFn<long double>& f_hd, std::size_t p,
                   std::size_t i) -> double {
    Tensor<long double>& value = mirror.params[p].value;
    const long double saved = value[i];
    auto eval = [&]() -> long double {
      Tape<long double> t(/*grad_enabled=*/false);
      ParamBinding<long double> b = bind(mirror.params, t);
      return f_hd(t, b).value()[0];
    };
    auto central = [&](long double step) -> long double {
      value[i] = saved + step;
      const long double fp = eval();
      value[i] = saved - step;
      const long double fm = eval();
      value[i] = saved;
      return (fp - fm) / (2.0L * step);
    };
    const auto step = static_cast<long double>(h);
    const long double d1 = central(step);
    const long double d2 = central(step / 2.0L);
    return static_cast<double>((4.0L * d2 - d1) / 3.0L);
  };

  auto update = [&](GradCheckResult& res, double a, double numeric,
                    std::size_t p, std::size_t i) {
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_param = state.params[p].name;
      res.worst_index = i;
      res.analytic = a;
      res.numeric = numeric;
    }
  };

  FullGradCheckResult out;
  for (std::size_t p : state.phi_indices)
    for (std::size_t i = 0; i < state.params[p].value.numel(); ++i) {
      const double numeric = probe(recon_hd, p, i);
      update(out.recon_wrt_phi, static_cast<double>(g_recon[p][i]), numeric,
             p, i);
      update(out.combined_wrt_all, static_cast<double>(g_combined[p][i]),
             numeric, p, i);
    }
  for (std::size_t p : state.theta_indices)
    for (std::size_t i = 0; i < state.params[p].value.numel(); ++i) {
      const double numeric = probe(sampling_hd, p, i);
      update(out.sampling_wrt_theta, static_cast<double>(g_sampling[p][i]),
             numeric, p, i);
      update(out.combined_wrt_all, static_cast<double>(g_combined[p][i]),
             numeric * local.lambda, p, i);
    }
  return out;
}

}  // namespace adamae
