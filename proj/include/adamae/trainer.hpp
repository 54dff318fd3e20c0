#pragma once

#include <chrono>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "adamae/config.hpp"
#include "adamae/data.hpp"
#include "adamae/maskers.hpp"
#include "adamae/model.hpp"
#include "adamae/optim.hpp"

namespace adamae {

// Everything a run owns: parameters (phi + theta), optimizer moments, the
// training rng stream and the step counter. Checkpoints capture all of it.
template <typename Real>
struct ModelState {
  using RealType = Real;

  RunConfig config;
  PatchGeometry geom;
  ParamSet<Real> params;
  MaeRefs mae;
  SamplerRefs sampler;
  AdamWState opt;
  Rng rng;
  std::uint64_t step = 0;
  Tensor<Real> pos_enc;  // N x dim, encoder/sampler side
  Tensor<Real> pos_dec;  // N x dec_dim, independent table at decoder width
  std::vector<std::size_t> phi_indices, theta_indices;
};

template <typename Real>
ModelState<Real> init_model_state(const RunConfig& cfg) {
  cfg.validate();
  ModelState<Real> s;
  s.config = cfg;
  s.geom = cfg.geometry();
  Rng master(cfg.seed);
  Rng init_rng = master.fork(1);
  s.mae = register_mae(s.params, cfg.arch, s.geom.cube_size, init_rng);
  s.sampler = register_sampler(s.params, cfg.arch.dim, cfg.sampler_arch(),
                               init_rng);
  s.opt.init(s.params);
  s.rng = master.fork(2);
  s.pos_enc = make_positional_table<Real>(s.geom, cfg.arch.dim,
                                          cfg.pos_encoding_kind());
  s.pos_dec = make_positional_table<Real>(s.geom, cfg.arch.dec_dim,
                                          cfg.pos_encoding_kind());
  for (std::size_t i = 0; i < s.params.size(); ++i) {
    if (s.params[i].partition == Partition::Mae)
      s.phi_indices.push_back(i);
    else
      s.theta_indices.push_back(i);
  }
  return s;
}

struct StepMetrics {
  std::uint64_t step = 0;
  double loss_recon = 0.0;
  double loss_sampling = 0.0;
  double lr = 0.0;
  double fg_mass = 0.0;
  double ms_per_step = 0.0;
};

inline std::size_t worker_threads(std::size_t batch) {
  std::size_t cap = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("ADAMAE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    cap = v > 0 ? static_cast<std::size_t>(v) : 1;
  }
  if (cap < 1) cap = 1;
  return std::min(cap, std::max<std::size_t>(batch, 1));
}

namespace detail {

template <typename Real>
struct ElementResult {
  std::vector<Tensor<Real>> grads;
  double loss_recon = 0.0;
  double loss_sampling = 0.0;
  double fg_mass = 0.0;
};

// One training example through the Alg.-2 sequence: tokenize, add
// positions, score, sample, gather visible, encode, assemble, decode,
// reconstruction loss, sampling loss on detached errors, combined loss,
// backward.
template <typename Real>
ElementResult<Real> element_pass(ModelState<Real>& state,
                                 const VideoTensor<Real>& video,
                                 const ActivityMask& activity,
                                 std::uint64_t mask_seed,
                                 std::vector<std::string>* trace) {
  const RunConfig& cfg = state.config;
  auto stage = [trace](const char* name) {
    if (trace) trace->emplace_back(name);
  };

  Tape<Real> tape;
  ParamBinding<Real> p = bind(state.params, tape);
  const bool adaptive = cfg.strategy == "adaptive";

  stage("tokenize");
  TokenBatch<Real> batch = tokenize(tape, video, state.geom,
                                    p[state.mae.embed_w],
                                    p[state.mae.embed_b]);
  stage("pos_encode");
  apply_positional_encoding(batch, state.pos_enc);

  Rng mask_rng(mask_seed);
  ProbabilityMap<Real> pmap;
  MaskSpec spec;
  if (adaptive) {
    stage("score_tokens");
    pmap = score_tokens(batch, p, state.sampler);
    stage("sample");
    spec = sample_visible(pmap, cfg.rho, mask_rng);
  } else {
    stage("sample");
    if (cfg.strategy == "patch")
      spec = random_patch_mask(state.geom, cfg.rho, mask_rng);
    else if (cfg.strategy == "tube")
      spec = tube_mask(state.geom, cfg.rho, mask_rng);
    else if (cfg.strategy == "frame")
      spec = frame_mask(state.geom, cfg.rho, mask_rng);
    else
      throw ConfigError("unknown masking strategy: " + cfg.strategy);
  }

  stage("gather_visible");
  Var<Real> x_visible = gather_rows(batch.tokens, spec.visible);
  stage("encode");
  Var<Real> f_visible = encode(x_visible, p, state.mae);
  stage("assemble");
  Var<Real> f = assemble_decoder_input(f_visible, spec, p, state.mae,
                                       state.pos_dec);
  stage("decode");
  Var<Real> predictions = decode(f, p, state.mae);

  TargetPatches<Real> targets = patch_normalize(
      video, state.geom, static_cast<Real>(cfg.patch_norm_eps));
  stage("reconstruction_loss");
  ReconstructionResult<Real> recon = reconstruction_loss(
      predictions, targets, spec, cfg.recon_loss_kind());

  Var<Real> loss_sampling;
  if (adaptive) {
    stage("sampling_loss");
    loss_sampling = sampling_loss(pmap, spec.masked, recon.detached_err(),
                                  cfg.sampling_form());
  } else {
    loss_sampling = make_constant(tape, Tensor<Real>({1}, Real(0)));
  }
  stage("combined_loss");
  Var<Real> loss = combined_loss(recon.loss, loss_sampling,
                                 static_cast<Real>(cfg.lambda));
  stage("backward");

  ElementResult<Real> out;
  out.grads = gradients(tape, loss, p);
  out.loss_recon = static_cast<double>(recon.loss.value()[0]);
  out.loss_sampling = static_cast<double>(loss_sampling.value()[0]);
  out.fg_mass = adaptive
                    ? foreground_probability_mass(pmap.values(), activity)
                    : activity.fraction();
  return out;
}

}  // namespace detail

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  // Stage names of batch element 0 are appended here every step.
  std::vector<std::string>* trace = nullptr;
};

// The pre-training loop. Batch elements run on worker threads (capped by
// ADAMAE_THREADS) with an index-ordered gradient reduction, so results are
// bit-identical for any thread count. Non-finite gradients skip the update
// and abort after three consecutive bad steps.
template <typename Real>
void pretrain(ModelState<Real>& state, const Corpus<Real>& corpus,
              std::size_t steps, std::vector<StepMetrics>* metrics = nullptr,
              const TrainHooks* hooks = nullptr) {
  check(corpus.size() > 0, "pretrain: empty corpus");
  const RunConfig& cfg = state.config;
  const std::size_t batch = std::max<std::size_t>(cfg.optim.batch_size, 1);
  const std::size_t workers = worker_threads(batch);
  const bool update_sampler =
      cfg.strategy == "adaptive" && cfg.lambda > 0.0;

  std::vector<std::size_t> update_indices;
  if (!cfg.freeze_mae)
    update_indices.insert(update_indices.end(), state.phi_indices.begin(),
                          state.phi_indices.end());
  if (update_sampler)
    update_indices.insert(update_indices.end(), state.theta_indices.begin(),
                          state.theta_indices.end());

  int consecutive_bad = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(state.step, cfg.optim);

    // Draw all per-element randomness up front, in index order, so worker
    // scheduling cannot perturb the stream.
    std::vector<std::size_t> sample_idx(batch);
    std::vector<std::uint64_t> mask_seeds(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      sample_idx[b] = static_cast<std::size_t>(
          state.rng.uniform_index(corpus.size()));
      mask_seeds[b] = state.rng.next_u64();
    }

    std::vector<detail::ElementResult<Real>> results(batch);
    std::vector<std::string> trace_local;
    auto run_element = [&](std::size_t b) {
      results[b] = detail::element_pass(
          state, corpus.videos[sample_idx[b]], corpus.activity[sample_idx[b]],
          mask_seeds[b],
          (b == 0 && hooks && hooks->trace) ? &trace_local : nullptr);
    };

    if (workers <= 1) {
      for (std::size_t b = 0; b < batch; ++b) run_element(b);
    } else {
      std::exception_ptr first_error;
      std::vector<std::thread> pool;
      std::mutex err_mutex;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
          for (std::size_t b = w; b < batch; b += workers) {
            try {
              run_element(b);
            } catch (...) {
              std::lock_guard<std::mutex> lock(err_mutex);
              if (!first_error) first_error = std::current_exception();
            }
          }
        });
      }
      for (auto& t : pool) t.join();
      if (first_error) std::rethrow_exception(first_error);
    }

    // Index-ordered reduction, then average.
    std::vector<Tensor<Real>> grads = std::move(results[0].grads);
    for (std::size_t b = 1; b < batch; ++b)
      for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t k = 0; k < grads[i].numel(); ++k)
          grads[i][k] += results[b].grads[i][k];
    const Real inv_batch = Real(1) / static_cast<Real>(batch);
    for (auto& g : grads)
      for (std::size_t k = 0; k < g.numel(); ++k) g[k] *= inv_batch;

    StepMetrics m;
    m.step = state.step;
    m.lr = lr;
    for (std::size_t b = 0; b < batch; ++b) {
      m.loss_recon += results[b].loss_recon;
      m.loss_sampling += results[b].loss_sampling;
      m.fg_mass += results[b].fg_mass;
    }
    m.loss_recon /= static_cast<double>(batch);
    m.loss_sampling /= static_cast<double>(batch);
    m.fg_mass /= static_cast<double>(batch);

    if (!grads_finite(grads, update_indices)) {
      ++consecutive_bad;
      std::cerr << "adamae: non-finite gradients at step " << state.step
                << "; update skipped (" << consecutive_bad << "/3)\n";
      if (consecutive_bad >= 3)
        throw NumericError(
            "aborting: three consecutive non-finite gradient steps, last at "
            "step " + std::to_string(state.step));
    } else {
      consecutive_bad = 0;
      adamw_step(state.params, grads, state.opt, cfg.optim, lr,
                 update_indices);
    }

    state.step += 1;
    const auto t1 = std::chrono::steady_clock::now();
    m.ms_per_step =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (hooks && hooks->trace)
      hooks->trace->insert(hooks->trace->end(), trace_local.begin(),
                           trace_local.end());
    if (metrics) metrics->push_back(m);
    if (hooks && hooks->on_step) hooks->on_step(m);
  }
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

// Probability map of one video (no gradients).
template <typename Real>
Tensor<Real> score_video(ModelState<Real>& state,
                         const VideoTensor<Real>& video) {
  Tape<Real> tape(/*grad_enabled=*/false);
  ParamBinding<Real> p = bind(state.params, tape);
  TokenBatch<Real> batch = tokenize(tape, video, state.geom,
                                    p[state.mae.embed_w],
                                    p[state.mae.embed_b]);
  apply_positional_encoding(batch, state.pos_enc);
  return score_tokens(batch, p, state.sampler).values();
}

template <typename Real>
struct EvalResult {
  Tensor<Real> probabilities;  // N (adaptive scores, always computed)
  MaskSpec mask;
  Tensor<Real> predictions;  // N x cube_size, patch-normalized space
  double loss_recon = 0.0;
};

// Full forward pass under a chosen masking strategy, without gradients.
template <typename Real>
EvalResult<Real> evaluate_video(ModelState<Real>& state,
                                const VideoTensor<Real>& video,
                                const std::string& strategy, double rho,
                                Rng& rng) {
  Tape<Real> tape(/*grad_enabled=*/false);
  ParamBinding<Real> p = bind(state.params, tape);
  TokenBatch<Real> batch = tokenize(tape, video, state.geom,
                                    p[state.mae.embed_w],
                                    p[state.mae.embed_b]);
  apply_positional_encoding(batch, state.pos_enc);

  EvalResult<Real> out;
  ProbabilityMap<Real> pmap = score_tokens(batch, p, state.sampler);
  out.probabilities = pmap.values();
  if (strategy == "adaptive")
    out.mask = sample_visible(pmap, rho, rng);
  else if (strategy == "patch")
    out.mask = random_patch_mask(state.geom, rho, rng);
  else if (strategy == "tube")
    out.mask = tube_mask(state.geom, rho, rng);
  else if (strategy == "frame")
    out.mask = frame_mask(state.geom, rho, rng);
  else
    throw ConfigError("unknown masking strategy: " + strategy);

  Var<Real> x_visible = gather_rows(batch.tokens, out.mask.visible);
  Var<Real> f_visible = encode(x_visible, p, state.mae);
  Var<Real> f = assemble_decoder_input(f_visible, out.mask, p, state.mae,
                                       state.pos_dec);
  Var<Real> predictions = decode(f, p, state.mae);
  TargetPatches<Real> targets = patch_normalize(
      video, state.geom, static_cast<Real>(state.config.patch_norm_eps));
  ReconstructionResult<Real> recon = reconstruction_loss(
      predictions, targets, out.mask, state.config.recon_loss_kind());
  out.predictions = predictions.value();
  out.loss_recon = static_cast<double>(recon.loss.value()[0]);
  return out;
}

// Mean-pooled encoder representation over ALL tokens (masking ignored);
// the linear-probe feature.
template <typename Real>
Tensor<Real> pooled_features(ModelState<Real>& state,
                             const VideoTensor<Real>& video) {
  Tape<Real> tape(/*grad_enabled=*/false);
  ParamBinding<Real> p = bind(state.params, tape);
  TokenBatch<Real> batch = tokenize(tape, video, state.geom,
                                    p[state.mae.embed_w],
                                    p[state.mae.embed_b]);
  apply_positional_encoding(batch, state.pos_enc);
  Var<Real> f = encode(batch.tokens, p, state.mae);
  const Tensor<Real>& v = f.value();
  Tensor<Real> pooled({v.shape()[1]});
  for (std::size_t i = 0; i < v.shape()[0]; ++i)
    for (std::size_t j = 0; j < v.shape()[1]; ++j) pooled[j] += v.at(i, j);
  for (std::size_t j = 0; j < pooled.numel(); ++j)
    pooled[j] /= static_cast<Real>(v.shape()[0]);
  return pooled;
}

struct ProbeOptions {
  double train_fraction = 0.8;
  std::size_t epochs = 300;
  double lr = 0.02;
  std::uint64_t seed = 0;
  std::size_t classes = kDirectionClasses;
};

// Linear probe on frozen encoder features; returns top-1 accuracy on the
// held-out fraction.
template <typename Real>
double linear_probe(ModelState<Real>& state, const Corpus<Real>& corpus,
                    const ProbeOptions& opt = {}) {
  check(corpus.size() >= 2, "probe: corpus too small");
  for (Direction d : corpus.labels)
    check(static_cast<std::size_t>(d) < opt.classes,
          "probe: label outside class range");

  const std::size_t dim = state.config.arch.dim;
  std::vector<Tensor<Real>> features;
  features.reserve(corpus.size());
  for (const auto& video : corpus.videos)
    features.push_back(pooled_features(state, video));

  Rng rng(opt.seed);
  std::vector<std::size_t> order = rng.permutation(corpus.size());
  const std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(static_cast<double>(corpus.size()) *
                                  opt.train_fraction));
  check(n_train < corpus.size(), "probe: empty evaluation split");

  Tensor<Real> train_x({n_train, dim});
  std::vector<std::size_t> train_y(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t j = 0; j < dim; ++j)
      train_x.at(i, j) = features[order[i]][j];
    train_y[i] = static_cast<std::size_t>(corpus.labels[order[i]]);
  }

  ParamSet<Real> head;
  Rng init_rng = rng.fork(7);
  head.add("probe.w", Partition::Mae, true,
           Tensor<Real>::truncated_normal({dim, opt.classes}, init_rng,
                                          Real(0.02)));
  head.add("probe.b", Partition::Mae, false, Tensor<Real>({opt.classes}));
  AdamWState opt_state;
  opt_state.init(head);
  OptimHyper hyper;
  hyper.weight_decay = 0.0;
  const std::vector<std::size_t> all = {0, 1};

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Tape<Real> tape;
    ParamBinding<Real> p = bind(head, tape);
    Var<Real> x = make_constant(tape, train_x);
    Var<Real> logits = add_row_vector(matmul(x, p[0]), p[1]);
    Var<Real> loss = cross_entropy_mean(logits, train_y);
    std::vector<Tensor<Real>> grads = gradients(tape, loss, p);
    adamw_step(head, grads, opt_state, hyper, opt.lr, all);
  }

  std::size_t correct = 0, total = 0;
  const Tensor<Real>& w = head.value_of("probe.w");
  const Tensor<Real>& b = head.value_of("probe.b");
  for (std::size_t i = n_train; i < corpus.size(); ++i) {
    const Tensor<Real>& f = features[order[i]];
    std::size_t best = 0;
    Real best_score = Real(0);
    for (std::size_t k = 0; k < opt.classes; ++k) {
      Real s = b[k];
      for (std::size_t j = 0; j < dim; ++j) s += f[j] * w.at(j, k);
      if (k == 0 || s > best_score) {
        best_score = s;
        best = k;
      }
    }
    correct += best == static_cast<std::size_t>(corpus.labels[order[i]]);
    total += 1;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace adamae
