#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "adamae/autodiff.hpp"

namespace adamae {

// Pre-training hyperparameters. `base_lr` is scaled by batch_size/256
// before use (disable with lr_scale_by_batch=false); warmup/total are held
// in steps so toy runs stay meaningful, with epoch fields as the scale-free
// way to derive them from a dataset.
struct OptimHyper {
  double base_lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 5e-2;
  bool lr_scale_by_batch = true;
  std::size_t batch_size = 8;
  std::size_t warmup_steps = 100;
  std::size_t total_steps = 2000;

  double effective_base_lr() const {
    return lr_scale_by_batch
               ? base_lr * static_cast<double>(batch_size) / 256.0
               : base_lr;
  }
};

// Linear warmup from zero, then half-cosine decay to zero at total_steps.
inline double lr_schedule(std::size_t step, const OptimHyper& h) {
  const double base = h.effective_base_lr();
  if (h.warmup_steps > 0 && step < h.warmup_steps)
    return base * static_cast<double>(step) /
           static_cast<double>(h.warmup_steps);
  if (step >= h.total_steps) return 0.0;
  const double span =
      static_cast<double>(h.total_steps - h.warmup_steps);
  const double t = span > 0.0
                       ? static_cast<double>(step - h.warmup_steps) / span
                       : 1.0;
  return base * 0.5 * (1.0 + std::cos(M_PI * t));
}

// Decoupled-weight-decay adaptive moments, bias-corrected. State is stored
// in 64-bit regardless of the parameter precision so checkpoints round-trip
// exactly.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  template <typename Real>
  void init(const ParamSet<Real>& params) {
    m.resize(params.size());
    v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i].value.numel(), 0.0);
      v[i].assign(params[i].value.numel(), 0.0);
    }
    t = 0;
  }
};

// One update over the given parameter indices. Weight decay is applied only
// to decay-eligible parameters (not biases, norms, or the mask token).
template <typename Real>
void adamw_step(ParamSet<Real>& params, const std::vector<Tensor<Real>>& grads,
                AdamWState& state, const OptimHyper& h, double lr,
                const std::vector<std::size_t>& indices) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t p : indices) {
    Tensor<Real>& value = params[p].value;
    const Tensor<Real>& g = grads[p];
    check_shape(g.numel() == value.numel(), "adamw: gradient shape mismatch");
    std::vector<double>& m = state.m[p];
    std::vector<double>& v = state.v[p];
    const double wd = params[p].weight_decay ? h.weight_decay : 0.0;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double x = static_cast<double>(value[i]);
      x -= lr * (mhat / (std::sqrt(vhat) + h.eps) + wd * x);
      value[i] = static_cast<Real>(x);
    }
  }
}

template <typename Real>
bool grads_finite(const std::vector<Tensor<Real>>& grads,
                  const std::vector<std::size_t>& indices) {
  for (std::size_t p : indices)
    if (!grads[p].all_finite()) return false;
  return true;
}

}  // namespace adamae
