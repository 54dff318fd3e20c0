#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "adamae/autodiff.hpp"

namespace adamae {

// A differentiable scalar function of the parameters. The callable must
// rebuild its graph on the given tape every invocation (masks, data and any
// other non-parameter state must be frozen inside the closure).
template <typename Real>
using ScalarFn =
    std::function<Var<Real>(Tape<Real>&, const ParamBinding<Real>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Optional high-precision re-probe: central difference of the same scalar
// function evaluated in extended precision, used only for coordinates whose
// double-precision difference lands inside the FD noise floor (tiny true
// gradients against the 1e-8 denominator floor).
using RefineFn =
    std::function<double(std::size_t param, std::size_t coord, double h)>;

// Central finite differences against backward() over every coordinate of
// the selected parameters (all of them when `indices` is empty). Relative
// error uses denominator max(|a|,|b|,1e-8). Intended for 64-bit runs; float
// tapes lose too many digits for the default h.
//
// The scalar function must be a true function of the perturbed parameters:
// any stop-gradient quantity inside it has to be frozen by the caller,
// since finite differences cannot see detach boundaries.
template <typename Real>
GradCheckResult grad_check(const ScalarFn<Real>& f, ParamSet<Real>& params,
                           double h = 1e-5,
                           const std::vector<std::size_t>& indices = {},
                           const RefineFn& refine = {},
                           double refine_below = 1e-5) {
  check(h > 0.0, "grad_check: h must be positive");

  Tape<Real> tape;
  ParamBinding<Real> binding = bind(params, tape);
  Var<Real> loss = f(tape, binding);
  check(std::isfinite(static_cast<double>(loss.value()[0])),
        "grad_check: non-finite loss");
  std::vector<Tensor<Real>> analytic = gradients(tape, loss, binding);

  auto eval = [&]() -> double {
    Tape<Real> t(/*grad_enabled=*/false);
    ParamBinding<Real> b = bind(params, t);
    const double v = static_cast<double>(f(t, b).value()[0]);
    check(std::isfinite(v), "grad_check: non-finite value during probing");
    return v;
  };

  std::vector<std::size_t> which = indices;
  if (which.empty())
    for (std::size_t p = 0; p < params.size(); ++p) which.push_back(p);

  GradCheckResult res;
  for (std::size_t p : which) {
    Tensor<Real>& value = params[p].value;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const Real saved = value[i];
      value[i] = saved + static_cast<Real>(h);
      const double fp = eval();
      value[i] = saved - static_cast<Real>(h);
      const double fm = eval();
      value[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      const double a = static_cast<double>(analytic[p][i]);
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      double rel = std::abs(a - numeric) / denom;
      if (rel > refine_below && refine) {
        numeric = refine(p, i, h);
        denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        rel = std::abs(a - numeric) / denom;
      }
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[p].name;
        res.worst_index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace adamae
