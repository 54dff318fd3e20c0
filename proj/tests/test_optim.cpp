#include <doctest.h>

#include <cmath>

#include "adamae/optim.hpp"

using namespace adamae;

namespace {

ParamSet<double> single_scalar(double x0, bool decay = true) {
  ParamSet<double> p;
  p.add("x", Partition::Mae, decay, Tensor<double>({1}, x0));
  return p;
}

}  // namespace

TEST_CASE("zero gradients and zero decay leave parameters unchanged") {
  ParamSet<double> params = single_scalar(1.5);
  AdamWState state;
  state.init(params);
  OptimHyper h;
  h.weight_decay = 0.0;
  std::vector<Tensor<double>> grads = {Tensor<double>({1}, 0.0)};
  for (int i = 0; i < 10; ++i)
    adamw_step(params, grads, state, h, 0.1, {0});
  CHECK(params[0].value[0] == 1.5);
}

TEST_CASE("first step has bias-corrected magnitude lr") {
  ParamSet<double> params = single_scalar(0.0);
  AdamWState state;
  state.init(params);
  OptimHyper h;
  h.beta1 = 0.9;
  h.beta2 = 0.95;
  h.weight_decay = 0.0;
  const double lr = 0.37;
  std::vector<Tensor<double>> grads = {Tensor<double>({1}, 1.0)};
  adamw_step(params, grads, state, h, lr, {0});
  CHECK(params[0].value[0] == doctest::Approx(-lr).epsilon(1e-6));
}

TEST_CASE("adamw minimizes a 1-D quadratic") {
  ParamSet<double> params = single_scalar(1.0);
  AdamWState state;
  state.init(params);
  OptimHyper h;
  h.weight_decay = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double x = params[0].value[0];
    std::vector<Tensor<double>> grads = {Tensor<double>({1}, 2.0 * x)};
    adamw_step(params, grads, state, h, 0.1, {0});
  }
  CHECK(std::abs(params[0].value[0]) < 1e-2);
}

TEST_CASE("weight decay applies only to flagged parameters") {
  ParamSet<double> params;
  params.add("w", Partition::Mae, true, Tensor<double>({1}, 2.0));
  params.add("b", Partition::Mae, false, Tensor<double>({1}, 2.0));
  AdamWState state;
  state.init(params);
  OptimHyper h;
  h.weight_decay = 0.5;
  std::vector<Tensor<double>> grads = {Tensor<double>({1}, 0.0),
                                       Tensor<double>({1}, 0.0)};
  adamw_step(params, grads, state, h, 0.1, {0, 1});
  CHECK(params[0].value[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
  CHECK(params[1].value[0] == 2.0);
}

TEST_CASE("learning rate schedule endpoints") {
  OptimHyper h;
  h.base_lr = 0.1;
  h.batch_size = 256;  // scale factor 1
  h.warmup_steps = 100;
  h.total_steps = 1000;
  CHECK(lr_schedule(0, h) == 0.0);
  CHECK(lr_schedule(100, h) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(std::abs(lr_schedule(1000, h)) < 1e-12);
  // halfway through the cosine leg
  CHECK(lr_schedule(550, h) == doctest::Approx(0.05).epsilon(1e-12));
  // monotone decay after warmup
  for (std::size_t s = 100; s < 1000; s += 50)
    CHECK(lr_schedule(s, h) >= lr_schedule(s + 50, h));
}

TEST_CASE("base lr scales with batch size over 256") {
  OptimHyper h;
  h.base_lr = 1.5e-4;
  h.batch_size = 8;
  h.warmup_steps = 10;
  h.total_steps = 100;
  CHECK(h.effective_base_lr() == doctest::Approx(1.5e-4 * 8.0 / 256.0));
  h.lr_scale_by_batch = false;
  CHECK(h.effective_base_lr() == doctest::Approx(1.5e-4));
}

TEST_CASE("grads_finite flags NaN and Inf") {
  std::vector<Tensor<double>> grads = {Tensor<double>({2}, 1.0)};
  CHECK(grads_finite(grads, {0}));
  grads[0][1] = std::nan("");
  CHECK(!grads_finite(grads, {0}));
  grads[0][1] = std::numeric_limits<double>::infinity();
  CHECK(!grads_finite(grads, {0}));
}
