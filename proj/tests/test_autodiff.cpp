#include <doctest.h>

#include <functional>

#include "adamae/autodiff.hpp"
#include "adamae/gradcheck.hpp"

using namespace adamae;

namespace {

using BuildFn =
    std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

// Finite-difference check of one kernel: scalar = sum(weights * op(inputs)).
double fd_worst(const BuildFn& build, std::vector<Tensor<double>> inputs,
                double h = 1e-6) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (auto& t : inputs) vars.push_back(make_leaf(tape, t, true));
  Var<double> loss = build(tape, vars);
  tape.backward(loss.id);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(vars.size());
  for (auto& v : vars) analytic.push_back(tape.grad_or_zero(v.id));

  double worst = 0.0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (std::size_t i = 0; i < inputs[p].numel(); ++i) {
      auto eval = [&](double delta) {
        Tape<double> t2(false);
        std::vector<Var<double>> vs;
        for (std::size_t q = 0; q < inputs.size(); ++q) {
          Tensor<double> tt = inputs[q];
          if (q == p) tt[i] += delta;
          vs.push_back(make_leaf(t2, tt, false));
        }
        return build(t2, vs).value()[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

Var<double> weighted(Tape<double>& t, Var<double> x, std::uint64_t seed) {
  Rng wr(seed);
  Tensor<double> w = Tensor<double>::randn(x.value().shape(), wr);
  return sum(mul(x, make_constant(t, w)));
}

}  // namespace

TEST_CASE("backward of a linear form returns the weights") {
  Tape<double> tape;
  Tensor<double> xv({3}, {2.0, -1.0, 0.5});
  auto w = make_leaf(tape, Tensor<double>({3}, {1.0, 1.0, 1.0}), true);
  auto x = make_constant(tape, xv);
  auto loss = sum(mul(w, x));
  tape.backward(loss.id);
  const Tensor<double>& g = tape.grad(w.id);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == xv[i]);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tape;
  auto w = make_leaf(tape, Tensor<double>({3}, 1.0), true);
  auto y = scale(w, 2.0);
  CHECK_THROWS_AS(tape.backward(y.id), ShapeError);
}

TEST_CASE("detach preserves values and is idempotent") {
  Tape<double> tape;
  auto x = make_leaf(tape, Tensor<double>({2}, {3.0, 4.0}), true);
  auto d1 = detach(x);
  auto d2 = detach(d1);
  CHECK(d1.value()[0] == 3.0);
  CHECK(d1.value()[1] == 4.0);
  CHECK(d2.value()[0] == 3.0);
  CHECK(d1.is_detached());
  CHECK(d2.is_detached());
  CHECK(!d1.requires_grad());
}

TEST_CASE("gradients through a detached edge are exactly zero") {
  Tape<double> tape;
  auto x = make_leaf(tape, Tensor<double>({2}, {2.0, 5.0}), true);
  auto y = make_leaf(tape, Tensor<double>({2}, {7.0, -3.0}), true);
  auto loss = sum(mul(detach(x), y));
  tape.backward(loss.id);
  const Tensor<double> gx = tape.grad_or_zero(x.id);
  // bitwise zero, not merely small
  for (std::size_t i = 0; i < 2; ++i) CHECK(gx[i] == 0.0);
  const Tensor<double>& gy = tape.grad(y.id);
  CHECK(gy[0] == 2.0);
  CHECK(gy[1] == 5.0);
}

TEST_CASE("every kernel backward matches central finite differences") {
  Rng rng(7);
  auto randt = [&](Shape s) { return Tensor<double>::randn(s, rng); };
  const double tol = 1e-4;

  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, add(v[0], v[1]), 1); },
                 {randt({3, 4}), randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, sub(v[0], v[1]), 2); },
                 {randt({3, 4}), randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, mul(v[0], v[1]), 3); },
                 {randt({3, 4}), randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, scale(v[0], -2.5), 4); },
                 {randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, matmul(v[0], v[1]), 5); },
                 {randt({3, 4}), randt({4, 5})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, transpose(v[0]), 6); },
                 {randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, reshape(v[0], {4, 3}), 7); },
                 {randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, add_row_vector(v[0], v[1]), 8); },
                 {randt({3, 4}), randt({4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, gather_rows(v[0], {2, 0, 2}), 9); },
                 {randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, concat_rows(v[0], v[1]), 10); },
                 {randt({2, 4}), randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, slice_cols(v[0], 1, 2), 11); },
                 {randt({3, 5})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, concat_cols(v[0], v[1]), 12); },
                 {randt({3, 2}), randt({3, 3})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, broadcast_row(v[0], 5), 13); },
                 {randt({4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, gelu(v[0]), 14); },
                 {randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, abs(v[0]), 15); },
                 {randt({3, 4})}) < tol);
  {
    Tensor<double> pos = randt({3, 4});
    for (std::size_t i = 0; i < pos.numel(); ++i)
      pos[i] = std::abs(pos[i]) + 0.5;
    CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, log(v[0]), 16); },
                   {pos}) < tol);
  }
  CHECK(fd_worst([](auto& t, auto& v) { return weighted(t, softmax_rows(v[0]), 17); },
                 {randt({3, 4})}) < tol);
  CHECK(fd_worst(
            [](auto& t, auto& v) {
              return weighted(t, layer_norm_rows(v[0], v[1], v[2], 1e-6), 18);
            },
            {randt({3, 4}), randt({4}), randt({4})}) < tol);
  CHECK(fd_worst(
            [](auto& t, auto& v) {
              return weighted(t, reshape(row_mean(v[0]), {3, 1}), 19);
            },
            {randt({3, 4})}) < tol);
  CHECK(fd_worst([](auto& t, auto& v) { return sum(v[0]); }, {randt({3, 4})}) <
        tol);
  CHECK(fd_worst(
            [](auto& t, auto& v) {
              return cross_entropy_mean(v[0], {1, 0, 2});
            },
            {randt({3, 4})}) < tol);
}

TEST_CASE("two-layer net gradients match finite differences") {
  Rng rng(11);
  ParamSet<double> params;
  params.add("w1", Partition::Mae, true, Tensor<double>::randn({4, 8}, rng, 0.5));
  params.add("b1", Partition::Mae, false, Tensor<double>::randn({8}, rng, 0.1));
  params.add("w2", Partition::Mae, true, Tensor<double>::randn({8, 2}, rng, 0.5));
  params.add("b2", Partition::Mae, false, Tensor<double>::randn({2}, rng, 0.1));
  Tensor<double> x = Tensor<double>::randn({5, 4}, rng);
  Tensor<double> target = Tensor<double>::randn({5, 2}, rng);

  ScalarFn<double> f = [&](Tape<double>& t, const ParamBinding<double>& p) {
    auto h = gelu(add_row_vector(matmul(make_constant(t, x), p[0]), p[1]));
    auto y = add_row_vector(matmul(h, p[2]), p[3]);
    auto r = sub(y, make_constant(t, target));
    return scale(sum(mul(r, r)), 0.1);
  };
  GradCheckResult res = grad_check(f, params, 1e-5);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check on a quadratic is nearly exact") {
  Rng rng(13);
  ParamSet<double> params;
  params.add("p", Partition::Mae, true, Tensor<double>::randn({6}, rng));
  ScalarFn<double> f = [](Tape<double>& t, const ParamBinding<double>& p) {
    (void)t;
    return sum(mul(p[0], p[0]));
  };
  GradCheckResult res = grad_check(f, params, 1e-5);
  CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("grad_check rejects bad h and non-finite losses") {
  ParamSet<double> params;
  params.add("p", Partition::Mae, true, Tensor<double>({2}, 1.0));
  ScalarFn<double> f = [](Tape<double>& t, const ParamBinding<double>& p) {
    (void)t;
    return sum(p[0]);
  };
  CHECK_THROWS_AS((void)grad_check(f, params, 0.0), Error);
  ScalarFn<double> bad = [](Tape<double>& t, const ParamBinding<double>& p) {
    auto inf = make_constant(
        t, Tensor<double>({2}, std::numeric_limits<double>::infinity()));
    return sum(mul(p[0], inf));
  };
  CHECK_THROWS_AS((void)grad_check(bad, params, 1e-5), Error);
}

TEST_CASE("gradient accumulation order is deterministic") {
  auto run = []() {
    Rng rng(17);
    Tape<double> tape;
    auto w = make_leaf(tape, Tensor<double>::randn({6, 6}, rng), true);
    Var<double> acc;
    // several overlapping uses of w force repeated accumulation
    for (int k = 0; k < 4; ++k) {
      auto g = gather_rows(w, {0, 2, 4});
      auto piece = sum(mul(g, g));
      acc = (k == 0) ? piece : add(acc, piece);
    }
    auto loss = add(acc, sum(mul(w, w)));
    tape.backward(loss.id);
    return tape.grad(w.id);
  };
  Tensor<double> a = run();
  Tensor<double> b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("absent parameters get exact zero gradients") {
  Tape<double> tape;
  ParamSet<double> params;
  params.add("used", Partition::Mae, true, Tensor<double>({2}, 1.5));
  params.add("unused", Partition::Mae, true, Tensor<double>({3}, 2.5));
  auto binding = bind(params, tape);
  auto loss = sum(mul(binding[0], binding[0]));
  auto grads = gradients(tape, loss, binding);
  CHECK(grads[0][0] == 3.0);
  CHECK(grads[1].shape() == Shape{3});
  for (std::size_t i = 0; i < 3; ++i) CHECK(grads[1][i] == 0.0);
}
