#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adamae/tensor.hpp"

namespace adamae {

// Reverse-mode tape. One tape per forward pass, confined to one thread.
// Nodes are stored in creation order; backward() sweeps them in reverse,
// which fixes the gradient accumulation order and makes runs bit-exact
// under a fixed seed.
template <typename Real>
class Tape {
 public:
  using NodeId = std::uint32_t;
  using BackwardFn = std::function<void(Tape&, const Tensor<Real>& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
    nodes_.reserve(256);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  NodeId leaf(Tensor<Real> value, bool requires_grad) {
    return push(std::move(value), requires_grad && grad_enabled_, false, {});
  }

  NodeId constant(Tensor<Real> value) {
    return push(std::move(value), false, false, {});
  }

  NodeId detach_node(NodeId src) {
    return push(nodes_[src].value, false, true, {});
  }

  const Tensor<Real>& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  bool is_detached(NodeId id) const { return nodes_[id].detached; }

  // Registers an op result whose gradient is needed.
  NodeId op(Tensor<Real> value, BackwardFn backward) {
    return push(std::move(value), true, false, std::move(backward));
  }

  // Registers an op result outside the differentiated set.
  NodeId op_nograd(Tensor<Real> value) {
    return push(std::move(value), false, false, {});
  }

  void accumulate(NodeId id, const Tensor<Real>& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor<Real>& slot = grads_[id];
    if (slot.empty()) {
      slot = g;
    } else {
      for (std::size_t i = 0; i < slot.numel(); ++i) slot[i] += g[i];
    }
  }

  // Reverse sweep from a scalar loss; per-node gradients are queried with
  // grad()/grad_or_zero() until the next backward call.
  void backward(NodeId loss) {
    check_shape(nodes_[loss].value.numel() == 1,
                "backward: loss must be scalar");
    check(grad_enabled_, "backward: tape built with gradients disabled");
    grads_.assign(nodes_.size(), Tensor<Real>());
    Tensor<Real> seed = nodes_[loss].value;
    seed.fill(Real(1));
    accumulate(loss, seed);
    for (NodeId id = loss + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward) continue;
      if (grads_[id].empty()) continue;
      n.backward(*this, grads_[id]);
    }
  }

  const Tensor<Real>& grad(NodeId id) const { return grads_.at(id); }

  Tensor<Real> grad_or_zero(NodeId id) const {
    if (id < grads_.size() && !grads_[id].empty()) return grads_[id];
    Tensor<Real> z = nodes_[id].value;
    z.fill(Real(0));
    return z;
  }

 private:
  struct Node {
    Tensor<Real> value;
    bool requires_grad = false;
    bool detached = false;
    BackwardFn backward;
  };

  NodeId push(Tensor<Real> value, bool requires_grad, bool detached,
              BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), requires_grad, detached,
                          std::move(backward)});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<Real>> grads_;
  bool grad_enabled_;
};

// Lightweight handle to a tape node.
template <typename Real>
struct Var {
  Tape<Real>* tape = nullptr;
  typename Tape<Real>::NodeId id = 0;

  const Tensor<Real>& value() const { return tape->value(id); }
  bool requires_grad() const { return tape->requires_grad(id); }
  bool is_detached() const { return tape->is_detached(id); }
};

template <typename Real>
Var<Real> make_leaf(Tape<Real>& t, Tensor<Real> v, bool requires_grad) {
  return {&t, t.leaf(std::move(v), requires_grad)};
}

template <typename Real>
Var<Real> make_constant(Tape<Real>& t, Tensor<Real> v) {
  return {&t, t.constant(std::move(v))};
}

// Value identical; gradient flow to ancestors severed. Idempotent.
template <typename Real>
Var<Real> detach(Var<Real> a) {
  return {a.tape, a.tape->detach_node(a.id)};
}

// ---------------------------------------------------------------------------
// Differentiable ops. Each op computes its value, and registers a backward
// closure only when some input needs gradients — the closure (and the value
// copies it captures) are never built on evaluation-only tapes.
// ---------------------------------------------------------------------------

namespace ops {

template <typename Real, typename MakeBackward>
Var<Real> unary(Var<Real> a, Tensor<Real> value, MakeBackward&& mk) {
  Tape<Real>& t = *a.tape;
  if (!a.requires_grad()) return {&t, t.op_nograd(std::move(value))};
  return {&t, t.op(std::move(value), mk())};
}

template <typename Real, typename MakeBackward>
Var<Real> binary(Var<Real> a, Var<Real> b, Tensor<Real> value,
                 MakeBackward&& mk) {
  Tape<Real>& t = *a.tape;
  if (!a.requires_grad() && !b.requires_grad())
    return {&t, t.op_nograd(std::move(value))};
  return {&t, t.op(std::move(value), mk())};
}

}  // namespace ops

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  return ops::binary(a, b, add_value(a.value(), b.value()), [&] {
    auto ia = a.id, ib = b.id;
    return [ia, ib](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, g);
      tp.accumulate(ib, g);
    };
  });
}

template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  return ops::binary(a, b, sub_value(a.value(), b.value()), [&] {
    auto ia = a.id, ib = b.id;
    return [ia, ib](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, g);
      tp.accumulate(ib, scale_value(g, Real(-1)));
    };
  });
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  return ops::binary(a, b, mul_value(a.value(), b.value()), [&] {
    auto ia = a.id, ib = b.id;
    Tensor<Real> va = a.value(), vb = b.value();
    return [ia, ib, va, vb](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, mul_value(g, vb));
      tp.accumulate(ib, mul_value(g, va));
    };
  });
}

template <typename Real>
Var<Real> scale(Var<Real> a, Real c) {
  return ops::unary(a, scale_value(a.value(), c), [&] {
    auto ia = a.id;
    return [ia, c](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, scale_value(g, c));
    };
  });
}

template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  return ops::binary(a, b, matmul_value(a.value(), b.value()), [&] {
    auto ia = a.id, ib = b.id;
    Tensor<Real> va = a.value(), vb = b.value();
    return [ia, ib, va, vb](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, matmul_value(g, transpose_value(vb)));
      tp.accumulate(ib, matmul_value(transpose_value(va), g));
    };
  });
}

template <typename Real>
Var<Real> transpose(Var<Real> a) {
  return ops::unary(a, transpose_value(a.value()), [&] {
    auto ia = a.id;
    return [ia](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, transpose_value(g));
    };
  });
}

template <typename Real>
Var<Real> reshape(Var<Real> a, Shape s) {
  return ops::unary(a, a.value().reshaped(std::move(s)), [&] {
    auto ia = a.id;
    Shape orig = a.value().shape();
    return [ia, orig](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, g.reshaped(orig));
    };
  });
}

template <typename Real>
Var<Real> add_row_vector(Var<Real> a, Var<Real> v) {
  return ops::binary(a, v, add_row_vector_value(a.value(), v.value()), [&] {
    auto ia = a.id, iv = v.id;
    Shape vshape = v.value().shape();
    return [ia, iv, vshape](Tape<Real>& tp, const Tensor<Real>& g) {
      tp.accumulate(ia, g);
      const std::size_t n = g.shape()[0], d = g.shape()[1];
      Tensor<Real> gv(vshape, Real(0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gv[j] += g.at(i, j);
      tp.accumulate(iv, gv);
    };
  });
}

template <typename Real>
Var<Real> gather_rows(Var<Real> a, std::vector<std::size_t> idx) {
  Tensor<Real> out = gather_rows_value(a.value(), idx);
  return ops::unary(a, std::move(out), [&] {
    auto ia = a.id;
    const std::size_t n_rows = a.value().shape()[0];
    return [ia, idx = std::move(idx), n_rows](Tape<Real>& tp,
                                              const Tensor<Real>& g) {
      tp.accumulate(ia, scatter_rows_value(g, idx, n_rows));
    };
  });
}

template <typename Real>
Var<Real> concat_rows(Var<Real> a, Var<Real> b) {
  return ops::binary(a, b, concat_rows_value(a.value(), b.value()), [&] {
    auto ia = a.id, ib = b.id;
    const std::size_t na = a.value().shape()[0];
    const std::size_t nb = b.value().shape()[0];
    return [ia, ib, na, nb](Tape<Real>& tp, const Tensor<Real>& g) {
      const std::size_t d = g.shape()[1];
      Tensor<Real> ga({na, d}), gb({nb, d});
      std::copy(g.data(), g.data() + na * d, ga.data());
      std::copy(g.data() + na * d, g.data() + (na + nb) * d, gb.data());
      tp.accumulate(ia, ga);
      tp.accumulate(ib, gb);
    };
  });
}

template <typename Real>
Var<Real> slice_cols(Var<Real> a, std::size_t start, std::size_t count) {
  return ops::unary(a, slice_cols_value(a.value(), start, count), [&] {
    auto ia = a.id;
    Shape orig = a.value().shape();
    return [ia, start, orig](Tape<Real>& tp, const Tensor<Real>& g) {
      Tensor<Real> ga(orig, Real(0));
      const std::size_t n = g.shape()[0], c = g.shape()[1];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) ga.at(i, start + j) = g.at(i, j);
      tp.accumulate(ia, ga);
    };
  });
}

template <typename Real>
Var<Real> concat_cols(Var<Real> a, Var<Real> b) {
  return ops::binary(a, b, concat_cols_value(a.value(), b.value()), [&] {
    auto ia = a.id, ib = b.id;
    const std::size_t da = a.value().shape()[1];
    const std::size_t db = b.value().shape()[1];
    return [ia, ib, da, db](Tape<Real>& tp, const Tensor<Real>& g) {
      const std::size_t n = g.shape()[0];
      Tensor<Real> ga({n, da}), gb({n, db});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < da; ++j) ga.at(i, j) = g.at(i, j);
        for (std::size_t j = 0; j < db; ++j) gb.at(i, j) = g.at(i, da + j);
      }
      tp.accumulate(ia, ga);
      tp.accumulate(ib, gb);
    };
  });
}

template <typename Real>
Var<Real> broadcast_row(Var<Real> v, std::size_t n_rows) {
  return ops::unary(v, broadcast_row_value(v.value(), n_rows), [&] {
    auto iv = v.id;
    Shape vshape = v.value().shape();
    return [iv, vshape](Tape<Real>& tp, const Tensor<Real>& g) {
      const std::size_t n = g.shape()[0], d = g.shape()[1];
      Tensor<Real> gv(vshape, Real(0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gv[j] += g.at(i, j);
      tp.accumulate(iv, gv);
    };
  });
}

template <typename Real>
Var<Real> gelu(Var<Real> a) {
  return ops::unary(a, gelu_value(a.value()), [&] {
    auto ia = a.id;
    Tensor<Real> va = a.value();
    return [ia, va](Tape<Real>& tp, const Tensor<Real>& g) {
      Tensor<Real> ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i)
        ga[i] *= gelu_grad_scalar(va[i]);
      tp.accumulate(ia, ga);
    };
  });
}

template <typename Real>
Var<Real> abs(Var<Real> a) {
  return ops::unary(a, abs_value(a.value()), [&] {
    auto ia = a.id;
    Tensor<Real> va = a.value();
    return [ia, va](Tape<Real>& tp, const Tensor<Real>& g) {
      Tensor<Real> ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i)
        ga[i] *= (va[i] > Real(0)) ? Real(1)
                 : (va[i] < Real(0)) ? Real(-1)
                                     : Real(0);
      tp.accumulate(ia, ga);
    };
  });
}

template <typename Real>
Var<Real> log(Var<Real> a) {
  return ops::unary(a, log_value(a.value()), [&] {
    auto ia = a.id;
    Tensor<Real> va = a.value();
    return [ia, va](Tape<Real>& tp, const Tensor<Real>& g) {
      Tensor<Real> ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] /= va[i];
      tp.accumulate(ia, ga);
    };
  });
}

template <typename Real>
Var<Real> softmax_rows(Var<Real> a) {
  Tensor<Real> p = softmax_rows_value(a.value());
  return ops::unary(a, p, [&] {
    auto ia = a.id;
    return [ia, p](Tape<Real>& tp, const Tensor<Real>& g) {
      const std::size_t n = p.rows(), d = p.cols();
      Tensor<Real> ga = g;
      for (std::size_t i = 0; i < n; ++i) {
        Real dot = Real(0);
        for (std::size_t j = 0; j < d; ++j)
          dot += g.data()[i * d + j] * p.data()[i * d + j];
        for (std::size_t j = 0; j < d; ++j)
          ga.data()[i * d + j] =
              p.data()[i * d + j] * (g.data()[i * d + j] - dot);
      }
      tp.accumulate(ia, ga);
    };
  });
}

template <typename Real>
Var<Real> layer_norm_rows(Var<Real> a, Var<Real> gamma, Var<Real> beta,
                          Real eps) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out =
      layer_norm_rows_value(a.value(), gamma.value(), beta.value(), eps);
  const bool rg =
      a.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  if (!rg) return {&t, t.op_nograd(std::move(out))};
  auto ia = a.id, ig = gamma.id, ib = beta.id;
  Tensor<Real> va = a.value(), vg = gamma.value();
  Shape gshape = vg.shape();
  return {&t,
          t.op(std::move(out),
               [ia, ig, ib, va, vg, gshape, eps](Tape<Real>& tp,
                                                 const Tensor<Real>& g) {
                 const std::size_t n = va.rows(), d = va.cols();
                 Tensor<Real> ga = va;
                 Tensor<Real> ggamma(gshape, Real(0));
                 Tensor<Real> gbeta(gshape, Real(0));
                 for (std::size_t i = 0; i < n; ++i) {
                   const Real* x = va.data() + i * d;
                   const Real* go = g.data() + i * d;
                   Real mean = Real(0);
                   for (std::size_t j = 0; j < d; ++j) mean += x[j];
                   mean /= static_cast<Real>(d);
                   Real var = Real(0);
                   for (std::size_t j = 0; j < d; ++j) {
                     const Real c = x[j] - mean;
                     var += c * c;
                   }
                   var /= static_cast<Real>(d);
                   const Real inv = Real(1) / std::sqrt(var + eps);
                   Real mean_gh = Real(0), mean_ghx = Real(0);
                   for (std::size_t j = 0; j < d; ++j) {
                     const Real xh = (x[j] - mean) * inv;
                     const Real gh = go[j] * vg[j];
                     mean_gh += gh;
                     mean_ghx += gh * xh;
                     ggamma[j] += go[j] * xh;
                     gbeta[j] += go[j];
                   }
                   mean_gh /= static_cast<Real>(d);
                   mean_ghx /= static_cast<Real>(d);
                   Real* gx = ga.data() + i * d;
                   for (std::size_t j = 0; j < d; ++j) {
                     const Real xh = (x[j] - mean) * inv;
                     const Real gh = go[j] * vg[j];
                     gx[j] = (gh - mean_gh - xh * mean_ghx) * inv;
                   }
                 }
                 tp.accumulate(ia, ga);
                 tp.accumulate(ig, ggamma);
                 tp.accumulate(ib, gbeta);
               })};
}

template <typename Real>
Var<Real> row_mean(Var<Real> a) {
  return ops::unary(a, row_mean_value(a.value()), [&] {
    auto ia = a.id;
    Shape orig = a.value().shape();
    return [ia, orig](Tape<Real>& tp, const Tensor<Real>& g) {
      const std::size_t n = orig[0], d = orig[1];
      Tensor<Real> ga(orig);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          ga.at(i, j) = g[i] / static_cast<Real>(d);
      tp.accumulate(ia, ga);
    };
  });
}

template <typename Real>
Var<Real> sum(Var<Real> a) {
  return ops::unary(a, sum_value(a.value()), [&] {
    auto ia = a.id;
    Shape orig = a.value().shape();
    return [ia, orig](Tape<Real>& tp, const Tensor<Real>& g) {
      Tensor<Real> ga(orig, g[0]);
      tp.accumulate(ia, ga);
    };
  });
}

// Mean softmax cross-entropy against integer labels, fused for stability.
template <typename Real>
Var<Real> cross_entropy_mean(Var<Real> logits,
                             std::vector<std::size_t> labels) {
  Tape<Real>& t = *logits.tape;
  const Tensor<Real>& z = logits.value();
  const std::size_t n = z.rows(), k = z.cols();
  check_shape(labels.size() == n, "cross_entropy: label count mismatch");
  Tensor<Real> probs({n, k});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    check_shape(labels[i] < k, "cross_entropy: label out of range");
    const Real* row = z.data() + i * k;
    Real mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      lse += std::exp(static_cast<double>(row[j] - mx));
    lse = std::log(lse) + static_cast<double>(mx);
    for (std::size_t j = 0; j < k; ++j)
      probs.at(i, j) =
          static_cast<Real>(std::exp(static_cast<double>(row[j]) - lse));
    total += lse - static_cast<double>(row[labels[i]]);
  }
  Tensor<Real> out({1});
  out[0] = static_cast<Real>(total / static_cast<double>(n));
  if (!logits.requires_grad()) return {&t, t.op_nograd(std::move(out))};
  auto il = logits.id;
  return {&t, t.op(std::move(out),
                   [il, probs, labels = std::move(labels), n, k](
                       Tape<Real>& tp, const Tensor<Real>& g) {
                     Tensor<Real> gz = probs;
                     for (std::size_t i = 0; i < n; ++i)
                       gz.at(i, labels[i]) -= Real(1);
                     const Real c = g[0] / static_cast<Real>(n);
                     for (std::size_t i = 0; i < n * k; ++i) gz[i] *= c;
                     tp.accumulate(il, gz);
                   })};
}

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

// phi = MAE parameters, theta = sampling-network parameters.
enum class Partition : std::uint8_t { Mae = 0, Sampler = 1 };

template <typename Real>
struct Param {
  std::string name;
  Partition partition;
  bool weight_decay;  // decay skipped for biases, norms and the mask token
  Tensor<Real> value;
};

// Named, ordered parameter store. Order is construction order and defines
// the layout of gradient vectors, optimizer state and checkpoints.
template <typename Real>
class ParamSet {
 public:
  std::size_t add(std::string name, Partition partition, bool weight_decay,
                  Tensor<Real> value) {
    check(!index_.count(name), "duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.push_back(Param<Real>{std::move(name), partition, weight_decay,
                                  std::move(value)});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Param<Real>& operator[](std::size_t i) { return params_[i]; }
  const Param<Real>& operator[](std::size_t i) const { return params_[i]; }

  bool contains(const std::string& name) const { return index_.count(name); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter: " + name);
    return it->second;
  }

  Tensor<Real>& value_of(const std::string& name) {
    return params_[index_of(name)].value;
  }

 private:
  std::vector<Param<Real>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-tape handles for every parameter, aligned with ParamSet order.
template <typename Real>
struct ParamBinding {
  std::vector<Var<Real>> vars;

  Var<Real> operator[](std::size_t i) const { return vars[i]; }
};

template <typename Real>
ParamBinding<Real> bind(ParamSet<Real>& params, Tape<Real>& tape) {
  ParamBinding<Real> b;
  b.vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    b.vars.push_back(make_leaf(tape, params[i].value, true));
  return b;
}

// Gradients of a scalar loss for every parameter; untouched parameters get
// exact zero tensors.
template <typename Real>
std::vector<Tensor<Real>> gradients(Tape<Real>& tape, Var<Real> loss,
                                    const ParamBinding<Real>& binding) {
  tape.backward(loss.id);
  std::vector<Tensor<Real>> out;
  out.reserve(binding.vars.size());
  for (const auto& v : binding.vars) out.push_back(tape.grad_or_zero(v.id));
  return out;
}

}  // namespace adamae
