#include "aura/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aura/error.hpp"

namespace aura {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.own = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& value) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::view(const Tensor& value) {
  Node n;
  n.external = &value;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.own = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw ContractError("tape: input recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return nodes_[v.id_].value(); }

void Tape::backward(Var out) {
  const Tensor& v = value(out);
  if (v.size() != 1) {
    throw ContractError("backward: objective must be scalar, got shape " +
                        shape_string(v.shape()));
  }
  backward(out, Tensor(v.shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  if (seed.shape() != value(out).shape()) {
    throw DimensionError("backward: seed shape " + shape_string(seed.shape()) +
                         " does not match output " + shape_string(value(out).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[out.id_].requires_grad) return;
  nodes_[out.id_].grad = seed;
  sweep(out.id_);
}

void Tape::sweep(std::uint32_t from) {
  for (std::int64_t id = from; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && !n.grad.empty()) n.backward(*this, n.value(), n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value().shape(), 0.0);
  return n.grad;
}

bool Tape::has_grad(Var v) const { return !nodes_[v.id_].grad.empty(); }

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id_];
  if (n.grad.empty()) n.grad = Tensor(n.value().shape(), 0.0);
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_[v.id_].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  axpy(buf, g);
}

namespace ad {
namespace {

void same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes differ, " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

Tape& tape_of(Var a) {
  if (!a.tape()) throw ContractError("ad: uninitialized Var");
  return *a.tape();
}

template <typename Fn, typename DFn>
Var unary(Var x, Fn f, DFn df_from_xy) {
  const Tensor& xv = x.value();
  Tensor y = xv;
  for (auto& v : y.data()) v = f(v);
  return tape_of(x).record(std::move(y), {x},
                           [x, df_from_xy](Tape& t, const Tensor& yv, const Tensor& g) {
                             const Tensor& xv = t.value(x);
                             Tensor& gx = t.grad_buffer(x);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gx[i] += g[i] * df_from_xy(xv[i], yv[i]);
                           });
}

std::size_t vector_length(const Tensor& t) {
  if (t.rank() == 1) return t.dim(0);
  if (t.rank() == 2 && t.dim(0) == 1) return t.dim(1);
  throw DimensionError("expected a vector, got " + shape_string(t.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor c = aura::matmul(a.value(), b.value());
  return tape_of(a).record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(a)) axpy(t.grad_buffer(a), aura::matmul_nt(g, t.value(b)));
    if (t.requires_grad(b)) axpy(t.grad_buffer(b), aura::matmul_tn(t.value(a), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tensor c = aura::matmul_nt(a.value(), b.value());
  return tape_of(a).record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(a)) axpy(t.grad_buffer(a), aura::matmul(g, t.value(b)));
    if (t.requires_grad(b)) axpy(t.grad_buffer(b), aura::matmul_tn(g, t.value(a)));
  });
}

Var transpose(Var a) {
  return tape_of(a).record(aura::transpose(a.value()), {a},
                           [a](Tape& t, const Tensor&, const Tensor& g) {
                             axpy(t.grad_buffer(a), aura::transpose(g));
                           });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  return tape_of(a).record(aura::add(a.value(), b.value()), {a, b},
                           [a, b](Tape& t, const Tensor&, const Tensor& g) {
                             t.accumulate(a, g);
                             t.accumulate(b, g);
                           });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  return tape_of(a).record(aura::sub(a.value(), b.value()), {a, b},
                           [a, b](Tape& t, const Tensor&, const Tensor& g) {
                             t.accumulate(a, g);
                             if (t.requires_grad(b)) axpy(t.grad_buffer(b), g, -1.0);
                           });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
  return tape_of(a).record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var affine(Var x, double s, double c) {
  Tensor y = x.value();
  for (auto& v : y.data()) v = s * v + c;
  return tape_of(x).record(std::move(y), {x}, [x, s](Tape& t, const Tensor&, const Tensor& g) {
    axpy(t.grad_buffer(x), g, s);
  });
}

Var add_row(Var x, Var bias) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "add_row");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (vector_length(bias.value()) != n) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " for input " +
                         shape_string(xv.shape()));
  }
  Tensor y = xv;
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) += bv[j];
  return tape_of(x).record(std::move(y), {x, bias},
                           [x, bias, m, n](Tape& t, const Tensor&, const Tensor& g) {
                             t.accumulate(x, g);
                             if (t.requires_grad(bias)) {
                               Tensor& gb = t.grad_buffer(bias);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
                             }
                           });
}

Var add_col(Var x, Var bias) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "add_col");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (vector_length(bias.value()) != m) {
    throw DimensionError("add_col: bias " + shape_string(bias.shape()) + " for input " +
                         shape_string(xv.shape()));
  }
  Tensor y = xv;
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) += bv[i];
  return tape_of(x).record(std::move(y), {x, bias},
                           [x, bias, m, n](Tape& t, const Tensor&, const Tensor& g) {
                             t.accumulate(x, g);
                             if (t.requires_grad(bias)) {
                               Tensor& gb = t.grad_buffer(bias);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) gb[i] += g(i, j);
                             }
                           });
}

Var softmax_rows(Var x) {
  return tape_of(x).record(aura::softmax_rows(x.value()), {x},
                           [x](Tape& t, const Tensor& y, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             const std::size_t m = y.dim(0), n = y.dim(1);
                             for (std::size_t i = 0; i < m; ++i) {
                               double s = 0.0;
                               for (std::size_t j = 0; j < n; ++j) s += g(i, j) * y(i, j);
                               for (std::size_t j = 0; j < n; ++j)
                                 gx(i, j) += y(i, j) * (g(i, j) - s);
                             }
                           });
}

Var log_softmax_rows(Var x) {
  const Tensor& xv = x.value();
  const auto lse = logsumexp_rows(xv);
  Tensor y = xv;
  const std::size_t m = y.dim(0), n = y.dim(1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) -= lse[i];
  return tape_of(x).record(std::move(y), {x}, [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const std::size_t m = y.dim(0), n = y.dim(1);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g(i, j);
      for (std::size_t j = 0; j < n; ++j) gx(i, j) += g(i, j) - std::exp(y(i, j)) * s;
    }
  });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layer_norm");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (vector_length(gain.value()) != n || vector_length(shift.value()) != n) {
    throw DimensionError("layer_norm: gain/shift must have length " + std::to_string(n));
  }
  std::vector<double> mean(m), rstd(m);
  Tensor y({m, n});
  const Tensor& gv = gain.value();
  const Tensor& sv = shift.value();
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = xv.row(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    mean[i] = mu;
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y(i, j) = (r[j] - mu) * rstd[i] * gv[j] + sv[j];
  }
  return tape_of(x).record(
      std::move(y), {x, gain, shift},
      [x, gain, shift, mean = std::move(mean), rstd = std::move(rstd), m, n](
          Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& gv = t.value(gain);
        const bool want_x = t.requires_grad(x);
        const bool want_gain = t.requires_grad(gain);
        const bool want_shift = t.requires_grad(shift);
        std::vector<double> xhat(n), dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (xv(i, j) - mean[i]) * rstd[i];
            dxhat[j] = g(i, j) * gv[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xhat[j];
          }
          if (want_gain) {
            Tensor& gg = t.grad_buffer(gain);
            for (std::size_t j = 0; j < n; ++j) gg[j] += g(i, j) * xhat[j];
          }
          if (want_shift) {
            Tensor& gs = t.grad_buffer(shift);
            for (std::size_t j = 0; j < n; ++j) gs[j] += g(i, j);
          }
          if (want_x) {
            Tensor& gx = t.grad_buffer(x);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j)
              gx(i, j) += rstd[i] * (dxhat[j] - sum_d * inv_n - xhat[j] * sum_dx * inv_n);
          }
        }
      });
}

Var group_norm(Var x, Var gain, Var shift, std::size_t groups, double eps) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "group_norm");
  const std::size_t c = xv.dim(0), l = xv.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw DimensionError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
  }
  if (vector_length(gain.value()) != c || vector_length(shift.value()) != c) {
    throw DimensionError("group_norm: gain/shift must have length " + std::to_string(c));
  }
  const std::size_t per = c / groups;
  const double count = static_cast<double>(per * l);
  std::vector<double> mean(groups), rstd(groups);
  Tensor y({c, l});
  const Tensor& gv = gain.value();
  const Tensor& sv = shift.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double mu = 0.0;
    for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch)
      for (std::size_t j = 0; j < l; ++j) mu += xv(ch, j);
    mu /= count;
    double var = 0.0;
    for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch)
      for (std::size_t j = 0; j < l; ++j) var += (xv(ch, j) - mu) * (xv(ch, j) - mu);
    var /= count;
    mean[gi] = mu;
    rstd[gi] = 1.0 / std::sqrt(var + eps);
    for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch)
      for (std::size_t j = 0; j < l; ++j)
        y(ch, j) = (xv(ch, j) - mu) * rstd[gi] * gv[ch] + sv[ch];
  }
  return tape_of(x).record(
      std::move(y), {x, gain, shift},
      [x, gain, shift, mean = std::move(mean), rstd = std::move(rstd), groups, per, l, count](
          Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& gv = t.value(gain);
        const bool want_x = t.requires_grad(x);
        const bool want_gain = t.requires_grad(gain);
        const bool want_shift = t.requires_grad(shift);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch) {
            for (std::size_t j = 0; j < l; ++j) {
              const double xhat = (xv(ch, j) - mean[gi]) * rstd[gi];
              const double d = g(ch, j) * gv[ch];
              sum_d += d;
              sum_dx += d * xhat;
            }
          }
          for (std::size_t ch = gi * per; ch < (gi + 1) * per; ++ch) {
            for (std::size_t j = 0; j < l; ++j) {
              const double xhat = (xv(ch, j) - mean[gi]) * rstd[gi];
              if (want_gain) t.grad_buffer(gain)[ch] += g(ch, j) * xhat;
              if (want_shift) t.grad_buffer(shift)[ch] += g(ch, j);
              if (want_x) {
                const double d = g(ch, j) * gv[ch];
                t.grad_buffer(x)(ch, j) +=
                    rstd[gi] * (d - sum_d / count - xhat * sum_dx / count);
              }
            }
          }
        }
      });
}

Var gelu(Var x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "mean_rows");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor y({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += xv(i, j);
  for (auto& v : y.data()) v /= static_cast<double>(m);
  return tape_of(x).record(std::move(y), {x}, [x, m, n](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx(i, j) += g[j] * inv;
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).record(Tensor({1}, s), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (auto& v : gx.data()) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return affine(sum(x), 1.0 / n);
}

Var pick_mean(Var x, std::span<const std::size_t> cols) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "pick_mean");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (cols.size() != m) {
    throw DimensionError("pick_mean: " + std::to_string(cols.size()) + " indices for " +
                         std::to_string(m) + " rows");
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] >= n) throw DimensionError("pick_mean: column index out of range");
    s += xv(i, idx[i]);
  }
  s /= static_cast<double>(m);
  return tape_of(x).record(Tensor({1}, s), {x},
                           [x, idx = std::move(idx)](Tape& t, const Tensor&, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             const double w = g[0] / static_cast<double>(idx.size());
                             for (std::size_t i = 0; i < idx.size(); ++i) gx(i, idx[i]) += w;
                           });
}

Var l2_normalize(Var x) {
  const Tensor& xv = x.value();
  const double norm = l2_norm(xv.data());
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericError("l2_normalize: input has zero or non-finite norm");
  }
  return tape_of(x).record(aura::l2_normalize(xv), {x},
                           [x, norm](Tape& t, const Tensor& y, const Tensor& g) {
                             const double yg = dot(y.data(), g.data());
                             Tensor& gx = t.grad_buffer(x);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gx[i] += (g[i] - y[i] * yg) / norm;
                           });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor y = aura::l2_normalize_rows(xv);
  std::vector<double> norms(xv.dim(0));
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = l2_norm(xv.row(i));
  return tape_of(x).record(std::move(y), {x},
                           [x, norms = std::move(norms)](Tape& t, const Tensor& y, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             const std::size_t n = y.dim(1);
                             for (std::size_t i = 0; i < norms.size(); ++i) {
                               const double yg = dot(y.row(i), g.row(i));
                               for (std::size_t j = 0; j < n; ++j)
                                 gx(i, j) += (g(i, j) - y(i, j) * yg) / norms[i];
                             }
                           });
}

Var reshape(Var x, Shape shape) {
  return tape_of(x).record(x.value().reshaped(std::move(shape)), {x},
                           [x](Tape& t, const Tensor&, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "slice_cols");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(xv.shape()));
  }
  Tensor y({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y(i, j) = xv(i, begin + j);
  return tape_of(x).record(std::move(y), {x},
                           [x, begin, count, m](Tape& t, const Tensor&, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < count; ++j) gx(i, begin + j) += g(i, j);
                           });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().dim(0);
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().dim(0) != m) throw DimensionError("concat_cols: row counts differ");
    total += p.value().dim(1);
  }
  Tensor y({m, total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pv.dim(1); ++j) y(i, off + j) = pv(i, j);
    off += pv.dim(1);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record(
      std::move(y), std::span<const Var>(inputs), [inputs, m](Tape& t, const Tensor&, const Tensor& g) {
        std::size_t off = 0;
        for (const Var& p : inputs) {
          const std::size_t w = t.value(p).dim(1);
          if (t.requires_grad(p)) {
            Tensor& gp = t.grad_buffer(p);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < w; ++j) gp(i, j) += g(i, off + j);
          }
          off += w;
        }
      });
}

Var row(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "row");
  if (r >= xv.dim(0)) throw DimensionError("row: index out of range");
  const auto src = xv.row(r);
  Tensor y({xv.dim(1)}, std::vector<double>(src.begin(), src.end()));
  return tape_of(x).record(std::move(y), {x}, [x, r](Tape& t, const Tensor&, const Tensor& g) {
    auto dst = t.grad_buffer(x).row(r);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t n = vector_length(rows[0].value());
  Tensor y({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& v = rows[i].value();
    if (vector_length(v) != n) throw DimensionError("stack_rows: rows have different lengths");
    std::copy(v.data().begin(), v.data().end(), y.row(i).begin());
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return tape_of(rows[0]).record(std::move(y), std::span<const Var>(inputs),
                                 [inputs](Tape& t, const Tensor&, const Tensor& g) {
                                   for (std::size_t i = 0; i < inputs.size(); ++i) {
                                     if (!t.requires_grad(inputs[i])) continue;
                                     Tensor& gi = t.grad_buffer(inputs[i]);
                                     const auto src = g.row(i);
                                     for (std::size_t j = 0; j < src.size(); ++j) gi[j] += src[j];
                                   }
                                 });
}

namespace {

// Column matrix [(Cin·K) × Lout] so the convolution becomes one matmul.
Tensor im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad,
              std::size_t lout) {
  const std::size_t cin = x.dim(0), l = x.dim(1);
  Tensor cols({cin * k, lout});
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double* dst = cols.raw() + (c * k + kk) * lout;
      for (std::size_t t = 0; t < lout; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                   static_cast<std::ptrdiff_t>(pad);
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(l)) dst[t] = x(c, static_cast<std::size_t>(src));
      }
    }
  }
  return cols;
}

}  // namespace

Var conv1d(Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 2, "conv1d input");
  require_rank(wv, 3, "conv1d weight");
  const std::size_t cin = xv.dim(0), l = xv.dim(1);
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != cin) {
    throw DimensionError("conv1d: weight " + shape_string(wv.shape()) + " for input " +
                         shape_string(xv.shape()));
  }
  if (vector_length(b.value()) != cout) throw DimensionError("conv1d: bias length mismatch");
  if (stride == 0 || l + 2 * pad < k) throw DimensionError("conv1d: invalid stride or kernel");
  const std::size_t lout = (l + 2 * pad - k) / stride + 1;
  const Tensor w2 = wv.reshaped({cout, cin * k});
  Tensor y = aura::matmul(w2, im2col(xv, k, stride, pad, lout));
  const Tensor& bv = b.value();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < lout; ++t) y(o, t) += bv[o];
  return tape_of(x).record(
      std::move(y), {x, w, b},
      [x, w, b, stride, pad, cin, l, cout, k, lout](Tape& t, const Tensor&, const Tensor& g) {
        if (t.requires_grad(b)) {
          Tensor& gb = t.grad_buffer(b);
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t s = 0; s < lout; ++s) gb[o] += g(o, s);
        }
        if (t.requires_grad(w)) {
          const Tensor cols = im2col(t.value(x), k, stride, pad, lout);
          const Tensor gw = aura::matmul_nt(g, cols);
          Tensor& dst = t.grad_buffer(w);
          for (std::size_t i = 0; i < gw.size(); ++i) dst[i] += gw[i];
        }
        if (t.requires_grad(x)) {
          const Tensor w2 = t.value(w).reshaped({cout, cin * k});
          const Tensor gcols = aura::matmul_tn(w2, g);
          Tensor& gx = t.grad_buffer(x);
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* src = gcols.raw() + (c * k + kk) * lout;
              for (std::size_t s = 0; s < lout; ++s) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(s * stride + kk) -
                                           static_cast<std::ptrdiff_t>(pad);
                if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(l))
                  gx(c, static_cast<std::size_t>(pos)) += src[s];
              }
            }
          }
        }
      });
}

}  // namespace ad
GradientResult gradient(const Objective& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.parameter(p));
  const Var out = f(tape, leaves);
  tape.backward(out);
  GradientResult r;
  r.value = out.value()[0];
  r.grads.reserve(leaves.size());
  for (const Var& v : leaves) r.grads.push_back(tape.grad(v));
  return r;
}

}  // namespace aura
