#include "mmvb/tape.hpp"

#include <cmath>
#include <cstring>

#include "mmvb/kernels.hpp"

namespace mmvb {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " do not match");
}

// Rows/cols view: rank-1 is a single row, rank-2 is (r x c).
void rows_cols(const char* op, const Tensor& t, int64_t* r, int64_t* c) {
    if (t.rank() == 1) {
        *r = 1;
        *c = t.dim(0);
    } else if (t.rank() == 2) {
        *r = t.dim(0);
        *c = t.dim(1);
    } else {
        throw ShapeError(std::string(op) + ": expected rank 1 or 2, got shape " + shape_str(t.shape()));
    }
}

}  // namespace

const Tensor& Value::val() const { return tape->value(id); }
const Shape& Value::shape() const { return tape->value(id).shape(); }

Tape::Tape() {
    nodes_.reserve(256);
}

Value Tape::record(const char* op, Tensor out, std::vector<int32_t> inputs,
                   std::function<void(Tape&, const Tensor&, const Node&)> back) {
    if (!out.all_finite())
        throw NumericError(std::string(op) + " produced a non-finite value (node " +
                           std::to_string(nodes_.size()) + ")");
    bool rg = false;
    for (int32_t i : inputs) rg = rg || nodes_[static_cast<size_t>(i)].requires_grad;
    Node n;
    n.val = std::move(out);
    n.inputs = std::move(inputs);
    n.op = op;
    n.requires_grad = rg;
    if (rg) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Value Tape::leaf(Tensor v) {
    Node n;
    n.val = std::move(v);
    n.op = "leaf";
    n.requires_grad = true;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Value Tape::constant(Tensor v) {
    Node n;
    n.val = std::move(v);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::accum(int32_t id, const Tensor& g) {
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (slot.numel() == 0) {
        slot = g;
    } else {
        kernels::axpy(1.0, g.data(), slot.data(), slot.numel());
    }
}

Tensor* Tape::grad_slot(int32_t id) { return &grads_[static_cast<size_t>(id)]; }

GradMap Tape::backward(Value loss) {
    if (loss.tape != this) throw std::logic_error("backward: loss from another tape");
    const Tensor& lv = value(loss.id);
    if (lv.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(loss.id)] = Tensor::full(lv.shape(), 1.0);
    for (int32_t i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || grads_[static_cast<size_t>(i)].numel() == 0) continue;
        if (n.back) n.back(*this, grads_[static_cast<size_t>(i)], n);
    }
    GradMap out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].is_leaf) continue;
        const int32_t id = static_cast<int32_t>(i);
        if (grads_[i].numel() == 0)
            out.emplace(id, Tensor::zeros(nodes_[i].val.shape()));
        else
            out.emplace(id, std::move(grads_[i]));
    }
    return out;
}

// --- binary elementwise -----------------------------------------------------

namespace {

Value binary(const char* name, kernels::Binary op, Value a, Value b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    require_same_shape(name, av, bv);
    Tensor out(av.shape());
    kernels::binary_op(op, av.data(), bv.data(), out.data(), out.numel());
    const int32_t ia = a.id, ib = b.id;
    return a.tape->record(name, std::move(out), {ia, ib},
                          [op, ia, ib](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              const Tensor& bv2 = t.value(ib);
                              const int64_t n = g.numel();
                              Tensor ga(g.shape()), gb(g.shape());
                              switch (op) {
                                  case kernels::Binary::Add:
                                      t.accum(ia, g);
                                      t.accum(ib, g);
                                      return;
                                  case kernels::Binary::Sub:
                                      t.accum(ia, g);
                                      kernels::scale(g.data(), gb.data(), n, -1.0);
                                      t.accum(ib, gb);
                                      return;
                                  case kernels::Binary::Mul:
                                      kernels::binary_op(kernels::Binary::Mul, g.data(), bv2.data(),
                                                         ga.data(), n);
                                      kernels::binary_op(kernels::Binary::Mul, g.data(), av2.data(),
                                                         gb.data(), n);
                                      t.accum(ia, ga);
                                      t.accum(ib, gb);
                                      return;
                                  case kernels::Binary::Div:
                                      for (int64_t i = 0; i < n; ++i) {
                                          ga[i] = g[i] / bv2[i];
                                          gb[i] = -g[i] * av2[i] / (bv2[i] * bv2[i]);
                                      }
                                      t.accum(ia, ga);
                                      t.accum(ib, gb);
                                      return;
                              }
                          });
}

}  // namespace

Value add(Value a, Value b) { return binary("add", kernels::Binary::Add, a, b); }
Value sub(Value a, Value b) { return binary("sub", kernels::Binary::Sub, a, b); }
Value mul(Value a, Value b) { return binary("mul", kernels::Binary::Mul, a, b); }
Value divide(Value a, Value b) { return binary("divide", kernels::Binary::Div, a, b); }

// --- matmul family ----------------------------------------------------------

Value matmul(Value a, Value b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
        throw ShapeError("matmul: shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()) + " do not conform");
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
    const int32_t ia = a.id, ib = b.id;
    return a.tape->record("matmul", std::move(out), {ia, ib},
                          [ia, ib, m, k, n](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              const Tensor& bv2 = t.value(ib);
                              Tensor ga({m, k});
                              kernels::matmul_nt(g.data(), bv2.data(), ga.data(), m, n, k);
                              t.accum(ia, ga);
                              Tensor gb = Tensor::zeros({k, n});
                              kernels::matmul_tn_acc(av2.data(), g.data(), gb.data(), m, k, n);
                              t.accum(ib, gb);
                          });
}

Value matvec(Value a, Value x) {
    const Tensor& av = a.val();
    const Tensor& xv = x.val();
    if (av.rank() != 2 || xv.rank() != 1 || av.dim(1) != xv.dim(0))
        throw ShapeError("matvec: shapes " + shape_str(av.shape()) + " and " +
                         shape_str(xv.shape()) + " do not conform");
    const int64_t m = av.dim(0), k = av.dim(1);
    Tensor out({m});
    kernels::matmul(av.data(), xv.data(), out.data(), m, k, 1);
    const int32_t ia = a.id, ix = x.id;
    return a.tape->record("matvec", std::move(out), {ia, ix},
                          [ia, ix, m, k](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              const Tensor& xv2 = t.value(ix);
                              Tensor ga({m, k});
                              for (int64_t i = 0; i < m; ++i)
                                  for (int64_t j = 0; j < k; ++j) ga.at(i, j) = g[i] * xv2[j];
                              t.accum(ia, ga);
                              Tensor gx = Tensor::zeros({k});
                              kernels::matmul_tn_acc(av2.data(), g.data(), gx.data(), m, k, 1);
                              t.accum(ix, gx);
                          });
}

Value transpose(Value a) {
    const Tensor& av = a.val();
    if (av.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(av.shape()));
    const int64_t r = av.dim(0), c = av.dim(1);
    Tensor out({c, r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
    const int32_t ia = a.id;
    return a.tape->record("transpose", std::move(out), {ia},
                          [ia, r, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga({r, c});
                              for (int64_t i = 0; i < c; ++i)
                                  for (int64_t j = 0; j < r; ++j) ga.at(j, i) = g.at(i, j);
                              t.accum(ia, ga);
                          });
}

// --- unary ------------------------------------------------------------------

Value exp_(Value a) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    kernels::unary_op(kernels::Unary::Exp, av.data(), out.data(), out.numel());
    const int32_t ia = a.id;
    return a.tape->record("exp", std::move(out), {ia},
                          [ia](Tape& t, const Tensor& g, const Tape::Node& self) {
                              Tensor ga(g.shape());
                              kernels::binary_op(kernels::Binary::Mul, g.data(), self.val.data(),
                                                 ga.data(), g.numel());
                              t.accum(ia, ga);
                          });
}

Value log_(Value a) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    kernels::unary_op(kernels::Unary::LogClamped, av.data(), out.data(), out.numel());
    const int32_t ia = a.id;
    return a.tape->record("log", std::move(out), {ia},
                          [ia](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              Tensor ga(g.shape());
                              for (int64_t i = 0; i < g.numel(); ++i)
                                  ga[i] = av2[i] < 1e-30 ? 0.0 : g[i] / av2[i];
                              t.accum(ia, ga);
                          });
}

Value relu(Value a) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    kernels::unary_op(kernels::Unary::Relu, av.data(), out.data(), out.numel());
    const int32_t ia = a.id;
    return a.tape->record("relu", std::move(out), {ia},
                          [ia](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              Tensor ga(g.shape());
                              for (int64_t i = 0; i < g.numel(); ++i)
                                  ga[i] = av2[i] > 0.0 ? g[i] : 0.0;
                              t.accum(ia, ga);
                          });
}

Value leaky_relu(Value a, double alpha) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    kernels::leaky_relu(av.data(), out.data(), out.numel(), alpha);
    const int32_t ia = a.id;
    return a.tape->record("leaky_relu", std::move(out), {ia},
                          [ia, alpha](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              Tensor ga(g.shape());
                              for (int64_t i = 0; i < g.numel(); ++i)
                                  ga[i] = av2[i] > 0.0 ? g[i] : alpha * g[i];
                              t.accum(ia, ga);
                          });
}

Value clamp(Value a, double lo, double hi) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    kernels::clamp(av.data(), out.data(), out.numel(), lo, hi);
    const int32_t ia = a.id;
    return a.tape->record("clamp", std::move(out), {ia},
                          [ia, lo, hi](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              Tensor ga(g.shape());
                              for (int64_t i = 0; i < g.numel(); ++i)
                                  ga[i] = (av2[i] > lo && av2[i] < hi) ? g[i] : 0.0;
                              t.accum(ia, ga);
                          });
}

Value scale(Value a, double c) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    kernels::scale(av.data(), out.data(), out.numel(), c);
    const int32_t ia = a.id;
    return a.tape->record("scale", std::move(out), {ia},
                          [ia, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga(g.shape());
                              kernels::scale(g.data(), ga.data(), g.numel(), c);
                              t.accum(ia, ga);
                          });
}

Value add_scalar(Value a, double c) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
    const int32_t ia = a.id;
    return a.tape->record("add_scalar", std::move(out), {ia},
                          [ia](Tape& t, const Tensor& g, const Tape::Node&) { t.accum(ia, g); });
}

// --- softmax family ---------------------------------------------------------

Value softmax(Value a) {
    const Tensor& av = a.val();
    int64_t r, c;
    rows_cols("softmax", av, &r, &c);
    Tensor out(av.shape());
    kernels::softmax_rows(av.data(), out.data(), r, c);
    const int32_t ia = a.id;
    return a.tape->record("softmax", std::move(out), {ia},
                          [ia, r, c](Tape& t, const Tensor& g, const Tape::Node& self) {
                              Tensor ga(g.shape());
                              for (int64_t i = 0; i < r; ++i) {
                                  const double* y = self.val.data() + i * c;
                                  const double* gr = g.data() + i * c;
                                  double s = 0.0;
                                  for (int64_t j = 0; j < c; ++j) s += gr[j] * y[j];
                                  double* out_g = ga.data() + i * c;
                                  for (int64_t j = 0; j < c; ++j) out_g[j] = y[j] * (gr[j] - s);
                              }
                              t.accum(ia, ga);
                          });
}

Value masked_softmax(Value a, const std::vector<uint8_t>& mask) {
    const Tensor& av = a.val();
    int64_t r, c;
    rows_cols("masked_softmax", av, &r, &c);
    if (static_cast<int64_t>(mask.size()) != c)
        throw ShapeError("masked_softmax: mask length " + std::to_string(mask.size()) +
                         " does not match columns " + std::to_string(c));
    Tensor out(av.shape());
    kernels::masked_softmax_rows(av.data(), mask.data(), out.data(), r, c);
    const int32_t ia = a.id;
    return a.tape->record("masked_softmax", std::move(out), {ia},
                          [ia, r, c, mask](Tape& t, const Tensor& g, const Tape::Node& self) {
                              Tensor ga(g.shape());
                              for (int64_t i = 0; i < r; ++i) {
                                  const double* y = self.val.data() + i * c;
                                  const double* gr = g.data() + i * c;
                                  double s = 0.0;
                                  for (int64_t j = 0; j < c; ++j)
                                      if (mask[static_cast<size_t>(j)]) s += gr[j] * y[j];
                                  double* out_g = ga.data() + i * c;
                                  for (int64_t j = 0; j < c; ++j)
                                      out_g[j] = mask[static_cast<size_t>(j)] ? y[j] * (gr[j] - s) : 0.0;
                              }
                              t.accum(ia, ga);
                          });
}

Value logsumexp(Value a) {
    const Tensor& av = a.val();
    int64_t r, c;
    rows_cols("logsumexp", av, &r, &c);
    Tensor out(av.rank() == 1 ? Shape{} : Shape{r});
    kernels::logsumexp_rows(av.data(), out.data(), r, c);
    const int32_t ia = a.id;
    return a.tape->record("logsumexp", std::move(out), {ia},
                          [ia, r, c](Tape& t, const Tensor& g, const Tape::Node& self) {
                              const Tensor& av2 = t.value(ia);
                              Tensor ga(av2.shape());
                              for (int64_t i = 0; i < r; ++i)
                                  for (int64_t j = 0; j < c; ++j)
                                      ga[i * c + j] = g[i] * std::exp(av2[i * c + j] - self.val[i]);
                              t.accum(ia, ga);
                          });
}

Value log_softmax(Value a) {
    const Tensor& av = a.val();
    if (av.rank() != 1)
        throw ShapeError("log_softmax: expected rank 1, got " + shape_str(av.shape()));
    const int64_t c = av.dim(0);
    Tensor lse(Shape{});
    kernels::logsumexp_rows(av.data(), lse.data(), 1, c);
    Tensor out(av.shape());
    for (int64_t j = 0; j < c; ++j) out[j] = av[j] - lse[0];
    const int32_t ia = a.id;
    return a.tape->record("log_softmax", std::move(out), {ia},
                          [ia, c](Tape& t, const Tensor& g, const Tape::Node& self) {
                              Tensor ga({c});
                              double gs = 0.0;
                              for (int64_t j = 0; j < c; ++j) gs += g[j];
                              for (int64_t j = 0; j < c; ++j)
                                  ga[j] = g[j] - std::exp(self.val[j]) * gs;
                              t.accum(ia, ga);
                          });
}

Value layer_norm(Value x, Value gain, Value shift) {
    constexpr double kEps = 1e-5;
    const Tensor& xv = x.val();
    int64_t r, c;
    rows_cols("layer_norm", xv, &r, &c);
    const Tensor& gv = gain.val();
    const Tensor& sv = shift.val();
    if (gv.numel() != c || sv.numel() != c)
        throw ShapeError("layer_norm: gain/shift length must match last axis " + std::to_string(c));
    Tensor out(xv.shape()), inv_std({r}), mean({r});
    kernels::layer_norm_rows(xv.data(), gv.data(), sv.data(), out.data(), inv_std.data(),
                             mean.data(), r, c, kEps);
    const int32_t ix = x.id, ig = gain.id, is = shift.id;
    return x.tape->record(
        "layer_norm", std::move(out), {ix, ig, is},
        [ix, ig, is, r, c, inv_std, mean](Tape& t, const Tensor& g, const Tape::Node&) {
            const Tensor& xv2 = t.value(ix);
            const Tensor& gv2 = t.value(ig);
            Tensor gx(xv2.shape());
            Tensor ggain = Tensor::zeros({c});
            Tensor gshift = Tensor::zeros({c});
            for (int64_t i = 0; i < r; ++i) {
                const double mu = mean[i], istd = inv_std[i];
                const double* xr = xv2.data() + i * c;
                const double* gr = g.data() + i * c;
                double m1 = 0.0, m2 = 0.0;  // means of dxhat and dxhat*xhat
                for (int64_t j = 0; j < c; ++j) {
                    const double xhat = (xr[j] - mu) * istd;
                    const double dxhat = gr[j] * gv2[j];
                    m1 += dxhat;
                    m2 += dxhat * xhat;
                    ggain[j] += gr[j] * xhat;
                    gshift[j] += gr[j];
                }
                m1 /= static_cast<double>(c);
                m2 /= static_cast<double>(c);
                double* gxr = gx.data() + i * c;
                for (int64_t j = 0; j < c; ++j) {
                    const double xhat = (xr[j] - mu) * istd;
                    const double dxhat = gr[j] * gv2[j];
                    gxr[j] = istd * (dxhat - m1 - xhat * m2);
                }
            }
            t.accum(ix, gx);
            t.accum(ig, ggain);
            t.accum(is, gshift);
        });
}

// --- reductions / shape ops --------------------------------------------------

Value sum_all(Value a) {
    const Tensor& av = a.val();
    Tensor out = Tensor::scalar(kernels::sum_blocked(av.data(), av.numel()));
    const int32_t ia = a.id;
    return a.tape->record("sum", std::move(out), {ia},
                          [ia](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              t.accum(ia, Tensor::full(av2.shape(), g[0]));
                          });
}

Value mean_all(Value a) {
    const Tensor& av = a.val();
    const double n = static_cast<double>(av.numel());
    Tensor out = Tensor::scalar(kernels::sum_blocked(av.data(), av.numel()) / n);
    const int32_t ia = a.id;
    return a.tape->record("mean", std::move(out), {ia},
                          [ia, n](Tape& t, const Tensor& g, const Tape::Node&) {
                              const Tensor& av2 = t.value(ia);
                              t.accum(ia, Tensor::full(av2.shape(), g[0] / n));
                          });
}

Value sum_axis(Value a, int axis) {
    const Tensor& av = a.val();
    if (av.rank() != 2 || axis < 0 || axis > 1)
        throw ShapeError("sum_axis: expected rank 2 and axis in {0,1}, got " + shape_str(av.shape()));
    const int64_t r = av.dim(0), c = av.dim(1);
    Tensor out = Tensor::zeros(axis == 0 ? Shape{c} : Shape{r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av.at(i, j);
    const int32_t ia = a.id;
    return a.tape->record("sum_axis", std::move(out), {ia},
                          [ia, axis, r, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga({r, c});
                              for (int64_t i = 0; i < r; ++i)
                                  for (int64_t j = 0; j < c; ++j)
                                      ga.at(i, j) = g[axis == 0 ? j : i];
                              t.accum(ia, ga);
                          });
}

Value stack_scalars(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("stack_scalars: no inputs");
    Tape* t = parts[0].tape;
    const int64_t k = static_cast<int64_t>(parts.size());
    Tensor out({k});
    std::vector<int32_t> ids;
    for (int64_t i = 0; i < k; ++i) {
        const Tensor& pv = parts[static_cast<size_t>(i)].val();
        if (pv.numel() != 1)
            throw ShapeError("stack_scalars: input " + std::to_string(i) + " is not scalar");
        out[i] = pv[0];
        ids.push_back(parts[static_cast<size_t>(i)].id);
    }
    return t->record("stack_scalars", std::move(out), std::vector<int32_t>(ids),
                     [ids](Tape& tp, const Tensor& g, const Tape::Node&) {
                         for (size_t i = 0; i < ids.size(); ++i)
                             tp.accum(ids[i], Tensor::full(tp.value(ids[i]).shape(), g[static_cast<int64_t>(i)]));
                     });
}

Value stack_rows(const std::vector<Value>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    Tape* t = rows[0].tape;
    const int64_t r = static_cast<int64_t>(rows.size());
    const int64_t c = rows[0].val().numel();
    Tensor out({r, c});
    std::vector<int32_t> ids;
    for (int64_t i = 0; i < r; ++i) {
        const Tensor& rv = rows[static_cast<size_t>(i)].val();
        if (rv.rank() != 1 || rv.numel() != c)
            throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " +
                             shape_str(rv.shape()));
        std::memcpy(out.data() + i * c, rv.data(), sizeof(double) * static_cast<size_t>(c));
        ids.push_back(rows[static_cast<size_t>(i)].id);
    }
    return t->record("stack_rows", std::move(out), std::vector<int32_t>(ids),
                     [ids, c](Tape& tp, const Tensor& g, const Tape::Node&) {
                         for (size_t i = 0; i < ids.size(); ++i) {
                             Tensor gr({c});
                             std::memcpy(gr.data(), g.data() + static_cast<int64_t>(i) * c,
                                         sizeof(double) * static_cast<size_t>(c));
                             tp.accum(ids[i], gr);
                         }
                     });
}

Value concat(const std::vector<Value>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Tape* t = parts[0].tape;
    const int64_t rank = parts[0].val().rank();
    if (rank == 1 && axis == 0) {
        int64_t n = 0;
        for (const Value& p : parts) n += p.val().numel();
        Tensor out({n});
        int64_t off = 0;
        std::vector<int32_t> ids;
        std::vector<int64_t> offs;
        for (const Value& p : parts) {
            const Tensor& pv = p.val();
            offs.push_back(off);
            std::memcpy(out.data() + off, pv.data(), sizeof(double) * static_cast<size_t>(pv.numel()));
            off += pv.numel();
            ids.push_back(p.id);
        }
        return t->record("concat", std::move(out), std::vector<int32_t>(ids),
                         [ids, offs](Tape& tp, const Tensor& g, const Tape::Node&) {
                             for (size_t p = 0; p < ids.size(); ++p) {
                                 const Tensor& pv = tp.value(ids[p]);
                                 Tensor gp(pv.shape());
                                 std::memcpy(gp.data(), g.data() + offs[p],
                                             sizeof(double) * static_cast<size_t>(pv.numel()));
                                 tp.accum(ids[p], gp);
                             }
                         });
    }
    if (rank == 2 && axis == 1) {
        const int64_t r = parts[0].val().dim(0);
        int64_t ctot = 0;
        for (const Value& p : parts) {
            if (p.val().rank() != 2 || p.val().dim(0) != r)
                throw ShapeError("concat: row counts differ");
            ctot += p.val().dim(1);
        }
        Tensor out({r, ctot});
        std::vector<int32_t> ids;
        std::vector<int64_t> offs;
        int64_t off = 0;
        for (const Value& p : parts) {
            const Tensor& pv = p.val();
            offs.push_back(off);
            for (int64_t i = 0; i < r; ++i)
                std::memcpy(out.data() + i * ctot + off, pv.data() + i * pv.dim(1),
                            sizeof(double) * static_cast<size_t>(pv.dim(1)));
            off += pv.dim(1);
            ids.push_back(p.id);
        }
        return t->record("concat", std::move(out), std::vector<int32_t>(ids),
                         [ids, offs, r, ctot](Tape& tp, const Tensor& g, const Tape::Node&) {
                             for (size_t p = 0; p < ids.size(); ++p) {
                                 const Tensor& pv = tp.value(ids[p]);
                                 const int64_t cp = pv.dim(1);
                                 Tensor gp(pv.shape());
                                 for (int64_t i = 0; i < r; ++i)
                                     std::memcpy(gp.data() + i * cp, g.data() + i * ctot + offs[p],
                                                 sizeof(double) * static_cast<size_t>(cp));
                                 tp.accum(ids[p], gp);
                             }
                         });
    }
    throw ShapeError("concat: unsupported rank/axis combination");
}

Value slice(Value a, int axis, int64_t start, int64_t len) {
    const Tensor& av = a.val();
    const int32_t ia = a.id;
    if (av.rank() == 1 && axis == 0) {
        if (start < 0 || start + len > av.dim(0))
            throw ShapeError("slice: out of range for shape " + shape_str(av.shape()));
        Tensor out({len});
        std::memcpy(out.data(), av.data() + start, sizeof(double) * static_cast<size_t>(len));
        return a.tape->record("slice", std::move(out), {ia},
                              [ia, start, len](Tape& t, const Tensor& g, const Tape::Node&) {
                                  Tensor ga = Tensor::zeros(t.value(ia).shape());
                                  std::memcpy(ga.data() + start, g.data(),
                                              sizeof(double) * static_cast<size_t>(len));
                                  t.accum(ia, ga);
                              });
    }
    if (av.rank() == 2 && axis == 0) {
        const int64_t c = av.dim(1);
        if (start < 0 || start + len > av.dim(0))
            throw ShapeError("slice: out of range for shape " + shape_str(av.shape()));
        Tensor out({len, c});
        std::memcpy(out.data(), av.data() + start * c, sizeof(double) * static_cast<size_t>(len * c));
        return a.tape->record("slice", std::move(out), {ia},
                              [ia, start, len, c](Tape& t, const Tensor& g, const Tape::Node&) {
                                  Tensor ga = Tensor::zeros(t.value(ia).shape());
                                  std::memcpy(ga.data() + start * c, g.data(),
                                              sizeof(double) * static_cast<size_t>(len * c));
                                  t.accum(ia, ga);
                              });
    }
    if (av.rank() == 2 && axis == 1) {
        const int64_t r = av.dim(0), c = av.dim(1);
        if (start < 0 || start + len > c)
            throw ShapeError("slice: out of range for shape " + shape_str(av.shape()));
        Tensor out({r, len});
        for (int64_t i = 0; i < r; ++i)
            std::memcpy(out.data() + i * len, av.data() + i * c + start,
                        sizeof(double) * static_cast<size_t>(len));
        return a.tape->record("slice", std::move(out), {ia},
                              [ia, start, len, r, c](Tape& t, const Tensor& g, const Tape::Node&) {
                                  Tensor ga = Tensor::zeros({r, c});
                                  for (int64_t i = 0; i < r; ++i)
                                      std::memcpy(ga.data() + i * c + start, g.data() + i * len,
                                                  sizeof(double) * static_cast<size_t>(len));
                                  t.accum(ia, ga);
                              });
    }
    throw ShapeError("slice: unsupported rank/axis combination");
}

Value index(Value a, int64_t i) {
    const Tensor& av = a.val();
    if (av.rank() != 1) throw ShapeError("index: expected rank 1, got " + shape_str(av.shape()));
    if (i < 0 || i >= av.dim(0))
        throw ShapeError("index: " + std::to_string(i) + " out of range for " + shape_str(av.shape()));
    Tensor out = Tensor::scalar(av[i]);
    const int32_t ia = a.id;
    return a.tape->record("index", std::move(out), {ia},
                          [ia, i](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga = Tensor::zeros(t.value(ia).shape());
                              ga[i] = g[0];
                              t.accum(ia, ga);
                          });
}

Value row(Value a, int64_t i) {
    const Tensor& av = a.val();
    if (av.rank() != 2 || i < 0 || i >= av.dim(0))
        throw ShapeError("row: bad index for shape " + shape_str(av.shape()));
    const int64_t c = av.dim(1);
    Tensor out({c});
    std::memcpy(out.data(), av.data() + i * c, sizeof(double) * static_cast<size_t>(c));
    const int32_t ia = a.id;
    return a.tape->record("row", std::move(out), {ia},
                          [ia, i, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga = Tensor::zeros(t.value(ia).shape());
                              std::memcpy(ga.data() + i * c, g.data(),
                                          sizeof(double) * static_cast<size_t>(c));
                              t.accum(ia, ga);
                          });
}

Value broadcast_rows(Value v, int64_t rows) {
    const Tensor& vv = v.val();
    if (vv.rank() != 1)
        throw ShapeError("broadcast_rows: expected rank 1, got " + shape_str(vv.shape()));
    const int64_t c = vv.dim(0);
    Tensor out({rows, c});
    for (int64_t i = 0; i < rows; ++i)
        std::memcpy(out.data() + i * c, vv.data(), sizeof(double) * static_cast<size_t>(c));
    const int32_t iv = v.id;
    return v.tape->record("broadcast_rows", std::move(out), {iv},
                          [iv, rows, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor gv = Tensor::zeros({c});
                              for (int64_t i = 0; i < rows; ++i)
                                  for (int64_t j = 0; j < c; ++j) gv[j] += g.at(i, j);
                              t.accum(iv, gv);
                          });
}

Value mask_rows(Value a, const std::vector<uint8_t>& bits) {
    const Tensor& av = a.val();
    if (av.rank() != 2 || static_cast<int64_t>(bits.size()) != av.dim(0))
        throw ShapeError("mask_rows: mask length must match rows of " + shape_str(av.shape()));
    const int64_t r = av.dim(0), c = av.dim(1);
    Tensor out = Tensor::zeros({r, c});
    for (int64_t i = 0; i < r; ++i)
        if (bits[static_cast<size_t>(i)])
            std::memcpy(out.data() + i * c, av.data() + i * c, sizeof(double) * static_cast<size_t>(c));
    const int32_t ia = a.id;
    return a.tape->record("mask_rows", std::move(out), {ia},
                          [ia, bits, r, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga = Tensor::zeros({r, c});
                              for (int64_t i = 0; i < r; ++i)
                                  if (bits[static_cast<size_t>(i)])
                                      std::memcpy(ga.data() + i * c, g.data() + i * c,
                                                  sizeof(double) * static_cast<size_t>(c));
                              t.accum(ia, ga);
                          });
}

Value masked_row_sum(Value a, const std::vector<uint8_t>& bits) {
    const Tensor& av = a.val();
    if (av.rank() != 2 || static_cast<int64_t>(bits.size()) != av.dim(0))
        throw ShapeError("masked_row_sum: mask length must match rows of " + shape_str(av.shape()));
    const int64_t r = av.dim(0), c = av.dim(1);
    Tensor out = Tensor::zeros({c});
    for (int64_t i = 0; i < r; ++i)
        if (bits[static_cast<size_t>(i)])
            for (int64_t j = 0; j < c; ++j) out[j] += av.at(i, j);
    const int32_t ia = a.id;
    return a.tape->record("masked_row_sum", std::move(out), {ia},
                          [ia, bits, r, c](Tape& t, const Tensor& g, const Tape::Node&) {
                              Tensor ga = Tensor::zeros({r, c});
                              for (int64_t i = 0; i < r; ++i)
                                  if (bits[static_cast<size_t>(i)])
                                      std::memcpy(ga.data() + i * c, g.data(),
                                                  sizeof(double) * static_cast<size_t>(c));
                              t.accum(ia, ga);
                          });
}

Value stop_gradient(Value a) {
    Tensor out = a.val();  // bit-identical copy
    return a.tape->record("stop_gradient", std::move(out), {}, nullptr);
}

Value dot(Value a, Value b) { return sum_all(mul(a, b)); }

double grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double step) {
    Tape tape;
    Value vx = tape.leaf(x);
    Value loss = f(tape, vx);
    GradMap grads = tape.backward(loss);
    const Tensor& ad = grads.at(vx.id);

    Tensor fd(x.shape());
    Tensor xp = x;
    double fd_scale = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        xp[i] = x[i] + step;
        Tape t1;
        const double fp = f(t1, t1.leaf(xp)).val().item();
        xp[i] = x[i] - step;
        Tape t2;
        const double fm = f(t2, t2.leaf(xp)).val().item();
        xp[i] = x[i];
        fd[i] = (fp - fm) / (2.0 * step);
        fd_scale = std::max(fd_scale, std::abs(fd[i]));
    }
    // Error relative to the gradient scale; a per-coordinate quotient would
    // be dominated by the FD noise floor on near-zero derivatives.
    double max_rel = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i)
        max_rel = std::max(max_rel, std::abs(ad[i] - fd[i]) / (fd_scale + 1e-12));
    return max_rel;
}

// --- EvalContext -------------------------------------------------------------

Value EvalContext::param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto pit = params_->find(name);
    if (pit == params_->end()) throw ConfigError("unknown parameter: " + name);
    Value v = tape_.leaf(pit->second);
    bound_.emplace(name, v);
    return v;
}

NamedGrads EvalContext::backward(Value loss) {
    GradMap g = tape_.backward(loss);
    NamedGrads out;
    for (const auto& [name, tensor] : *params_) {
        auto it = bound_.find(name);
        if (it == bound_.end()) {
            out.emplace(name, Tensor::zeros(tensor.shape()));
        } else {
            out.emplace(name, std::move(g.at(it->second.id)));
        }
    }
    return out;
}

double grad_norm(const NamedGrads& g) {
    double s = 0.0;
    for (const auto& [name, t] : g)
        for (int64_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

}  // namespace mmvb
