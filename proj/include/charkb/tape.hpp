#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "charkb/errors.hpp"
#include "charkb/tensor.hpp"

namespace charkb {

/// Reverse-mode autodiff over a define-by-run tape. A tape is built per
/// forward pass, consumed by exactly one backward() call, then discarded.
/// Nodes are recorded in topological order by construction.
template <class S>
class Tape {
 public:
  struct Ref {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----------------------------------------------------------

  Ref leaf(Tensor<S> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {}, nullptr);
  }

  /// Leaf that aliases external storage (a model parameter). The pointee must
  /// outlive the tape.
  Ref param(const Tensor<S>* value) {
    Node n;
    n.external = value;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Ref{static_cast<int32_t>(nodes_.size()) - 1};
  }

  Ref zeros(std::vector<int64_t> shape) { return leaf(Tensor<S>(std::move(shape))); }

  // ---- elementwise -----------------------------------------------------

  Ref add(Ref a, Ref b) {
    const Tensor<S>&ta = val(a), &tb = val(b);
    require(ta.same_shape(tb), "add", ta, tb);
    Tensor<S> out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += tb.at(i);
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id},
                [](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  t.accumulate(t.parent(id, 0), g);
                  t.accumulate(t.parent(id, 1), g);
                });
  }

  Ref mul(Ref a, Ref b) {
    const Tensor<S>&ta = val(a), &tb = val(b);
    require(ta.same_shape(tb), "mul", ta, tb);
    Tensor<S> out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= tb.at(i);
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id},
                [](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  const int32_t pa = t.parent(id, 0), pb = t.parent(id, 1);
                  if (Tensor<S>* ga = t.grad_slot(pa)) {
                    const Tensor<S>& vb = t.node_val(pb);
                    for (int64_t i = 0; i < g.numel(); ++i) ga->at(i) += g.at(i) * vb.at(i);
                  }
                  if (Tensor<S>* gb = t.grad_slot(pb)) {
                    const Tensor<S>& va = t.node_val(pa);
                    for (int64_t i = 0; i < g.numel(); ++i) gb->at(i) += g.at(i) * va.at(i);
                  }
                });
  }

  Ref neg(Ref a) { return scale(a, S(-1)); }

  Ref scale(Ref a, S c) {
    Tensor<S> out = val(a);
    for (auto& v : out.data) v *= c;
    return push(std::move(out), needs(a), {a.id}, [c](Tape& t, int32_t id) {
      if (Tensor<S>* ga = t.grad_slot(t.parent(id, 0))) {
        const Tensor<S>& g = t.grads_[id];
        for (int64_t i = 0; i < g.numel(); ++i) ga->at(i) += c * g.at(i);
      }
    });
  }

  /// Elementwise product with a tape scalar: y = a * s.
  Ref scale_by(Ref a, Ref s) {
    const Tensor<S>& ts = val(s);
    require(ts.numel() == 1, "scale_by: scalar operand", ts, ts);
    Tensor<S> out = val(a);
    const S sv = ts.at(0);
    for (auto& v : out.data) v *= sv;
    return push(std::move(out), needs(a) || needs(s), {a.id, s.id},
                [](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  const int32_t pa = t.parent(id, 0), ps = t.parent(id, 1);
                  const S sv = t.node_val(ps).at(0);
                  if (Tensor<S>* ga = t.grad_slot(pa)) {
                    for (int64_t i = 0; i < g.numel(); ++i) ga->at(i) += sv * g.at(i);
                  }
                  if (Tensor<S>* gs = t.grad_slot(ps)) {
                    const Tensor<S>& va = t.node_val(pa);
                    gs->at(0) += detail::dot_n(g.numel(), g.data.data(), va.data.data());
                  }
                });
  }

  Ref tanh_(Ref a) {
    Tensor<S> out = val(a);
    for (auto& v : out.data) v = std::tanh(v);
    return push(std::move(out), needs(a), {a.id}, [](Tape& t, int32_t id) {
      if (Tensor<S>* ga = t.grad_slot(t.parent(id, 0))) {
        const Tensor<S>&g = t.grads_[id], &y = t.node_val(id);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga->at(i) += g.at(i) * (S(1) - y.at(i) * y.at(i));
      }
    });
  }

  Ref sigmoid_(Ref a) {
    Tensor<S> out = val(a);
    for (auto& v : out.data) v = S(1) / (S(1) + std::exp(-v));
    return push(std::move(out), needs(a), {a.id}, [](Tape& t, int32_t id) {
      if (Tensor<S>* ga = t.grad_slot(t.parent(id, 0))) {
        const Tensor<S>&g = t.grads_[id], &y = t.node_val(id);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga->at(i) += g.at(i) * y.at(i) * (S(1) - y.at(i));
      }
    });
  }

  Ref log_(Ref a) {
    Tensor<S> out = val(a);
    for (auto& v : out.data) v = std::log(v);
    return push(std::move(out), needs(a), {a.id}, [](Tape& t, int32_t id) {
      if (Tensor<S>* ga = t.grad_slot(t.parent(id, 0))) {
        const Tensor<S>&g = t.grads_[id], &x = t.node_val(t.parent(id, 0));
        for (int64_t i = 0; i < g.numel(); ++i) ga->at(i) += g.at(i) / x.at(i);
      }
    });
  }

  // ---- linear algebra --------------------------------------------------

  Ref matmul(Ref a, Ref b) {
    const Tensor<S>&ta = val(a), &tb = val(b);
    require(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.rows(), "matmul", ta, tb);
    const int64_t m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor<S> out({m, n});
    detail::matmul_acc(m, k, n, ta.data.data(), tb.data.data(), out.data.data());
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id},
                [m, k, n](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  const int32_t pa = t.parent(id, 0), pb = t.parent(id, 1);
                  if (Tensor<S>* ga = t.grad_slot(pa)) {
                    // dA = g * B^T
                    const Tensor<S>& B = t.node_val(pb);
                    for (int64_t i = 0; i < m; ++i)
                      for (int64_t p = 0; p < k; ++p)
                        ga->at(i, p) += detail::dot_n(n, g.row_ptr(i), B.row_ptr(p));
                  }
                  if (Tensor<S>* gb = t.grad_slot(pb)) {
                    // dB = A^T * g
                    const Tensor<S>& A = t.node_val(pa);
                    for (int64_t i = 0; i < m; ++i)
                      for (int64_t p = 0; p < k; ++p)
                        detail::axpy(n, A.at(i, p), g.row_ptr(i), gb->row_ptr(p));
                  }
                });
  }

  /// y[m] = A[m,k] * x[k]
  Ref matvec(Ref a, Ref x) {
    const Tensor<S>&ta = val(a), &tx = val(x);
    require(ta.rank() == 2 && tx.rank() == 1 && ta.cols() == tx.dim(0), "matvec", ta, tx);
    const int64_t m = ta.rows(), k = ta.cols();
    Tensor<S> out({m});
    for (int64_t i = 0; i < m; ++i)
      out.at(i) = detail::dot_n(k, ta.row_ptr(i), tx.data.data());
    return push(std::move(out), needs(a) || needs(x), {a.id, x.id},
                [m, k](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  const int32_t pa = t.parent(id, 0), px = t.parent(id, 1);
                  if (Tensor<S>* ga = t.grad_slot(pa)) {
                    const Tensor<S>& xv = t.node_val(px);
                    for (int64_t i = 0; i < m; ++i)
                      detail::axpy(k, g.at(i), xv.data.data(), ga->row_ptr(i));
                  }
                  if (Tensor<S>* gx = t.grad_slot(px)) {
                    const Tensor<S>& A = t.node_val(pa);
                    for (int64_t i = 0; i < m; ++i)
                      detail::axpy(k, g.at(i), A.row_ptr(i), gx->data.data());
                  }
                });
  }

  /// y[n] = x[k] * A[k,n]
  Ref vecmat(Ref x, Ref a) {
    const Tensor<S>&tx = val(x), &ta = val(a);
    require(tx.rank() == 1 && ta.rank() == 2 && tx.dim(0) == ta.rows(), "vecmat", tx, ta);
    const int64_t k = ta.rows(), n = ta.cols();
    Tensor<S> out({n});
    for (int64_t p = 0; p < k; ++p)
      detail::axpy(n, tx.at(p), ta.row_ptr(p), out.data.data());
    return push(std::move(out), needs(a) || needs(x), {x.id, a.id},
                [k, n](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  const int32_t px = t.parent(id, 0), pa = t.parent(id, 1);
                  if (Tensor<S>* gx = t.grad_slot(px)) {
                    const Tensor<S>& A = t.node_val(pa);
                    for (int64_t p = 0; p < k; ++p)
                      gx->at(p) += detail::dot_n(n, g.data.data(), A.row_ptr(p));
                  }
                  if (Tensor<S>* ga = t.grad_slot(pa)) {
                    const Tensor<S>& xv = t.node_val(px);
                    for (int64_t p = 0; p < k; ++p)
                      detail::axpy(n, xv.at(p), g.data.data(), ga->row_ptr(p));
                  }
                });
  }

  Ref dot(Ref a, Ref b) {
    const Tensor<S>&ta = val(a), &tb = val(b);
    require(ta.rank() == 1 && ta.same_shape(tb), "dot", ta, tb);
    Tensor<S> out({1});
    out.at(0) = detail::dot_n(ta.numel(), ta.data.data(), tb.data.data());
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id},
                [](Tape& t, int32_t id) {
                  const S g = t.grads_[id].at(0);
                  const int32_t pa = t.parent(id, 0), pb = t.parent(id, 1);
                  if (Tensor<S>* ga = t.grad_slot(pa)) {
                    const Tensor<S>& vb = t.node_val(pb);
                    detail::axpy(vb.numel(), g, vb.data.data(), ga->data.data());
                  }
                  if (Tensor<S>* gb = t.grad_slot(pb)) {
                    const Tensor<S>& va = t.node_val(pa);
                    detail::axpy(va.numel(), g, va.data.data(), gb->data.data());
                  }
                });
  }

  /// Row extraction; equivalent to a one-hot row vector times the matrix.
  Ref row_lookup(Ref m, int64_t row) {
    const Tensor<S>& tm = val(m);
    require(tm.rank() == 2 && row >= 0 && row < tm.rows(), "row_lookup", tm, tm);
    const int64_t c = tm.cols();
    Tensor<S> out({c});
    std::copy(tm.row_ptr(row), tm.row_ptr(row) + c, out.data.data());
    return push(std::move(out), needs(m), {m.id}, [row, c](Tape& t, int32_t id) {
      if (Tensor<S>* gm = t.grad_slot(t.parent(id, 0))) {
        detail::axpy(c, S(1), t.grads_[id].data.data(), gm->row_ptr(row));
      }
    });
  }

  Ref pick(Ref v, int64_t i) {
    const Tensor<S>& tv = val(v);
    require(tv.rank() == 1 && i >= 0 && i < tv.numel(), "pick", tv, tv);
    Tensor<S> out({1});
    out.at(0) = tv.at(i);
    return push(std::move(out), needs(v), {v.id}, [i](Tape& t, int32_t id) {
      if (Tensor<S>* gv = t.grad_slot(t.parent(id, 0))) gv->at(i) += t.grads_[id].at(0);
    });
  }

  Ref concat(const std::vector<Ref>& parts) {
    int64_t n = 0;
    bool rg = false;
    std::vector<int32_t> ids;
    std::vector<int64_t> lens;
    for (Ref r : parts) {
      const Tensor<S>& tv = val(r);
      require(tv.rank() == 1, "concat: rank-1 operands", tv, tv);
      n += tv.numel();
      lens.push_back(tv.numel());
      ids.push_back(r.id);
      rg = rg || needs(r);
    }
    Tensor<S> out({n});
    int64_t off = 0;
    for (Ref r : parts) {
      const Tensor<S>& tv = val(r);
      std::copy(tv.data.begin(), tv.data.end(), out.data.begin() + off);
      off += tv.numel();
    }
    return push(std::move(out), rg, std::move(ids),
                [lens](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  int64_t off = 0;
                  for (size_t p = 0; p < lens.size(); ++p) {
                    if (Tensor<S>* gp = t.grad_slot(t.parent(id, static_cast<int>(p)))) {
                      detail::axpy(lens[p], S(1), g.data.data() + off, gp->data.data());
                    }
                    off += lens[p];
                  }
                });
  }

  Ref slice(Ref v, int64_t start, int64_t len) {
    const Tensor<S>& tv = val(v);
    require(tv.rank() == 1 && start >= 0 && start + len <= tv.numel(), "slice", tv, tv);
    Tensor<S> out({len});
    std::copy(tv.data.begin() + start, tv.data.begin() + start + len, out.data.begin());
    return push(std::move(out), needs(v), {v.id}, [start, len](Tape& t, int32_t id) {
      if (Tensor<S>* gv = t.grad_slot(t.parent(id, 0))) {
        detail::axpy(len, S(1), t.grads_[id].data.data(), gv->data.data() + start);
      }
    });
  }

  Ref stack(const std::vector<Ref>& scalars) {
    const int64_t n = static_cast<int64_t>(scalars.size());
    Tensor<S> out({n});
    bool rg = false;
    std::vector<int32_t> ids;
    for (int64_t i = 0; i < n; ++i) {
      const Tensor<S>& tv = val(scalars[static_cast<size_t>(i)]);
      require(tv.numel() == 1, "stack: scalar operands", tv, tv);
      out.at(i) = tv.at(0);
      ids.push_back(scalars[static_cast<size_t>(i)].id);
      rg = rg || needs(scalars[static_cast<size_t>(i)]);
    }
    return push(std::move(out), rg, std::move(ids), [n](Tape& t, int32_t id) {
      const Tensor<S>& g = t.grads_[id];
      for (int64_t i = 0; i < n; ++i) {
        if (Tensor<S>* gp = t.grad_slot(t.parent(id, static_cast<int>(i))))
          gp->at(0) += g.at(i);
      }
    });
  }

  /// M[n,m] + row-broadcast v[m].
  Ref add_rowvec(Ref m, Ref v) {
    const Tensor<S>&tm = val(m), &tv = val(v);
    require(tm.rank() == 2 && tv.rank() == 1 && tm.cols() == tv.dim(0), "add_rowvec", tm, tv);
    Tensor<S> out = tm;
    for (int64_t i = 0; i < tm.rows(); ++i)
      detail::axpy(tm.cols(), S(1), tv.data.data(), out.row_ptr(i));
    return push(std::move(out), needs(m) || needs(v), {m.id, v.id},
                [](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  if (Tensor<S>* gm = t.grad_slot(t.parent(id, 0))) {
                    detail::axpy(g.numel(), S(1), g.data.data(), gm->data.data());
                  }
                  if (Tensor<S>* gv = t.grad_slot(t.parent(id, 1))) {
                    for (int64_t i = 0; i < g.rows(); ++i)
                      detail::axpy(g.cols(), S(1), g.row_ptr(i), gv->data.data());
                  }
                });
  }

  // ---- reductions and nonlinear blocks --------------------------------

  /// Numerically stable softmax of a rank-1 vector.
  Ref softmax_vec(Ref v) {
    const Tensor<S>& tv = val(v);
    require(tv.rank() == 1 && tv.numel() >= 1, "softmax", tv, tv);
    Tensor<S> out = tv;
    S mx = out.at(0);
    for (S x : out.data) mx = std::max(mx, x);
    S z = 0;
    for (auto& x : out.data) {
      x = std::exp(x - mx);
      z += x;
    }
    for (auto& x : out.data) x /= z;
    return push(std::move(out), needs(v), {v.id}, [](Tape& t, int32_t id) {
      if (Tensor<S>* gv = t.grad_slot(t.parent(id, 0))) {
        const Tensor<S>&g = t.grads_[id], &y = t.node_val(id);
        const S gy = detail::dot_n(g.numel(), g.data.data(), y.data.data());
        for (int64_t i = 0; i < g.numel(); ++i) gv->at(i) += y.at(i) * (g.at(i) - gy);
      }
    });
  }

  /// Per-channel max across rows: [L,C] -> [C]. Ties go to the earliest row.
  Ref max_over_time(Ref m) {
    const Tensor<S>& tm = val(m);
    require(tm.rank() == 2, "max_over_time", tm, tm);
    const int64_t L = tm.rows(), C = tm.cols();
    Tensor<S> out({C});
    std::vector<int64_t> arg(static_cast<size_t>(C), 0);
    for (int64_t c = 0; c < C; ++c) out.at(c) = tm.at(0, c);
    for (int64_t i = 1; i < L; ++i)
      for (int64_t c = 0; c < C; ++c)
        if (tm.at(i, c) > out.at(c)) {
          out.at(c) = tm.at(i, c);
          arg[static_cast<size_t>(c)] = i;
        }
    return push(std::move(out), needs(m), {m.id},
                [arg = std::move(arg)](Tape& t, int32_t id) {
                  if (Tensor<S>* gm = t.grad_slot(t.parent(id, 0))) {
                    const Tensor<S>& g = t.grads_[id];
                    for (int64_t c = 0; c < g.numel(); ++c)
                      gm->at(arg[static_cast<size_t>(c)], c) += g.at(c);
                  }
                });
  }

  /// Stride-1 temporal convolution, no implicit padding:
  /// X[L,Cin], K[k,Cin,Cout], b[Cout] -> [L-k+1, Cout].
  Ref temporal_conv(Ref x, Ref kern, Ref bias) {
    const Tensor<S>&tx = val(x), &tk = val(kern), &tb = val(bias);
    require(tx.rank() == 2 && tk.rank() == 3 && tb.rank() == 1, "temporal_conv ranks", tx, tk);
    const int64_t L = tx.rows(), cin = tx.cols();
    const int64_t k = tk.dim(0), cout = tk.dim(2);
    require(tk.dim(1) == cin && tb.dim(0) == cout && L >= k, "temporal_conv dims", tx, tk);
    const int64_t lo = L - k + 1;
    Tensor<S> out({lo, cout});
    for (int64_t t0 = 0; t0 < lo; ++t0) {
      S* yrow = out.row_ptr(t0);
      std::copy(tb.data.begin(), tb.data.end(), yrow);
      for (int64_t dt = 0; dt < k; ++dt) {
        const S* xrow = tx.row_ptr(t0 + dt);
        const S* kbase = tk.data.data() + dt * cin * cout;
        for (int64_t c = 0; c < cin; ++c) {
          if (xrow[c] != S(0)) detail::axpy(cout, xrow[c], kbase + c * cout, yrow);
        }
      }
    }
    return push(std::move(out), needs(x) || needs(kern) || needs(bias),
                {x.id, kern.id, bias.id},
                [k, cin, cout, lo](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  const int32_t px = t.parent(id, 0), pk = t.parent(id, 1),
                                pb = t.parent(id, 2);
                  Tensor<S>* gx = t.grad_slot(px);
                  Tensor<S>* gk = t.grad_slot(pk);
                  Tensor<S>* gb = t.grad_slot(pb);
                  const Tensor<S>& X = t.node_val(px);
                  const Tensor<S>& K = t.node_val(pk);
                  for (int64_t t0 = 0; t0 < lo; ++t0) {
                    const S* grow = g.row_ptr(t0);
                    if (gb) detail::axpy(cout, S(1), grow, gb->data.data());
                    for (int64_t dt = 0; dt < k; ++dt) {
                      const S* xrow = X.row_ptr(t0 + dt);
                      const S* kbase = K.data.data() + dt * cin * cout;
                      for (int64_t c = 0; c < cin; ++c) {
                        if (gx)
                          gx->at(t0 + dt, c) += detail::dot_n(cout, grow, kbase + c * cout);
                        if (gk)
                          detail::axpy(cout, xrow[c],
                                       grow, gk->data.data() + (dt * cin + c) * cout);
                      }
                    }
                  }
                });
  }

  /// Temporal convolution over one-hot character rows, with the one-hot
  /// product folded into a kernel-row gather: Y[t] = b + sum_dt K[dt, idx[t+dt], :].
  Ref conv_onehot(const std::vector<int32_t>& indices, Ref kern, Ref bias) {
    const Tensor<S>&tk = val(kern), &tb = val(bias);
    require(tk.rank() == 3 && tb.rank() == 1 && tb.dim(0) == tk.dim(2),
            "conv_onehot dims", tk, tb);
    const int64_t L = static_cast<int64_t>(indices.size());
    const int64_t k = tk.dim(0), V = tk.dim(1), cout = tk.dim(2);
    require(L >= k, "conv_onehot: input shorter than receptive field", tk, tb);
    for (int32_t ix : indices)
      require(ix >= 0 && ix < V, "conv_onehot: index out of vocabulary", tk, tb);
    const int64_t lo = L - k + 1;
    Tensor<S> out({lo, cout});
    for (int64_t t0 = 0; t0 < lo; ++t0) {
      S* yrow = out.row_ptr(t0);
      std::copy(tb.data.begin(), tb.data.end(), yrow);
      for (int64_t dt = 0; dt < k; ++dt) {
        const int64_t row = indices[static_cast<size_t>(t0 + dt)];
        detail::axpy(cout, S(1), tk.data.data() + (dt * V + row) * cout, yrow);
      }
    }
    return push(std::move(out), needs(kern) || needs(bias), {kern.id, bias.id},
                [indices, k, V, cout, lo](Tape& t, int32_t id) {
                  const Tensor<S>& g = t.grads_[id];
                  Tensor<S>* gk = t.grad_slot(t.parent(id, 0));
                  Tensor<S>* gb = t.grad_slot(t.parent(id, 1));
                  for (int64_t t0 = 0; t0 < lo; ++t0) {
                    const S* grow = g.row_ptr(t0);
                    if (gb) detail::axpy(cout, S(1), grow, gb->data.data());
                    if (gk) {
                      for (int64_t dt = 0; dt < k; ++dt) {
                        const int64_t row = indices[static_cast<size_t>(t0 + dt)];
                        detail::axpy(cout, S(1), grow,
                                     gk->data.data() + (dt * V + row) * cout);
                      }
                    }
                  }
                });
  }

  /// cos(x, y) as a tape scalar. Rejects zero-norm operands.
  Ref cosine(Ref x, Ref y) {
    const Tensor<S>&tx = val(x), &ty = val(y);
    require(tx.rank() == 1 && tx.same_shape(ty), "cosine", tx, ty);
    const int64_t n = tx.numel();
    const double nx = std::sqrt(static_cast<double>(
        detail::dot_n(n, tx.data.data(), tx.data.data())));
    const double ny = std::sqrt(static_cast<double>(
        detail::dot_n(n, ty.data.data(), ty.data.data())));
    if (nx == 0.0 || ny == 0.0) {
      throw ZeroNormVector("cosine of a zero vector (degenerate embedding)");
    }
    const double d = static_cast<double>(detail::dot_n(n, tx.data.data(), ty.data.data()));
    Tensor<S> out({1});
    out.at(0) = static_cast<S>(d / (nx * ny));
    return push(std::move(out), needs(x) || needs(y), {x.id, y.id},
                [nx, ny, n](Tape& t, int32_t id) {
                  const double g = static_cast<double>(t.grads_[id].at(0));
                  const double c = static_cast<double>(t.node_val(id).at(0));
                  const int32_t px = t.parent(id, 0), py = t.parent(id, 1);
                  const Tensor<S>& xv = t.node_val(px);
                  const Tensor<S>& yv = t.node_val(py);
                  if (Tensor<S>* gx = t.grad_slot(px)) {
                    for (int64_t i = 0; i < n; ++i)
                      gx->at(i) += static_cast<S>(
                          g * (static_cast<double>(yv.at(i)) / (nx * ny) -
                               c * static_cast<double>(xv.at(i)) / (nx * nx)));
                  }
                  if (Tensor<S>* gy = t.grad_slot(py)) {
                    for (int64_t i = 0; i < n; ++i)
                      gy->at(i) += static_cast<S>(
                          g * (static_cast<double>(xv.at(i)) / (nx * ny) -
                               c * static_cast<double>(yv.at(i)) / (ny * ny)));
                  }
                });
  }

  // ---- backward --------------------------------------------------------

  void backward(Ref loss) {
    if (consumed_) throw Error("tape already consumed by a backward pass");
    consumed_ = true;
    const Tensor<S>& tl = val(loss);
    require(tl.numel() == 1, "backward: loss must be scalar", tl, tl);
    visited_.assign(nodes_.size(), 0);
    // Reverse DFS through grad-requiring ancestors.
    std::vector<int32_t> stack{loss.id};
    visited_[static_cast<size_t>(loss.id)] = 1;
    while (!stack.empty()) {
      const int32_t id = stack.back();
      stack.pop_back();
      for (int32_t p : nodes_[static_cast<size_t>(id)].parents) {
        if (nodes_[static_cast<size_t>(p)].requires_grad && !visited_[static_cast<size_t>(p)]) {
          visited_[static_cast<size_t>(p)] = 1;
          stack.push_back(p);
        }
      }
    }
    grads_.assign(nodes_.size(), Tensor<S>());
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (visited_[i]) grads_[i] = Tensor<S>(node_val(static_cast<int32_t>(i)).shape);
    }
    grads_[static_cast<size_t>(loss.id)].at(0) = S(1);
    for (int32_t id = loss.id; id >= 0; --id) {
      if (visited_[static_cast<size_t>(id)] && nodes_[static_cast<size_t>(id)].backprop) {
        nodes_[static_cast<size_t>(id)].backprop(*this, id);
      }
    }
  }

  const Tensor<S>& value(Ref r) const { return val(r); }

  /// Gradient of the last backward() w.r.t. node r; zero tensor if the node
  /// was not reached.
  Tensor<S> grad(Ref r) const {
    if (!consumed_) throw Error("grad requested before backward");
    const size_t i = static_cast<size_t>(r.id);
    if (!visited_.empty() && visited_[i]) return grads_[i];
    return Tensor<S>(val(r).shape);
  }

  /// True iff the node participated in the last backward pass.
  bool reached(Ref r) const {
    return consumed_ && visited_[static_cast<size_t>(r.id)] != 0;
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    const Tensor<S>* external = nullptr;
    bool requires_grad = false;
    std::vector<int32_t> parents;
    std::function<void(Tape&, int32_t)> backprop;
  };

  const Tensor<S>& node_val(int32_t id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.external ? *n.external : n.value;
  }
  const Tensor<S>& val(Ref r) const {
    if (r.id < 0 || r.id >= static_cast<int32_t>(nodes_.size()))
      throw Error("invalid tape ref");
    return node_val(r.id);
  }
  bool needs(Ref r) const { return nodes_[static_cast<size_t>(r.id)].requires_grad; }
  int32_t parent(int32_t id, int i) const {
    return nodes_[static_cast<size_t>(id)].parents[static_cast<size_t>(i)];
  }
  Tensor<S>* grad_slot(int32_t id) {
    return visited_[static_cast<size_t>(id)] ? &grads_[static_cast<size_t>(id)] : nullptr;
  }
  void accumulate(int32_t id, const Tensor<S>& g) {
    if (Tensor<S>* slot = grad_slot(id)) {
      detail::axpy(g.numel(), S(1), g.data.data(), slot->data.data());
    }
  }

  Ref push(Tensor<S> value, bool requires_grad, std::vector<int32_t> parents,
           std::function<void(Tape&, int32_t)> backprop) {
#ifndef NDEBUG
    if (!value.finite()) throw Error("non-finite value produced by forward op");
#endif
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backprop = requires_grad ? std::move(backprop) : nullptr;
    nodes_.push_back(std::move(n));
    return Ref{static_cast<int32_t>(nodes_.size()) - 1};
  }

  static void require(bool ok, const char* what, const Tensor<S>& a, const Tensor<S>& b) {
    if (!ok) {
      throw ShapeMismatch(std::string(what) + " (" + Tensor<S>::shape_str(a.shape) + " vs " +
                          Tensor<S>::shape_str(b.shape) + ")");
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<S>> grads_;
  std::vector<char> visited_;
  bool consumed_ = false;
};

}  // namespace charkb
