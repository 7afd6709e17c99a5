#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/tensor.hpp"

namespace lowshot {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Value {
  Tape* tape = nullptr;
  int idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
};

/// Reverse-mode differentiation tape over dense tensors.
///
/// Nodes are appended during the forward pass; creation order is a
/// topological order, so backward() is a single reverse sweep. A tape is
/// built fresh for every episode and discarded afterwards.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Tensor t) { return push(std::move(t), "leaf", {}, nullptr); }

  Value leaf_scalar(double v) { return leaf(Tensor::scalar(v)); }

  const Tensor& value(Value v) const { return node(v).value; }
  const Tensor& grad(Value v) const { return node(v).grad; }

  std::size_t size() const { return nodes_.size(); }

  const char* op_name(Value v) const { return node(v).op; }
  const std::vector<int>& parents(Value v) const { return node(v).parents; }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse, accumulating
  /// every node's gradient. Gradients of nodes created earlier survive (they
  /// are zeroed first), so one tape supports exactly one backward pass.
  void backward(Value loss) {
    check_mine(loss);
    require(node(loss).value.size() == 1,
            "backward: loss must be scalar, got shape ",
            node(loss).value.shape().str());
    for (auto& n : nodes_) n.grad.fill(0.0);
    nodes_[static_cast<std::size_t>(loss.idx)].grad[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back) {
        current_ = i;
        n.back(*this);
      }
    }
    current_ = -1;
  }

  // --- elementwise -------------------------------------------------------

  Value add(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape("add", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return push(std::move(out), "add", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx](Tape& t) {
                  const Tensor& g = t.out_grad();
                  t.acc(ai, [&](std::size_t i) { return g[i]; });
                  t.acc(bi, [&](std::size_t i) { return g[i]; });
                });
  }

  Value sub(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape("sub", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    return push(std::move(out), "sub", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx](Tape& t) {
                  const Tensor& g = t.out_grad();
                  t.acc(ai, [&](std::size_t i) { return g[i]; });
                  t.acc(bi, [&](std::size_t i) { return -g[i]; });
                });
  }

  Value mul(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape("mul", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return push(std::move(out), "mul", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& va = t.nodes_[ai].value;
                  const Tensor& vb = t.nodes_[bi].value;
                  t.acc(ai, [&](std::size_t i) { return g[i] * vb[i]; });
                  t.acc(bi, [&](std::size_t i) { return g[i] * va[i]; });
                });
  }

  Value relu(Value a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = out[i] > 0.0 ? out[i] : 0.0;
    // relu'(0) := 0
    return push(std::move(out), "relu", {a.idx}, [ai = a.idx](Tape& t) {
      const Tensor& g = t.out_grad();
      const Tensor& va = t.nodes_[ai].value;
      t.acc(ai, [&](std::size_t i) { return va[i] > 0.0 ? g[i] : 0.0; });
    });
  }

  Value tanh_(Value a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return push(std::move(out), "tanh", {a.idx},
                [ai = a.idx, oi = next_idx()](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& y = t.nodes_[oi].value;
                  t.acc(ai, [&](std::size_t i) { return g[i] * (1.0 - y[i] * y[i]); });
                });
  }

  Value sigmoid(Value a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return push(std::move(out), "sigmoid", {a.idx},
                [ai = a.idx, oi = next_idx()](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& y = t.nodes_[oi].value;
                  t.acc(ai, [&](std::size_t i) { return g[i] * y[i] * (1.0 - y[i]); });
                });
  }

  Value exp_(Value a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return push(std::move(out), "exp", {a.idx},
                [ai = a.idx, oi = next_idx()](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& y = t.nodes_[oi].value;
                  t.acc(ai, [&](std::size_t i) { return g[i] * y[i]; });
                });
  }

  Value log_(Value a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!(out[i] > 0.0))
        fail_domain("log: non-positive input ", out[i], " at index ", i);
      out[i] = std::log(out[i]);
    }
    return push(std::move(out), "log", {a.idx}, [ai = a.idx](Tape& t) {
      const Tensor& g = t.out_grad();
      const Tensor& va = t.nodes_[ai].value;
      t.acc(ai, [&](std::size_t i) { return g[i] / va[i]; });
    });
  }

  Value scale(Value a, double c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return push(std::move(out), "scale", {a.idx}, [ai = a.idx, c](Tape& t) {
      const Tensor& g = t.out_grad();
      t.acc(ai, [&](std::size_t i) { return c * g[i]; });
    });
  }

  Value neg(Value a) { return scale(a, -1.0); }

  // --- linear algebra ----------------------------------------------------

  Value matmul(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.shape().rank() == 2 && tb.shape().rank() == 2,
            "matmul: needs rank-2 operands, got ", ta.shape().str(), " and ",
            tb.shape().str());
    const int m = ta.shape().rows(), k = ta.shape().cols();
    const int k2 = tb.shape().rows(), n = tb.shape().cols();
    require(k == k2, "matmul: inner dims disagree, ", ta.shape().str(), " vs ",
            tb.shape().str());
    Tensor out(Shape::mat(m, n));
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const double av = ta.at(i, p);
        if (av == 0.0) continue;
        for (int j = 0; j < n; ++j) out.at(i, j) += av * tb.at(p, j);
      }
    return push(std::move(out), "matmul", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx, m, k, n](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& va = t.nodes_[ai].value;
                  const Tensor& vb = t.nodes_[bi].value;
                  Tensor& ga = t.nodes_[ai].grad;
                  Tensor& gb = t.nodes_[bi].grad;
                  // ga += g . vb^T ; gb += va^T . g
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                      const double gv = g.at(i, j);
                      if (gv == 0.0) continue;
                      for (int p = 0; p < k; ++p) {
                        ga.at(i, p) += gv * vb.at(p, j);
                        gb.at(p, j) += va.at(i, p) * gv;
                      }
                    }
                });
  }

  Value matvec(Value a, Value x) {
    const Tensor& ta = value(a);
    const Tensor& tx = value(x);
    require(ta.shape().rank() == 2 && tx.shape().rank() == 1,
            "matvec: needs matrix and vector, got ", ta.shape().str(), " and ",
            tx.shape().str());
    const int m = ta.shape().rows(), k = ta.shape().cols();
    require(k == tx.shape().dim(0), "matvec: dims disagree, ",
            ta.shape().str(), " vs ", tx.shape().str());
    Tensor out(Shape::vec(m));
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ta.at(i, p) * tx[static_cast<std::size_t>(p)];
      out[static_cast<std::size_t>(i)] = s;
    }
    return push(std::move(out), "matvec", {a.idx, x.idx},
                [ai = a.idx, xi = x.idx, m, k](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& va = t.nodes_[ai].value;
                  const Tensor& vx = t.nodes_[xi].value;
                  Tensor& ga = t.nodes_[ai].grad;
                  Tensor& gx = t.nodes_[xi].grad;
                  for (int i = 0; i < m; ++i) {
                    const double gv = g[static_cast<std::size_t>(i)];
                    if (gv == 0.0) continue;
                    for (int p = 0; p < k; ++p) {
                      ga.at(i, p) += gv * vx[static_cast<std::size_t>(p)];
                      gx[static_cast<std::size_t>(p)] += va.at(i, p) * gv;
                    }
                  }
                });
  }

  // y = A^T x with A [m x k], x [m] -> [k]
  Value matvec_t(Value a, Value x) {
    const Tensor& ta = value(a);
    const Tensor& tx = value(x);
    require(ta.shape().rank() == 2 && tx.shape().rank() == 1,
            "matvec_t: needs matrix and vector, got ", ta.shape().str(),
            " and ", tx.shape().str());
    const int m = ta.shape().rows(), k = ta.shape().cols();
    require(m == tx.shape().dim(0), "matvec_t: dims disagree, ",
            ta.shape().str(), " vs ", tx.shape().str());
    Tensor out(Shape::vec(k));
    for (int i = 0; i < m; ++i) {
      const double xv = tx[static_cast<std::size_t>(i)];
      if (xv == 0.0) continue;
      for (int p = 0; p < k; ++p)
        out[static_cast<std::size_t>(p)] += ta.at(i, p) * xv;
    }
    return push(std::move(out), "matvec_t", {a.idx, x.idx},
                [ai = a.idx, xi = x.idx, m, k](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& va = t.nodes_[ai].value;
                  const Tensor& vx = t.nodes_[xi].value;
                  Tensor& ga = t.nodes_[ai].grad;
                  Tensor& gx = t.nodes_[xi].grad;
                  for (int i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (int p = 0; p < k; ++p) {
                      const double gv = g[static_cast<std::size_t>(p)];
                      ga.at(i, p) += gv * vx[static_cast<std::size_t>(i)];
                      s += va.at(i, p) * gv;
                    }
                    gx[static_cast<std::size_t>(i)] += s;
                  }
                });
  }

  // M [n x d] + v [d] broadcast over rows
  Value add_rowvec(Value m, Value v) {
    const Tensor& tm = value(m);
    const Tensor& tv = value(v);
    require(tm.shape().rank() == 2 && tv.shape().rank() == 1 &&
                tm.shape().cols() == tv.shape().dim(0),
            "add_rowvec: shapes ", tm.shape().str(), " and ",
            tv.shape().str(), " incompatible");
    const int rows = tm.shape().rows(), cols = tm.shape().cols();
    Tensor out = tm;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out.at(i, j) += tv[static_cast<std::size_t>(j)];
    return push(std::move(out), "add_rowvec", {m.idx, v.idx},
                [mi = m.idx, vi = v.idx, rows, cols](Tape& t) {
                  const Tensor& g = t.out_grad();
                  Tensor& gm = t.nodes_[mi].grad;
                  Tensor& gv = t.nodes_[vi].grad;
                  for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) {
                      gm.at(i, j) += g.at(i, j);
                      gv[static_cast<std::size_t>(j)] += g.at(i, j);
                    }
                });
  }

  // --- structure ---------------------------------------------------------

  Value stack_rows(const std::vector<Value>& rows) {
    require(!rows.empty(), "stack_rows: empty input");
    const int d = value(rows[0]).shape().dim(0);
    std::vector<int> parents;
    Tensor out(Shape::mat(static_cast<int>(rows.size()), d));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor& tv = value(rows[r]);
      require(tv.shape().rank() == 1 && tv.shape().dim(0) == d,
              "stack_rows: row ", r, " has shape ", tv.shape().str());
      for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = tv[static_cast<std::size_t>(j)];
      parents.push_back(rows[r].idx);
    }
    return push(std::move(out), "stack_rows", std::move(parents),
                [ps = indices_of(rows), d](Tape& t) {
                  const Tensor& g = t.out_grad();
                  for (std::size_t r = 0; r < ps.size(); ++r) {
                    Tensor& gr = t.nodes_[ps[r]].grad;
                    for (int j = 0; j < d; ++j)
                      gr[static_cast<std::size_t>(j)] += g.at(static_cast<int>(r), j);
                  }
                });
  }

  Value row(Value m, int r) {
    const Tensor& tm = value(m);
    require(tm.shape().rank() == 2, "row: needs a matrix, got ",
            tm.shape().str());
    require(r >= 0 && r < tm.shape().rows(), "row: index ", r,
            " out of range for ", tm.shape().str());
    const int cols = tm.shape().cols();
    Tensor out(Shape::vec(cols));
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] = tm.at(r, j);
    return push(std::move(out), "row", {m.idx},
                [mi = m.idx, r, cols](Tape& t) {
                  const Tensor& g = t.out_grad();
                  Tensor& gm = t.nodes_[mi].grad;
                  for (int j = 0; j < cols; ++j)
                    gm.at(r, j) += g[static_cast<std::size_t>(j)];
                });
  }

  // Gathers rows by index; duplicate indices accumulate gradient.
  Value select_rows(Value m, std::vector<int> idx) {
    const Tensor& tm = value(m);
    require(tm.shape().rank() == 2, "select_rows: needs a matrix, got ",
            tm.shape().str());
    require(!idx.empty(), "select_rows: empty index list");
    const int cols = tm.shape().cols();
    Tensor out(Shape::mat(static_cast<int>(idx.size()), cols));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      require(idx[r] >= 0 && idx[r] < tm.shape().rows(), "select_rows: index ",
              idx[r], " out of range for ", tm.shape().str());
      for (int j = 0; j < cols; ++j)
        out.at(static_cast<int>(r), j) = tm.at(idx[r], j);
    }
    return push(std::move(out), "select_rows", {m.idx},
                [mi = m.idx, idx = std::move(idx), cols](Tape& t) {
                  const Tensor& g = t.out_grad();
                  Tensor& gm = t.nodes_[mi].grad;
                  for (std::size_t r = 0; r < idx.size(); ++r)
                    for (int j = 0; j < cols; ++j)
                      gm.at(idx[r], j) += g.at(static_cast<int>(r), j);
                });
  }

  Value select_element(Value v, int i) {
    const Tensor& tv = value(v);
    require(tv.shape().rank() == 1, "select_element: needs a vector, got ",
            tv.shape().str());
    require(i >= 0 && i < tv.shape().dim(0), "select_element: index ", i,
            " out of range for ", tv.shape().str());
    Tensor out = Tensor::scalar(tv[static_cast<std::size_t>(i)]);
    return push(std::move(out), "select_element", {v.idx},
                [vi = v.idx, i](Tape& t) {
                  t.nodes_[vi].grad[static_cast<std::size_t>(i)] += t.out_grad()[0];
                });
  }

  Value concat(const std::vector<Value>& parts) {
    require(!parts.empty(), "concat: empty input");
    std::size_t total = 0;
    for (Value p : parts) {
      require(value(p).shape().rank() <= 1, "concat: needs vectors, got ",
              value(p).shape().str());
      total += value(p).size();
    }
    Tensor out(Shape::vec(static_cast<int>(total)));
    std::size_t off = 0;
    for (Value p : parts) {
      const Tensor& tv = value(p);
      for (std::size_t i = 0; i < tv.size(); ++i) out[off + i] = tv[i];
      off += tv.size();
    }
    return push(std::move(out), "concat", indices_vec(parts),
                [ps = indices_of(parts)](Tape& t) {
                  const Tensor& g = t.out_grad();
                  std::size_t off = 0;
                  for (int pi : ps) {
                    Tensor& gp = t.nodes_[pi].grad;
                    for (std::size_t i = 0; i < gp.size(); ++i)
                      gp[i] += g[off + i];
                    off += gp.size();
                  }
                });
  }

  // [n x a] ++ [n x b] -> [n x (a+b)]
  Value hstack(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.shape().rank() == 2 && tb.shape().rank() == 2 &&
                ta.shape().rows() == tb.shape().rows(),
            "hstack: shapes ", ta.shape().str(), " and ", tb.shape().str(),
            " incompatible");
    const int n = ta.shape().rows(), ca = ta.shape().cols(), cb = tb.shape().cols();
    Tensor out(Shape::mat(n, ca + cb));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < ca; ++j) out.at(i, j) = ta.at(i, j);
      for (int j = 0; j < cb; ++j) out.at(i, ca + j) = tb.at(i, j);
    }
    return push(std::move(out), "hstack", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx, n, ca, cb](Tape& t) {
                  const Tensor& g = t.out_grad();
                  Tensor& ga = t.nodes_[ai].grad;
                  Tensor& gb = t.nodes_[bi].grad;
                  for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
                    for (int j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
                  }
                });
  }

  // --- reductions --------------------------------------------------------

  Value sum_all(Value a) {
    Tensor out = Tensor::scalar(value(a).sum());
    return push(std::move(out), "sum", {a.idx}, [ai = a.idx](Tape& t) {
      const double g = t.out_grad()[0];
      t.acc(ai, [&](std::size_t) { return g; });
    });
  }

  Value mean_all(Value a) {
    const double n = static_cast<double>(value(a).size());
    Tensor out = Tensor::scalar(value(a).sum() / n);
    return push(std::move(out), "mean", {a.idx}, [ai = a.idx, n](Tape& t) {
      const double g = t.out_grad()[0] / n;
      t.acc(ai, [&](std::size_t) { return g; });
    });
  }

  // column means of [n x d] -> [d]
  Value mean_rows(Value m) {
    const Tensor& tm = value(m);
    require(tm.shape().rank() == 2, "mean_rows: needs a matrix, got ",
            tm.shape().str());
    const int rows = tm.shape().rows(), cols = tm.shape().cols();
    Tensor out(Shape::vec(cols));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        out[static_cast<std::size_t>(j)] += tm.at(i, j) / rows;
    return push(std::move(out), "mean_rows", {m.idx},
                [mi = m.idx, rows, cols](Tape& t) {
                  const Tensor& g = t.out_grad();
                  Tensor& gm = t.nodes_[mi].grad;
                  for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j)
                      gm.at(i, j) += g[static_cast<std::size_t>(j)] / rows;
                });
  }

  /// Numerically stable softmax over a vector (max subtraction).
  Value softmax(Value s) {
    const Tensor& ts = value(s);
    require(ts.shape().rank() == 1, "softmax: needs a vector, got ",
            ts.shape().str());
    const std::size_t k = ts.size();
    double mx = ts[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, ts[i]);
    Tensor out(Shape::vec(static_cast<int>(k)));
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      out[i] = std::exp(ts[i] - mx);
      z += out[i];
    }
    for (std::size_t i = 0; i < k; ++i) out[i] /= z;
    return push(std::move(out), "softmax", {s.idx},
                [si = s.idx, oi = next_idx(), k](Tape& t) {
                  const Tensor& g = t.out_grad();
                  const Tensor& y = t.nodes_[oi].value;
                  double dot = 0.0;
                  for (std::size_t i = 0; i < k; ++i) dot += g[i] * y[i];
                  Tensor& gs = t.nodes_[si].grad;
                  for (std::size_t i = 0; i < k; ++i)
                    gs[i] += y[i] * (g[i] - dot);
                });
  }

  Value squared_euclidean(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape("squared_euclidean", ta, tb);
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      const double d = ta[i] - tb[i];
      s += d * d;
    }
    return push(Tensor::scalar(s), "squared_euclidean", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx](Tape& t) {
                  const double g = t.out_grad()[0];
                  const Tensor& va = t.nodes_[ai].value;
                  const Tensor& vb = t.nodes_[bi].value;
                  t.acc(ai, [&](std::size_t i) { return 2.0 * (va[i] - vb[i]) * g; });
                  t.acc(bi, [&](std::size_t i) { return -2.0 * (va[i] - vb[i]) * g; });
                });
  }

  // 1 - <a,b> / (|a||b|)
  Value cosine_distance(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape("cosine_distance", ta, tb);
    const double na = ta.norm(), nb = tb.norm();
    if (na == 0.0 || nb == 0.0)
      fail_domain("cosine_distance: zero-norm input (|a|=", na, ", |b|=", nb, ")");
    double dot = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) dot += ta[i] * tb[i];
    const double c = 1.0 - dot / (na * nb);
    return push(Tensor::scalar(c), "cosine_distance", {a.idx, b.idx},
                [ai = a.idx, bi = b.idx, na, nb, dot](Tape& t) {
                  const double g = t.out_grad()[0];
                  const Tensor& va = t.nodes_[ai].value;
                  const Tensor& vb = t.nodes_[bi].value;
                  // d/da (1 - dot/(na nb)) = -b/(na nb) + dot a/(na^3 nb)
                  t.acc(ai, [&](std::size_t i) {
                    return g * (-vb[i] / (na * nb) + dot * va[i] / (na * na * na * nb));
                  });
                  t.acc(bi, [&](std::size_t i) {
                    return g * (-va[i] / (na * nb) + dot * vb[i] / (nb * nb * nb * na));
                  });
                });
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;
    const char* op;
    std::vector<int> parents;
  };

  int next_idx() const { return static_cast<int>(nodes_.size()); }

  Value push(Tensor value, const char* op, std::vector<int> parents,
             std::function<void(Tape&)> back) {
    Node n;
    n.grad = Tensor::zeros(value.shape());
    n.value = std::move(value);
    n.back = std::move(back);
    n.op = op;
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node(Value v) const {
    check_mine(v);
    return nodes_[static_cast<std::size_t>(v.idx)];
  }

  void check_mine(Value v) const {
    require(v.tape == this && v.idx >= 0 &&
                v.idx < static_cast<int>(nodes_.size()),
            "Value does not belong to this tape");
  }

  static void check_same_shape(const char* op, const Tensor& a,
                               const Tensor& b) {
    require(a.shape() == b.shape(), op, ": shape mismatch ", a.shape().str(),
            " vs ", b.shape().str());
  }

  static std::vector<int> indices_vec(const std::vector<Value>& vs) {
    std::vector<int> out;
    out.reserve(vs.size());
    for (Value v : vs) out.push_back(v.idx);
    return out;
  }

  static std::vector<int> indices_of(const std::vector<Value>& vs) {
    return indices_vec(vs);
  }

  // grad of the node whose closure is currently executing
  const Tensor& out_grad() const {
    return nodes_[static_cast<std::size_t>(current_)].grad;
  }

  template <typename F>
  void acc(int target, F contribution) {
    Tensor& g = nodes_[static_cast<std::size_t>(target)].grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution(i);
  }

  std::vector<Node> nodes_;
  int current_ = -1;
};

}  // namespace lowshot
