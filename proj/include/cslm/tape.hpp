#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/mat.hpp"
#include "cslm/params.hpp"
#include "cslm/rng.hpp"

namespace cslm {

enum class Act { sigmoid, tanh, relu, linear };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::sigmoid: return "sigmoid";
    case Act::tanh: return "tanh";
    case Act::relu: return "relu";
    case Act::linear: return "linear";
  }
  return "?";
}

inline Act act_from_name(const std::string& s) {
  if (s == "sigmoid") return Act::sigmoid;
  if (s == "tanh") return Act::tanh;
  if (s == "relu") return Act::relu;
  if (s == "linear") return Act::linear;
  throw ConfigError("unknown activation '" + s + "' (expected sigmoid|tanh|relu|linear)");
}

// Inverted-dropout mask: entries are 0 with probability rate, else 1/(1-rate).
template <typename T>
Mat<T> dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Mat<T> m(rows, cols, T(1));
  if (rate == 0.0) return m;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& v : m.data) v = rng.next_double() < rate ? T(0) : keep;
  return m;
}

// Loss value of mean -log(prob of target) over masked-in positions.
template <typename T>
T masked_cross_entropy_value(const Mat<T>& probs, const std::vector<std::int32_t>& targets,
                             const std::vector<std::uint8_t>& mask) {
  if (targets.size() != probs.rows || mask.size() != probs.rows) {
    throw DimError("masked cross entropy: " + std::to_string(probs.rows) + " rows vs " +
                   std::to_string(targets.size()) + " targets, " + std::to_string(mask.size()) +
                   " mask entries");
  }
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= probs.cols) {
      throw DataError("target label " + std::to_string(targets[i]) + " out of range at position " +
                      std::to_string(i));
    }
    total -= std::log(static_cast<double>(probs.at(i, static_cast<std::size_t>(targets[i]))));
    ++n;
  }
  return n ? static_cast<T>(total / static_cast<double>(n)) : T(0);
}

// Reverse-mode tape over Mat<T>. Ops evaluate eagerly and, in recording mode,
// register a backward closure. backward() replays closures in reverse and then
// flushes leaf gradients into the bound ParamStore entries; the flush is
// additive, so repeated backward calls accumulate. Node-local gradients are
// scratch, reset on every backward call.
template <typename T>
class Tape {
 public:
  using NodeId = std::size_t;

  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }

  const Mat<T>& value(NodeId id) const { return nodes_[id].value; }
  Mat<T>& grad(NodeId id) { return nodes_[id].grad; }

  NodeId input(Mat<T> v) { return push(std::move(v), {}); }

  // Leaf bound to a named parameter; backward adds the node gradient into the
  // store's gradient for that entry.
  NodeId param(ParamStore<T>& store, const std::string& name) {
    auto& e = store.entry(name);
    NodeId id = push(e.value, {});
    if (record_) param_binds_.push_back({id, &e.grad});
    return id;
  }

  // Embedding lookup: value holds the selected rows; backward scatter-adds row
  // gradients back into the table, so untouched rows keep zero gradient.
  NodeId gather_rows(ParamStore<T>& store, const std::string& name,
                     const std::vector<std::int32_t>& ids) {
    auto& e = store.entry(name);
    Mat<T> out(ids.size(), e.value.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= e.value.rows) {
        throw DataError("row id " + std::to_string(ids[i]) + " out of range (table has " +
                        std::to_string(e.value.rows) + " rows) at position " + std::to_string(i));
      }
      const T* src = e.value.row(static_cast<std::size_t>(ids[i]));
      std::copy(src, src + e.value.cols, out.row(i));
    }
    NodeId id = push(std::move(out), {});
    if (record_) gather_binds_.push_back({id, &e.grad, ids});
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) { return matmul_impl(a, false, b, false); }

  // a * b^T; lets weights keep their column-convention shapes.
  NodeId matmul_nt(NodeId a, NodeId b) { return matmul_impl(a, false, b, true); }

  NodeId add(NodeId a, NodeId b) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    if (!av.same_shape(bv)) {
      throw DimError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    }
    Mat<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      t.nodes_[a].grad += g;
      t.nodes_[b].grad += g;
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    if (!av.same_shape(bv)) {
      throw DimError("mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    }
    Mat<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      Mat<T>& ga = t.nodes_[a].grad;
      Mat<T>& gb = t.nodes_[b].grad;
      const Mat<T>& av2 = t.nodes_[a].value;
      const Mat<T>& bv2 = t.nodes_[b].value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.data[i] += g.data[i] * bv2.data[i];
        gb.data[i] += g.data[i] * av2.data[i];
      }
    });
  }

  // scale * a + shift, elementwise.
  NodeId affine(NodeId a, T scale, T shift) {
    Mat<T> out = nodes_[a].value;
    for (auto& v : out.data) v = scale * v + shift;
    return push(std::move(out), [a, scale](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      Mat<T>& ga = t.nodes_[a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += scale * g.data[i];
    });
  }

  // m + bias, bias is 1 x cols broadcast over every row.
  NodeId add_row_bias(NodeId m, NodeId bias) {
    const Mat<T>& mv = nodes_[m].value;
    const Mat<T>& bv = nodes_[bias].value;
    if (bv.rows != 1 || bv.cols != mv.cols) {
      throw DimError("bias add: bias " + bv.shape_str() + " does not broadcast over " +
                     mv.shape_str());
    }
    Mat<T> out = mv;
    for (std::size_t r = 0; r < out.rows; ++r) {
      T* row = out.row(r);
      for (std::size_t c = 0; c < out.cols; ++c) row[c] += bv.data[c];
    }
    return push(std::move(out), [m, bias](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      t.nodes_[m].grad += g;
      Mat<T>& gb = t.nodes_[bias].grad;
      for (std::size_t r = 0; r < g.rows; ++r) {
        const T* row = g.row(r);
        for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += row[c];
      }
    });
  }

  NodeId activation(NodeId x, Act kind) {
    const Mat<T>& xv = nodes_[x].value;
    Mat<T> out = xv;
    switch (kind) {
      case Act::sigmoid:
        for (auto& v : out.data) {
          // Split by sign so exp never overflows.
          if (v >= T(0)) {
            v = T(1) / (T(1) + std::exp(-v));
          } else {
            T e = std::exp(v);
            v = e / (T(1) + e);
          }
        }
        break;
      case Act::tanh:
        for (auto& v : out.data) v = std::tanh(v);
        break;
      case Act::relu:
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        break;
      case Act::linear:
        break;
    }
    return push(std::move(out), [x, kind](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      const Mat<T>& y = t.nodes_[self].value;
      Mat<T>& gx = t.nodes_[x].grad;
      switch (kind) {
        case Act::sigmoid:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
          break;
        case Act::tanh:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
          break;
        case Act::relu:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx.data[i] += y.data[i] > T(0) ? g.data[i] : T(0);
          break;
        case Act::linear:
          gx += g;
          break;
      }
    });
  }

  // Row-wise softmax with per-row max subtraction.
  NodeId softmax_rows(NodeId x) {
    const Mat<T>& xv = nodes_[x].value;
    if (xv.cols < 1) throw DimError("softmax: need at least one column");
    Mat<T> out(xv.rows, xv.cols);
    for (std::size_t r = 0; r < xv.rows; ++r) {
      const T* in = xv.row(r);
      T* o = out.row(r);
      T mx = in[0];
      for (std::size_t c = 1; c < xv.cols; ++c) mx = std::max(mx, in[c]);
      T sum = T(0);
      for (std::size_t c = 0; c < xv.cols; ++c) {
        o[c] = std::exp(in[c] - mx);
        sum += o[c];
      }
      for (std::size_t c = 0; c < xv.cols; ++c) o[c] /= sum;
    }
    return push(std::move(out), [x](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      const Mat<T>& y = t.nodes_[self].value;
      Mat<T>& gx = t.nodes_[x].grad;
      for (std::size_t r = 0; r < g.rows; ++r) {
        const T* gr = g.row(r);
        const T* yr = y.row(r);
        T dot = T(0);
        for (std::size_t c = 0; c < g.cols; ++c) dot += gr[c] * yr[c];
        T* gxr = gx.row(r);
        for (std::size_t c = 0; c < g.cols; ++c) gxr[c] += yr[c] * (gr[c] - dot);
      }
    });
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    if (av.rows != bv.rows) {
      throw DimError("concat: row counts differ, " + av.shape_str() + " vs " + bv.shape_str());
    }
    Mat<T> out(av.rows, av.cols + bv.cols);
    for (std::size_t r = 0; r < av.rows; ++r) {
      std::copy(av.row(r), av.row(r) + av.cols, out.row(r));
      std::copy(bv.row(r), bv.row(r) + bv.cols, out.row(r) + av.cols);
    }
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      Mat<T>& ga = t.nodes_[a].grad;
      Mat<T>& gb = t.nodes_[b].grad;
      for (std::size_t r = 0; r < g.rows; ++r) {
        const T* gr = g.row(r);
        T* gar = ga.row(r);
        T* gbr = gb.row(r);
        for (std::size_t c = 0; c < ga.cols; ++c) gar[c] += gr[c];
        for (std::size_t c = 0; c < gb.cols; ++c) gbr[c] += gr[ga.cols + c];
      }
    });
  }

  NodeId slice_rows(NodeId a, std::size_t row0, std::size_t nrows) {
    const Mat<T>& av = nodes_[a].value;
    if (row0 + nrows > av.rows) {
      throw DimError("slice: rows [" + std::to_string(row0) + ", " + std::to_string(row0 + nrows) +
                     ") exceed " + av.shape_str());
    }
    Mat<T> out(nrows, av.cols);
    std::copy(av.row(row0), av.row(row0) + nrows * av.cols, out.data.data());
    return push(std::move(out), [a, row0](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      Mat<T>& ga = t.nodes_[a].grad;
      for (std::size_t r = 0; r < g.rows; ++r) {
        const T* gr = g.row(r);
        T* gar = ga.row(row0 + r);
        for (std::size_t c = 0; c < g.cols; ++c) gar[c] += gr[c];
      }
    });
  }

  // Stack 1 x c rows into an n x c matrix, preserving order.
  NodeId stack_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw DimError("stack: no rows given");
    const std::size_t cols = nodes_[parts[0]].value.cols;
    Mat<T> out(parts.size(), cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Mat<T>& pv = nodes_[parts[i]].value;
      if (pv.rows != 1 || pv.cols != cols) {
        throw DimError("stack: part " + std::to_string(i) + " has shape " + pv.shape_str());
      }
      std::copy(pv.data.begin(), pv.data.end(), out.row(i));
    }
    return push(std::move(out), [parts](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        T* gp = t.nodes_[parts[i]].grad.row(0);
        const T* gr = g.row(i);
        for (std::size_t c = 0; c < g.cols; ++c) gp[c] += gr[c];
      }
    });
  }

  // Sum of all elements, as a 1x1 scalar.
  NodeId sum_all(NodeId a) {
    Mat<T> out(1, 1);
    for (T v : nodes_[a].value.data) out.data[0] += v;
    return push(std::move(out), [a](Tape& t, NodeId self) {
      const T g = t.nodes_[self].grad.data[0];
      for (auto& v : t.nodes_[a].grad.data) v += g;
    });
  }

  // Weighted sum of 1x1 scalars: sum_k w_k * x_k.
  NodeId weighted_sum(const std::vector<NodeId>& xs, const std::vector<T>& w) {
    if (xs.size() != w.size()) {
      throw ConfigError("weighted sum: " + std::to_string(xs.size()) + " terms vs " +
                        std::to_string(w.size()) + " weights");
    }
    Mat<T> out(1, 1);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const Mat<T>& xv = nodes_[xs[k]].value;
      if (xv.rows != 1 || xv.cols != 1) {
        throw DimError("weighted sum: term " + std::to_string(k) + " is not scalar");
      }
      out.data[0] += w[k] * xv.data[0];
    }
    return push(std::move(out), [xs, w](Tape& t, NodeId self) {
      const T g = t.nodes_[self].grad.data[0];
      for (std::size_t k = 0; k < xs.size(); ++k) t.nodes_[xs[k]].grad.data[0] += w[k] * g;
    });
  }

  // Fused path: loss is the masked mean of -log softmax(logits)[target]. The
  // gradient is written straight into the logits node as
  // mask * (probs - onehot) / n_masked, bypassing the probs node; `probs` is
  // only read for its values. Masked-out positions contribute nothing, and an
  // all-masked input yields loss 0 with zero gradient.
  NodeId masked_xent(NodeId logits, NodeId probs, const std::vector<std::int32_t>& targets,
                     std::vector<std::uint8_t> mask) {
    const Mat<T>& lv = nodes_[logits].value;
    if (targets.size() != lv.rows || mask.size() != lv.rows) {
      throw DimError("cross entropy: " + std::to_string(lv.rows) + " positions vs " +
                     std::to_string(targets.size()) + " targets, " + std::to_string(mask.size()) +
                     " mask entries");
    }
    if (!nodes_[probs].value.same_shape(lv)) {
      throw DimError("cross entropy: probs shape " + nodes_[probs].value.shape_str() +
                     " vs logits " + lv.shape_str());
    }
    std::size_t n_masked = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < lv.rows; ++i) {
      if (!mask[i]) continue;
      if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= lv.cols) {
        throw DataError("target label " + std::to_string(targets[i]) +
                        " out of range at position " + std::to_string(i));
      }
      const T* row = lv.row(i);
      T mx = row[0];
      for (std::size_t c = 1; c < lv.cols; ++c) mx = std::max(mx, row[c]);
      T sum = T(0);
      for (std::size_t c = 0; c < lv.cols; ++c) sum += std::exp(row[c] - mx);
      total += static_cast<double>(std::log(sum) + mx - row[static_cast<std::size_t>(targets[i])]);
      ++n_masked;
    }
    Mat<T> out(1, 1);
    out.data[0] = n_masked ? static_cast<T>(total / static_cast<double>(n_masked)) : T(0);
    return push(std::move(out),
                [logits, probs, targets, mask = std::move(mask), n_masked](Tape& t, NodeId self) {
                  if (!n_masked) return;
                  const T g = t.nodes_[self].grad.data[0];
                  const T scale = g / static_cast<T>(n_masked);
                  const Mat<T>& y = t.nodes_[probs].value;
                  Mat<T>& gl = t.nodes_[logits].grad;
                  for (std::size_t i = 0; i < y.rows; ++i) {
                    if (!mask[i]) continue;
                    const T* yr = y.row(i);
                    T* gr = gl.row(i);
                    for (std::size_t c = 0; c < y.cols; ++c) gr[c] += scale * yr[c];
                    gr[static_cast<std::size_t>(targets[i])] -= scale;
                  }
                });
  }

  // Runs all registered closures in reverse creation order, then flushes leaf
  // gradients into their parameter entries. May be called repeatedly; each call
  // adds another full gradient into the store.
  void backward(NodeId root, T seed = T(1)) {
    if (!record_) {
      throw StateError("backward: no cached forward pass (tape was built in eval mode)");
    }
    const Mat<T>& rv = nodes_[root].value;
    if (rv.rows != 1 || rv.cols != 1) {
      throw DimError("backward: root must be scalar, got " + rv.shape_str());
    }
    for (auto& n : nodes_) {
      n.grad = Mat<T>(n.value.rows, n.value.cols);
    }
    nodes_[root].grad.data[0] = seed;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(*this, i);
    }
    for (auto& b : param_binds_) *b.grad += nodes_[b.node].grad;
    for (auto& gb : gather_binds_) {
      const Mat<T>& g = nodes_[gb.node].grad;
      for (std::size_t i = 0; i < gb.ids.size(); ++i) {
        T* dst = gb.grad->row(static_cast<std::size_t>(gb.ids[i]));
        const T* src = g.row(i);
        for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
      }
    }
  }

 private:
  using BackFn = std::function<void(Tape&, NodeId)>;

  struct Node {
    Mat<T> value;
    Mat<T> grad;
    BackFn back;
  };
  struct ParamBind {
    NodeId node;
    Mat<T>* grad;
  };
  struct GatherBind {
    NodeId node;
    Mat<T>* grad;
    std::vector<std::int32_t> ids;
  };

  NodeId push(Mat<T> v, BackFn back) {
    if (!v.all_finite()) {
      throw NumericError("non-finite value produced by tensor op (node " +
                         std::to_string(nodes_.size()) + ")");
    }
    nodes_.push_back(Node{std::move(v), Mat<T>(), record_ ? std::move(back) : BackFn{}});
    return nodes_.size() - 1;
  }

  NodeId matmul_impl(NodeId a, bool ta, NodeId b, bool tb) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    Mat<T> out = matmul_vals(av, ta, bv, tb);
    // dA = dC * op(B)', dB = op(A)' * dC, with transposes folded into addmm.
    return push(std::move(out), [a, ta, b, tb](Tape& t, NodeId self) {
      const Mat<T>& g = t.nodes_[self].grad;
      const Mat<T>& av2 = t.nodes_[a].value;
      const Mat<T>& bv2 = t.nodes_[b].value;
      if (!ta) {
        addmm(t.nodes_[a].grad, g, false, bv2, !tb);
      } else {
        addmm(t.nodes_[a].grad, bv2, tb, g, true);
      }
      if (!tb) {
        addmm(t.nodes_[b].grad, av2, !ta, g, false);
      } else {
        addmm(t.nodes_[b].grad, g, true, av2, ta);
      }
    });
  }

  std::vector<Node> nodes_;
  std::vector<ParamBind> param_binds_;
  std::vector<GatherBind> gather_binds_;
  bool record_;
};

}  // namespace cslm
