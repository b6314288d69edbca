#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/params.hpp"
#include "cslm/rng.hpp"
#include "cslm/tape.hpp"

namespace cslm {

enum class RnnKind { simple, gru, lstm };

inline const char* rnn_kind_name(RnnKind k) {
  switch (k) {
    case RnnKind::simple: return "simple";
    case RnnKind::gru: return "gru";
    case RnnKind::lstm: return "lstm";
  }
  return "?";
}

inline RnnKind rnn_kind_from_name(const std::string& s) {
  if (s == "simple") return RnnKind::simple;
  if (s == "gru") return RnnKind::gru;
  if (s == "lstm") return RnnKind::lstm;
  throw ConfigError("unknown rnn kind '" + s + "' (expected simple|gru|lstm)");
}

struct TaskSpec {
  std::string name;
  std::size_t num_labels = 0;
};

// Shared-encoder network with one softmax head per task. A single-task model
// is the same structure with one entry in `tasks`; there is no separate path.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 50;
  std::size_t rnn_hidden = 64;  // per direction
  RnnKind rnn_kind = RnnKind::gru;
  std::size_t num_layers = 1;
  std::size_t shared_hidden = 64;
  Act activation = Act::tanh;
  std::vector<TaskSpec> tasks;
  std::vector<double> task_weights;  // used as given, not renormalized
  double rnn_input_dropout = 0.0;
  double rnn_output_dropout = 0.0;
  bool freeze_embeddings = false;

  void validate() const {
    if (vocab_size < 1 || embed_dim < 1 || rnn_hidden < 1 || shared_hidden < 1 ||
        num_layers < 1) {
      throw ConfigError("model dimensions must all be >= 1");
    }
    if (tasks.empty()) throw ConfigError("model needs at least one task");
    if (task_weights.size() != tasks.size()) {
      throw ConfigError("got " + std::to_string(task_weights.size()) + " task weights for " +
                        std::to_string(tasks.size()) + " tasks");
    }
    double wsum = 0.0;
    for (double w : task_weights) {
      if (w < 0.0) throw ConfigError("task weights must be nonnegative");
      wsum += w;
    }
    if (wsum <= 0.0) throw ConfigError("task weights must not all be zero");
    for (const auto& t : tasks) {
      if (t.num_labels < 2) {
        throw ConfigError("task '" + t.name + "' needs at least 2 labels");
      }
    }
    if (rnn_input_dropout < 0.0 || rnn_input_dropout >= 1.0 || rnn_output_dropout < 0.0 ||
        rnn_output_dropout >= 1.0) {
      throw ConfigError("dropout rates must lie in [0, 1)");
    }
  }

  std::size_t task_index(const std::string& name) const {
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      if (tasks[k].name == name) return k;
    }
    throw ConfigError("no task named '" + name + "'");
  }
};

namespace detail {

inline std::vector<std::string> gate_names(RnnKind kind) {
  switch (kind) {
    case RnnKind::simple: return {"Wx", "Ws", "b"};
    case RnnKind::gru: return {"Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"};
    case RnnKind::lstm:
      return {"Wi", "Ui", "bi", "Wf", "Uf", "bf", "Wc", "Uc", "bc", "Wo", "Uo", "bo"};
  }
  return {};
}

inline std::string rnn_prefix(std::size_t layer, bool forward) {
  return "rnn.l" + std::to_string(layer) + (forward ? ".fwd." : ".bwd.");
}

}  // namespace detail

// Every tensor the network uses, created in a fixed architectural order:
// embedding, recurrent weights layer by layer (forward then backward
// direction), shared projection, then one head per task in config order.
// Weight matrices draw uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)),
// biases start at zero, embedding rows are gaussian(0, 0.1). Keeping the draw
// order fixed means models that share a prefix of the architecture share those
// initial values for the same seed.
template <typename T>
void init_params(ParamStore<T>& params, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  auto fill_uniform = [&rng](Mat<T>& m) {
    const double r = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    for (auto& v : m.data) v = static_cast<T>(rng.uniform(-r, r));
  };
  auto fill_gaussian = [&rng](Mat<T>& m, double stddev) {
    for (auto& v : m.data) v = static_cast<T>(rng.gaussian(0.0, stddev));
  };

  fill_gaussian(params.create("embedding", cfg.vocab_size, cfg.embed_dim), 0.1);

  const std::size_t dh = cfg.rnn_hidden;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::size_t in_dim = l == 0 ? cfg.embed_dim : 2 * dh;
    for (bool fwd : {true, false}) {
      const std::string prefix = detail::rnn_prefix(l, fwd);
      const auto gates = detail::gate_names(cfg.rnn_kind);
      // each triple is (input weight, recurrent weight, bias)
      for (std::size_t i = 0; i < gates.size(); ++i) {
        switch (i % 3) {
          case 0: fill_uniform(params.create(prefix + gates[i], dh, in_dim)); break;
          case 1: fill_uniform(params.create(prefix + gates[i], dh, dh)); break;
          default: params.create(prefix + gates[i], 1, dh); break;
        }
      }
    }
  }

  fill_uniform(params.create("shared.W", cfg.shared_hidden, 2 * dh));
  params.create("shared.b", 1, cfg.shared_hidden);

  for (const auto& t : cfg.tasks) {
    fill_uniform(params.create("head." + t.name + ".W", t.num_labels, cfg.shared_hidden));
    params.create("head." + t.name + ".b", 1, t.num_labels);
  }
}

template <typename T>
Mat<T> gather_const(const ParamStore<T>& params, const std::vector<std::int32_t>& ids) {
  const Mat<T>& table = params.value("embedding");
  Mat<T> out(ids.size(), table.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const T* src = table.row(static_cast<std::size_t>(ids[i]));
    std::copy(src, src + table.cols, out.row(i));
  }
  return out;
}

// One recurrent update. `state` is (hidden) for simple/gru and (hidden, cell)
// for lstm; `x_parts` holds the precomputed input contributions for each gate
// at this step (input * W^T + b), in gate_names order of the W entries.
template <typename T>
struct CellState {
  typename Tape<T>::NodeId hidden = 0;
  typename Tape<T>::NodeId cell = 0;  // lstm only
  bool has_cell = false;
};

template <typename T>
CellState<T> cell_step(Tape<T>& tape, RnnKind kind, const std::vector<typename Tape<T>::NodeId>& x_parts,
                       const CellState<T>& prev,
                       const std::vector<typename Tape<T>::NodeId>& recur_weights) {
  using NodeId = typename Tape<T>::NodeId;
  switch (kind) {
    case RnnKind::simple: {
      NodeId pre = tape.add(x_parts[0], tape.matmul_nt(prev.hidden, recur_weights[0]));
      return {tape.activation(pre, Act::tanh), 0, false};
    }
    case RnnKind::gru: {
      NodeId z = tape.activation(
          tape.add(x_parts[0], tape.matmul_nt(prev.hidden, recur_weights[0])), Act::sigmoid);
      NodeId r = tape.activation(
          tape.add(x_parts[1], tape.matmul_nt(prev.hidden, recur_weights[1])), Act::sigmoid);
      NodeId rs = tape.mul(r, prev.hidden);
      NodeId cand =
          tape.activation(tape.add(x_parts[2], tape.matmul_nt(rs, recur_weights[2])), Act::tanh);
      // s_t = (1 - z) * s_{t-1} + z * cand
      NodeId keep = tape.mul(tape.affine(z, T(-1), T(1)), prev.hidden);
      return {tape.add(keep, tape.mul(z, cand)), 0, false};
    }
    case RnnKind::lstm: {
      NodeId i = tape.activation(
          tape.add(x_parts[0], tape.matmul_nt(prev.hidden, recur_weights[0])), Act::sigmoid);
      NodeId f = tape.activation(
          tape.add(x_parts[1], tape.matmul_nt(prev.hidden, recur_weights[1])), Act::sigmoid);
      NodeId c_cand = tape.activation(
          tape.add(x_parts[2], tape.matmul_nt(prev.hidden, recur_weights[2])), Act::tanh);
      NodeId o = tape.activation(
          tape.add(x_parts[3], tape.matmul_nt(prev.hidden, recur_weights[3])), Act::sigmoid);
      NodeId c = tape.add(tape.mul(f, prev.cell), tape.mul(i, c_cand));
      NodeId h = tape.mul(o, tape.activation(c, Act::tanh));
      return {h, c, true};
    }
  }
  throw ConfigError("unknown rnn kind");
}

// Everything the backward pass needs: the tape caches every intermediate
// (inputs, per-direction states, concatenation, shared hidden, logits, probs,
// dropout products).
template <typename T>
struct SeqActivations {
  Tape<T> tape;
  std::size_t length = 0;
  typename Tape<T>::NodeId states = 0;               // final-layer [fwd, bwd] concat, n x 2*dh
  typename Tape<T>::NodeId hidden = 0;               // h, n x shared_hidden
  std::vector<typename Tape<T>::NodeId> logits;      // per task, n x |L^k|
  std::vector<typename Tape<T>::NodeId> probs;       // per task, rows sum to 1

  SeqActivations(bool record) : tape(record) {}
};

namespace detail {

// Runs one direction of one layer; returns the n x dh state matrix.
template <typename T>
typename Tape<T>::NodeId run_direction(Tape<T>& tape, typename Tape<T>::NodeId layer_input,
                                       ParamStore<T>& params, const ModelConfig& cfg,
                                       std::size_t layer, bool forward) {
  using NodeId = typename Tape<T>::NodeId;
  const std::size_t n = tape.value(layer_input).rows;
  const std::size_t dh = cfg.rnn_hidden;
  const std::string prefix = rnn_prefix(layer, forward);
  const auto gates = gate_names(cfg.rnn_kind);
  const std::size_t n_gates = gates.size() / 3;

  // Input contributions for all steps at once: X * W^T + b per gate.
  std::vector<NodeId> x_all(n_gates);
  std::vector<NodeId> recur(n_gates);
  for (std::size_t g = 0; g < n_gates; ++g) {
    NodeId w = tape.param(params, prefix + gates[3 * g]);
    NodeId u = tape.param(params, prefix + gates[3 * g + 1]);
    NodeId b = tape.param(params, prefix + gates[3 * g + 2]);
    x_all[g] = tape.add_row_bias(tape.matmul_nt(layer_input, w), b);
    recur[g] = u;
  }

  CellState<T> state;
  state.hidden = tape.input(Mat<T>(1, dh));
  if (cfg.rnn_kind == RnnKind::lstm) {
    state.cell = tape.input(Mat<T>(1, dh));
    state.has_cell = true;
  }

  std::vector<NodeId> rows(n);
  std::vector<NodeId> x_parts(n_gates);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = forward ? step : n - 1 - step;
    for (std::size_t g = 0; g < n_gates; ++g) x_parts[g] = tape.slice_rows(x_all[g], t, 1);
    state = cell_step(tape, cfg.rnn_kind, x_parts, state, recur);
    rows[t] = state.hidden;
  }
  return tape.stack_rows(rows);
}

}  // namespace detail

// Full pass over one token sequence: embedding lookup (with input dropout in
// train mode), stacked bidirectional recurrence, output dropout on the final
// state concatenation, shared projection, and one linear+softmax branch per
// task. Eval mode applies no dropout and records no backward closures.
template <typename T>
SeqActivations<T> birnn_forward(const std::vector<std::int32_t>& token_ids,
                                ParamStore<T>& params, const ModelConfig& cfg, bool train_mode,
                                Rng& rng) {
  using NodeId = typename Tape<T>::NodeId;
  cfg.validate();
  if (token_ids.empty()) throw DataError("empty token sequence");
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] < 0 || static_cast<std::size_t>(token_ids[i]) >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(token_ids[i]) + " out of range (vocab size " +
                      std::to_string(cfg.vocab_size) + ") at position " + std::to_string(i));
    }
  }

  SeqActivations<T> acts(train_mode);
  Tape<T>& tape = acts.tape;
  acts.length = token_ids.size();

  NodeId layer_input = cfg.freeze_embeddings && train_mode
                           ? tape.input(gather_const(params, token_ids))
                           : tape.gather_rows(params, "embedding", token_ids);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    if (train_mode && cfg.rnn_input_dropout > 0.0) {
      const Mat<T>& v = tape.value(layer_input);
      layer_input = tape.mul(
          layer_input, tape.input(dropout_mask<T>(v.rows, v.cols, cfg.rnn_input_dropout, rng)));
    }
    NodeId fwd = detail::run_direction(tape, layer_input, params, cfg, l, true);
    NodeId bwd = detail::run_direction(tape, layer_input, params, cfg, l, false);
    layer_input = tape.concat_cols(fwd, bwd);
  }
  acts.states = layer_input;

  NodeId s_for_hidden = acts.states;
  if (train_mode && cfg.rnn_output_dropout > 0.0) {
    const Mat<T>& v = tape.value(s_for_hidden);
    s_for_hidden = tape.mul(
        s_for_hidden, tape.input(dropout_mask<T>(v.rows, v.cols, cfg.rnn_output_dropout, rng)));
  }

  NodeId w = tape.param(params, "shared.W");
  NodeId b = tape.param(params, "shared.b");
  acts.hidden = tape.activation(tape.add_row_bias(tape.matmul_nt(s_for_hidden, w), b),
                                cfg.activation);

  acts.logits.resize(cfg.tasks.size());
  acts.probs.resize(cfg.tasks.size());
  for (std::size_t k = 0; k < cfg.tasks.size(); ++k) {
    NodeId wk = tape.param(params, "head." + cfg.tasks[k].name + ".W");
    NodeId bk = tape.param(params, "head." + cfg.tasks[k].name + ".b");
    acts.logits[k] = tape.add_row_bias(tape.matmul_nt(acts.hidden, wk), bk);
    acts.probs[k] = tape.softmax_rows(acts.logits[k]);
  }
  return acts;
}

// Per-task training signal: one label per position plus a 0/1 validity mask.
struct TaskTargets {
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> mask;
};

// Weighted joint loss over all heads: sum_k q_k * L^k with L^k the masked
// cross entropy of task k. Weights are applied as given.
template <typename T>
typename Tape<T>::NodeId joint_loss(SeqActivations<T>& acts, const std::vector<TaskTargets>& targets,
                                    const std::vector<double>& weights) {
  if (targets.size() != acts.logits.size() || weights.size() != acts.logits.size()) {
    throw ConfigError("joint loss: " + std::to_string(acts.logits.size()) + " heads vs " +
                      std::to_string(targets.size()) + " target sets, " +
                      std::to_string(weights.size()) + " weights");
  }
  std::vector<typename Tape<T>::NodeId> losses(targets.size());
  std::vector<T> w(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (targets[k].labels.size() != acts.length || targets[k].mask.size() != acts.length) {
      throw DimError("joint loss: task " + std::to_string(k) + " targets have length " +
                     std::to_string(targets[k].labels.size()) + ", sequence has " +
                     std::to_string(acts.length));
    }
    losses[k] = acts.tape.masked_xent(acts.logits[k], acts.probs[k], targets[k].labels,
                                      targets[k].mask);
    w[k] = static_cast<T>(weights[k]);
  }
  return acts.tape.weighted_sum(losses, w);
}

// Argmax per position per task; ties break toward the lowest label index.
template <typename T>
std::vector<std::vector<std::int32_t>> predict(const std::vector<std::int32_t>& token_ids,
                                               ParamStore<T>& params, const ModelConfig& cfg) {
  Rng rng;  // eval mode draws nothing
  SeqActivations<T> acts = birnn_forward(token_ids, params, cfg, false, rng);
  std::vector<std::vector<std::int32_t>> out(cfg.tasks.size());
  for (std::size_t k = 0; k < cfg.tasks.size(); ++k) {
    const Mat<T>& y = acts.tape.value(acts.probs[k]);
    out[k].resize(y.rows);
    for (std::size_t i = 0; i < y.rows; ++i) {
      const T* row = y.row(i);
      std::size_t best = 0;
      for (std::size_t c = 1; c < y.cols; ++c) {
        if (row[c] > row[best]) best = c;
      }
      out[k][i] = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

}  // namespace cslm
