#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cslm/config.hpp"
#include "cslm/dataset.hpp"
#include "cslm/errors.hpp"
#include "cslm/labels.hpp"
#include "cslm/metrics.hpp"
#include "cslm/model.hpp"
#include "cslm/model_io.hpp"
#include "cslm/params.hpp"
#include "cslm/rng.hpp"
#include "cslm/vocab.hpp"

namespace cslm {

template <typename T>
struct AdamState {
  std::map<std::string, Mat<T>> m;
  std::map<std::string, Mat<T>> v;
  std::size_t t = 0;
};

// One optimizer update from the accumulated gradients, then zero_grads.
// Gradients are checked for finiteness first; nothing is mutated on failure.
// Clipping rescales by clip_norm / ||g|| when the global norm exceeds it.
template <typename T>
void optimizer_step(ParamStore<T>& params, AdamState<T>& adam, const TrainConfig& cfg) {
  double norm2 = 0.0;
  for (const auto& [name, e] : params) {
    for (T g : e.grad.data) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("optimizer step aborted: non-finite gradient in '" + name + "'");
      }
      norm2 += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  T scale = T(1);
  if (cfg.clip_norm > 0.0) {
    const double norm = std::sqrt(norm2);
    if (norm > cfg.clip_norm) scale = static_cast<T>(cfg.clip_norm / norm);
  }

  if (cfg.optimizer == OptimizerKind::sgd) {
    const T lr = static_cast<T>(cfg.learning_rate);
    for (auto& [name, e] : params) {
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        e.value.data[i] -= lr * scale * e.grad.data[i];
      }
    }
  } else {
    ++adam.t;
    const T b1 = static_cast<T>(cfg.adam_beta1);
    const T b2 = static_cast<T>(cfg.adam_beta2);
    const T eps = static_cast<T>(cfg.adam_eps);
    const T lr = static_cast<T>(cfg.learning_rate);
    const T c1 = T(1) - static_cast<T>(std::pow(cfg.adam_beta1, static_cast<double>(adam.t)));
    const T c2 = T(1) - static_cast<T>(std::pow(cfg.adam_beta2, static_cast<double>(adam.t)));
    for (auto& [name, e] : params) {
      Mat<T>& m = adam.m.try_emplace(name, e.value.rows, e.value.cols).first->second;
      Mat<T>& v = adam.v.try_emplace(name, e.value.rows, e.value.cols).first->second;
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const T g = scale * e.grad.data[i];
        m.data[i] = b1 * m.data[i] + (T(1) - b1) * g;
        v.data[i] = b2 * v.data[i] + (T(1) - b2) * g * g;
        const T mhat = m.data[i] / c1;
        const T vhat = v.data[i] / c2;
        e.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
  params.zero_grads();
}

// Builds per-task targets for the model's task list from a stream slice.
inline std::vector<TaskTargets> targets_for_tasks(const ModelConfig& cfg,
                                                  const SequenceExample& ex) {
  std::vector<TaskTargets> out;
  out.reserve(cfg.tasks.size());
  for (const auto& t : cfg.tasks) {
    if (t.name == "punct") {
      out.push_back({ex.punct_labels, ex.punct_mask});
    } else if (t.name == "case") {
      out.push_back({ex.case_labels, ex.case_mask});
    } else {
      throw ConfigError("no data for task '" + t.name + "'");
    }
  }
  return out;
}

template <typename T>
struct TaskBest {
  double ser = std::numeric_limits<double>::infinity();
  std::size_t epoch = 0;
  ParamStore<T> params;
};

template <typename T>
struct TrainState {
  ParamStore<T> params;
  AdamState<T> adam;
  Rng rng;  // shuffling and dropout
  std::size_t next_epoch = 1;
  std::size_t stall = 0;
  std::vector<TaskBest<T>> best;  // one per task
  bool diverged = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::vector<double> val_ser;  // per task
};

template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState<T> state;
  Rng master(cfg.seed);
  Rng init_rng = master.fork(0);
  state.rng = master.fork(1);
  init_params(state.params, cfg.model, init_rng);
  state.best.resize(cfg.model.tasks.size());
  return state;
}

// Validation SER per task over consolidated streams; counts are pooled across
// streams before dividing. Never mutates parameters.
template <typename T>
std::vector<double> validation_ser(ParamStore<T>& params, const ModelConfig& cfg,
                                   const std::vector<LabeledStream>& val_streams,
                                   const Vocabulary& vocab) {
  std::vector<SerBreakdown> pooled(cfg.tasks.size());
  for (const auto& stream : val_streams) {
    if (stream.size() == 0) continue;
    SequenceExample ex = make_example(stream, 0, stream.size(), vocab);
    auto preds = predict(ex.token_ids, params, cfg);
    auto targets = targets_for_tasks(cfg, ex);
    for (std::size_t k = 0; k < cfg.tasks.size(); ++k) {
      pooled[k] = merge_ser(pooled[k],
                            ser(targets[k].labels, preds[k], targets[k].mask,
                                cfg.tasks[k].name == "case" ? kCaseNullId : kPunctNullId));
    }
  }
  std::vector<double> out(cfg.tasks.size());
  for (std::size_t k = 0; k < cfg.tasks.size(); ++k) out[k] = pooled[k].ser;
  return out;
}

// One pass over the training chunks (shuffle, batch, forward/backward/step)
// followed by validation. Returns false when training should stop (patience
// exhausted or divergence).
template <typename T>
bool train_one_epoch(TrainState<T>& state, const TrainConfig& cfg,
                     const std::vector<LabeledStream>& train_streams,
                     const std::vector<Chunk>& chunks,
                     const std::vector<LabeledStream>& val_streams, const Vocabulary& vocab,
                     EpochRecord& record) {
  record.epoch = state.next_epoch;

  std::vector<Chunk> order(chunks);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(state.rng.below(i))]);
  }
  const auto batches = batchify(train_streams, order, cfg.batch_size, vocab);

  double loss_sum = 0.0;
  std::size_t n_batches = 0;
  for (const auto& batch : batches) {
    double batch_loss = 0.0;
    const T row_scale = T(1) / static_cast<T>(batch.rows);
    try {
      for (std::size_t r = 0; r < batch.rows; ++r) {
        std::size_t len = 0;
        while (len < batch.max_len && batch.mask[r * batch.max_len + len]) ++len;
        if (len == 0) continue;
        SequenceExample ex;
        const std::size_t base = r * batch.max_len;
        ex.token_ids.assign(batch.token_ids.begin() + base, batch.token_ids.begin() + base + len);
        ex.punct_labels.assign(batch.punct.labels.begin() + base,
                               batch.punct.labels.begin() + base + len);
        ex.punct_mask.assign(batch.punct.mask.begin() + base, batch.punct.mask.begin() + base + len);
        ex.case_labels.assign(batch.cases.labels.begin() + base,
                              batch.cases.labels.begin() + base + len);
        ex.case_mask.assign(batch.cases.mask.begin() + base, batch.cases.mask.begin() + base + len);

        auto acts = birnn_forward(ex.token_ids, state.params, cfg.model, true, state.rng);
        auto loss = joint_loss(acts, targets_for_tasks(cfg.model, ex), cfg.model.task_weights);
        const double lval = static_cast<double>(acts.tape.value(loss).data[0]);
        batch_loss += lval / static_cast<double>(batch.rows);
        acts.tape.backward(loss, row_scale);
      }
      optimizer_step(state.params, state.adam, cfg);
    } catch (const NumericError&) {
      state.diverged = true;
      break;
    }
    if (!std::isfinite(batch_loss)) {
      state.diverged = true;
      break;
    }
    loss_sum += batch_loss;
    ++n_batches;
  }
  record.train_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;

  if (state.diverged) {
    record.val_ser.assign(cfg.model.tasks.size(), std::numeric_limits<double>::infinity());
    ++state.next_epoch;
    return false;
  }

  record.val_ser = validation_ser(state.params, cfg.model, val_streams, vocab);

  const std::size_t sel = cfg.selection_index();
  bool improved_selection = false;
  for (std::size_t k = 0; k < cfg.model.tasks.size(); ++k) {
    if (record.val_ser[k] < state.best[k].ser) {
      state.best[k].ser = record.val_ser[k];
      state.best[k].epoch = record.epoch;
      state.best[k].params = state.params;
      if (k == sel) improved_selection = true;
    }
  }
  if (improved_selection) {
    state.stall = 0;
  } else {
    ++state.stall;
  }
  ++state.next_epoch;
  return state.stall < cfg.patience && record.epoch < cfg.max_epochs;
}

template <typename T>
struct TrainResult {
  TrainState<T> state;
  std::vector<EpochRecord> history;
  double embedding_coverage = -1.0;  // fraction of vocab words found in the file
  std::size_t embedding_found = 0;
};

// Full optimization loop with validation-based model selection: every epoch's
// per-task validation SER is tracked and the parameters minimizing the
// selection task's SER are kept. Stops after `patience` epochs without
// improvement, at max_epochs, or on divergence (returning the last good best).
template <typename T>
TrainResult<T> train_loop(const TrainConfig& cfg, const std::vector<LabeledStream>& train_streams,
                          const std::vector<Chunk>& chunks,
                          const std::vector<LabeledStream>& val_streams, const Vocabulary& vocab,
                          TrainState<T>* resume = nullptr) {
  cfg.validate();
  if (chunks.empty()) throw DataError("no training chunks");
  if (val_streams.empty()) throw DataError("no validation streams");

  TrainResult<T> result;
  result.state = resume ? std::move(*resume) : init_train_state<T>(cfg);
  if (!cfg.embeddings_file.empty() && !resume) {
    Rng embed_rng = Rng(cfg.seed).fork(2);
    auto loaded = load_embeddings<T>(cfg.embeddings_file, vocab, cfg.model.embed_dim, embed_rng);
    result.state.params.value("embedding") = loaded.table;
    result.embedding_coverage = loaded.coverage;
    result.embedding_found = loaded.found;
  }

  while (result.state.next_epoch <= cfg.max_epochs) {
    EpochRecord record;
    const bool keep_going = train_one_epoch(result.state, cfg, train_streams, chunks, val_streams,
                                            vocab, record);
    result.history.push_back(record);
    if (!keep_going) break;
  }
  return result;
}

inline void write_history_csv(const std::string& path, const std::vector<std::string>& task_names,
                              const std::vector<EpochRecord>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "epoch,train_loss";
  for (const auto& t : task_names) f << ",val_ser_" << t;
  f << "\n";
  for (const auto& rec : history) {
    f << rec.epoch << ',' << detail::fmt_double(rec.train_loss);
    for (double s : rec.val_ser) {
      f << ',' << (std::isfinite(s) ? detail::fmt_double(s) : std::string("inf"));
    }
    f << "\n";
  }
}

// ---- Mid-training checkpoints. The container format is the model file with
// extra tensors (optimizer moments, per-task best parameters) and extra config
// keys (epoch counter, rng state, stall, per-task best SER). Reloading resumes
// with bitwise-identical behavior because the rng state is part of the file.

inline void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                            const TrainState<float>& state) {
  std::map<std::string, std::string> kv;
  kv["ck.next_epoch"] = std::to_string(state.next_epoch);
  kv["ck.stall"] = std::to_string(state.stall);
  kv["ck.diverged"] = state.diverged ? "true" : "false";
  kv["ck.rng_seed"] = std::to_string(state.rng.seed());
  kv["ck.rng_counter"] = std::to_string(state.rng.counter());
  kv["ck.adam_t"] = std::to_string(state.adam.t);

  std::map<std::string, Mat<float>> extra;
  for (const auto& [name, m] : state.adam.m) extra["adam.m." + name] = m;
  for (const auto& [name, m] : state.adam.v) extra["adam.v." + name] = m;
  for (std::size_t k = 0; k < state.best.size(); ++k) {
    const std::string task = cfg.model.tasks[k].name;
    kv["ck.best." + task + ".ser"] = detail::fmt_double(state.best[k].ser);
    kv["ck.best." + task + ".epoch"] = std::to_string(state.best[k].epoch);
    for (const auto& [name, e] : state.best[k].params) {
      extra["best." + task + "." + name] = e.value;
    }
  }
  save_model(path, cfg.model, state.params, kv, extra);
}

inline TrainState<float> load_checkpoint(const std::string& path, const TrainConfig& cfg) {
  LoadedModel loaded = load_model(path);
  TrainState<float> state;
  state.params = std::move(loaded.params);
  auto kv = [&](const std::string& key) -> const std::string& {
    auto it = loaded.extra_kv.find(key);
    if (it == loaded.extra_kv.end()) throw DataError(path + ": missing checkpoint key " + key);
    return it->second;
  };
  state.next_epoch = static_cast<std::size_t>(std::stoull(kv("ck.next_epoch")));
  state.stall = static_cast<std::size_t>(std::stoull(kv("ck.stall")));
  state.diverged = kv("ck.diverged") == "true";
  state.rng = Rng(std::stoull(kv("ck.rng_seed")), std::stoull(kv("ck.rng_counter")));
  state.adam.t = static_cast<std::size_t>(std::stoull(kv("ck.adam_t")));

  state.best.resize(cfg.model.tasks.size());
  for (std::size_t k = 0; k < cfg.model.tasks.size(); ++k) {
    const std::string task = cfg.model.tasks[k].name;
    state.best[k].ser = detail::parse_double(kv("ck.best." + task + ".ser"), "best ser");
    state.best[k].epoch = static_cast<std::size_t>(std::stoull(kv("ck.best." + task + ".epoch")));
    const std::string prefix = "best." + task + ".";
    for (const auto& [name, m] : loaded.extra_tensors) {
      if (name.rfind(prefix, 0) == 0) {
        state.best[k].params.create(name.substr(prefix.size()), m.rows, m.cols) = m;
      }
    }
  }
  for (const auto& [name, m] : loaded.extra_tensors) {
    if (name.rfind("adam.m.", 0) == 0) state.adam.m[name.substr(7)] = m;
    if (name.rfind("adam.v.", 0) == 0) state.adam.v[name.substr(7)] = m;
  }
  return state;
}

// ---- Hyperparameter grid.

struct GridRun {
  std::size_t run_id = 0;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<double> best_ser;        // per task
  std::vector<std::size_t> best_epoch;  // per task
  std::size_t epochs_ran = 0;
  bool diverged = false;
};

struct GridOutcome {
  std::vector<std::string> task_names;
  std::vector<GridRun> runs;  // in enumeration order

  // Run indices sorted by a task's best validation SER (ties by run id).
  std::vector<std::size_t> leaderboard(std::size_t task) const {
    std::vector<std::size_t> order(runs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return runs[a].best_ser[task] < runs[b].best_ser[task];
    });
    return order;
  }
};

// Exhaustive product over the grid's knob values applied on top of the base
// entries. Each run re-chunks and re-trains deterministically from its own
// config; `on_run` (when set) receives each finished run's config and result
// so the CLI can write per-run artifacts.
template <typename T>
GridOutcome grid_run(const std::vector<std::pair<std::string, std::string>>& base_entries,
                     const GridSpec& grid, const std::vector<LabeledStream>& train_streams,
                     const std::vector<LabeledStream>& val_streams,
                     const std::function<void(std::size_t, const TrainConfig&,
                                              const TrainResult<T>&)>& on_run = {}) {
  GridOutcome outcome;
  const std::size_t n = grid.num_points();
  for (std::size_t i = 0; i < n; ++i) {
    auto entries = base_entries;
    const auto overrides = grid.point(i);
    entries.insert(entries.end(), overrides.begin(), overrides.end());
    TrainConfig cfg = train_config_from_entries(entries);
    validate_toolkit_tasks(cfg.model);

    Vocabulary vocab = Vocabulary::build(train_streams, cfg.min_count);
    cfg.model.vocab_size = vocab.size();
    cfg.validate();
    std::vector<std::string> names;
    for (const auto& t : cfg.model.tasks) names.push_back(t.name);
    if (outcome.task_names.empty()) {
      outcome.task_names = names;
    } else if (outcome.task_names != names) {
      throw ConfigError("grid point " + std::to_string(i) +
                        " changes the task list; leaderboards need one task set per sweep");
    }

    Rng chunk_rng = Rng(cfg.seed).fork(3);
    std::vector<Chunk> chunks;
    for (std::size_t s = 0; s < train_streams.size(); ++s) {
      auto c = chunk_stream(train_streams[s], cfg.chunk_min, cfg.chunk_max, chunk_rng,
                            cfg.chunk_policy, nullptr, s);
      chunks.insert(chunks.end(), c.begin(), c.end());
    }

    TrainResult<T> result = train_loop<T>(cfg, train_streams, chunks, val_streams, vocab);

    GridRun run;
    run.run_id = i;
    run.overrides = overrides;
    run.epochs_ran = result.history.size();
    run.diverged = result.state.diverged;
    for (const auto& b : result.state.best) {
      run.best_ser.push_back(b.ser);
      run.best_epoch.push_back(b.epoch);
    }
    if (on_run) on_run(i, cfg, result);
    outcome.runs.push_back(std::move(run));
  }
  return outcome;
}

}  // namespace cslm
