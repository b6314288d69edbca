#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cslm/dataset.hpp"
#include "cslm/errors.hpp"
#include "cslm/model.hpp"
#include "cslm/model_io.hpp"

namespace cslm {

// Flat `key = value` file with '#' comments. Order is preserved; later
// occurrences of a key override earlier ones.
inline std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t";
    const std::size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    const std::size_t b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

enum class OptimizerKind { sgd, adam };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

// Everything one training run needs. vocab_size is filled in from the data,
// not from the file.
struct TrainConfig {
  ModelConfig model;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; 0 disables clipping
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::string selection_task;  // empty = first task
  std::size_t min_count = 1;
  std::size_t chunk_min = 40;
  std::size_t chunk_max = 70;
  ChunkPolicy chunk_policy = ChunkPolicy::overlap;
  std::string embeddings_file;

  std::string selection() const { return selection_task.empty() ? model.tasks[0].name : selection_task; }
  std::size_t selection_index() const { return model.task_index(selection()); }

  void validate() const {
    model.validate();
    // 0 is allowed as an explicit freeze (validation/patience still run).
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (chunk_min < 1 || chunk_min > chunk_max) {
      throw ConfigError("chunk bounds must satisfy 1 <= chunk_min <= chunk_max");
    }
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
    model.task_index(selection());  // throws on bad name
  }
};

namespace detail {

inline std::vector<TaskSpec> parse_tasks(const std::string& s) {
  std::vector<TaskSpec> tasks;
  for (const std::string& spec : split(s, ',')) {
    const std::size_t colon = spec.rfind(':');
    if (colon == std::string::npos) {
      throw ConfigError("bad task spec '" + spec + "' (expected name:num_labels)");
    }
    tasks.push_back({spec.substr(0, colon),
                     static_cast<std::size_t>(parse_double(spec.substr(colon + 1), "task size"))});
  }
  return tasks;
}

}  // namespace detail

// Applies one key. Unknown keys are rejected so typos never pass silently.
inline void apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto num = [&]() { return detail::parse_double(value, key); };
  auto count = [&]() { return static_cast<std::size_t>(detail::parse_double(value, key)); };
  if (key == "embed_dim") cfg.model.embed_dim = count();
  else if (key == "rnn_hidden") cfg.model.rnn_hidden = count();
  else if (key == "rnn_kind") cfg.model.rnn_kind = rnn_kind_from_name(value);
  else if (key == "num_layers") cfg.model.num_layers = count();
  else if (key == "shared_hidden") cfg.model.shared_hidden = count();
  else if (key == "activation") cfg.model.activation = act_from_name(value);
  else if (key == "tasks") cfg.model.tasks = detail::parse_tasks(value);
  else if (key == "task_weights") {
    cfg.model.task_weights.clear();
    for (const std::string& w : detail::split(value, ',')) {
      cfg.model.task_weights.push_back(detail::parse_double(w, "task weight"));
    }
  } else if (key == "rnn_input_dropout") cfg.model.rnn_input_dropout = num();
  else if (key == "rnn_output_dropout") cfg.model.rnn_output_dropout = num();
  else if (key == "freeze_embeddings") cfg.model.freeze_embeddings = value == "true";
  else if (key == "embeddings_file") cfg.embeddings_file = value;
  else if (key == "optimizer") cfg.optimizer = optimizer_from_name(value);
  else if (key == "learning_rate") cfg.learning_rate = num();
  else if (key == "adam_beta1") cfg.adam_beta1 = num();
  else if (key == "adam_beta2") cfg.adam_beta2 = num();
  else if (key == "adam_eps") cfg.adam_eps = num();
  else if (key == "clip_norm") cfg.clip_norm = num();
  else if (key == "batch_size") cfg.batch_size = count();
  else if (key == "max_epochs") cfg.max_epochs = count();
  else if (key == "patience") cfg.patience = count();
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(num());
  else if (key == "selection_task") cfg.selection_task = value;
  else if (key == "min_count") cfg.min_count = count();
  else if (key == "chunk_min") cfg.chunk_min = count();
  else if (key == "chunk_max") cfg.chunk_max = count();
  else if (key == "chunk_policy") cfg.chunk_policy = chunk_policy_from_name(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

// Default toolkit setup: both tasks, equal weights.
inline TrainConfig default_train_config() {
  TrainConfig cfg;
  cfg.model.tasks = {{"punct", kNumPunctLabels}, {"case", kNumCaseLabels}};
  cfg.model.task_weights = {0.5, 0.5};
  return cfg;
}

inline TrainConfig train_config_from_entries(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  TrainConfig cfg = default_train_config();
  bool weights_given = false;
  for (const auto& [k, v] : entries) {
    if (k == "task_weights") weights_given = true;
    apply_config_key(cfg, k, v);
  }
  if (!weights_given && cfg.model.tasks.size() != cfg.model.task_weights.size()) {
    cfg.model.task_weights.assign(cfg.model.tasks.size(),
                                  1.0 / static_cast<double>(cfg.model.tasks.size()));
  }
  return cfg;
}

// The toolkit's two label tasks; the model itself is task-generic but the data
// pipeline produces exactly these.
inline void validate_toolkit_tasks(const ModelConfig& cfg) {
  for (const auto& t : cfg.tasks) {
    if (t.name == "punct") {
      if (t.num_labels != kNumPunctLabels) {
        throw ConfigError("task 'punct' must have " + std::to_string(kNumPunctLabels) + " labels");
      }
    } else if (t.name == "case") {
      if (t.num_labels != kNumCaseLabels) {
        throw ConfigError("task 'case' must have " + std::to_string(kNumCaseLabels) + " labels");
      }
    } else {
      throw ConfigError("unknown task '" + t.name + "' (the data pipeline provides punct, case)");
    }
  }
}

// Serialized in a fixed order so a resolved config always prints the same way.
inline void print_resolved_config(const TrainConfig& cfg, std::size_t vocab_size,
                                  std::ostream& os) {
  os << "# resolved configuration\n";
  os << "vocab_size = " << vocab_size << "  # derived from data\n";
  os << "embed_dim = " << cfg.model.embed_dim << "\n";
  os << "rnn_hidden = " << cfg.model.rnn_hidden << "\n";
  os << "rnn_kind = " << rnn_kind_name(cfg.model.rnn_kind) << "\n";
  os << "num_layers = " << cfg.model.num_layers << "\n";
  os << "shared_hidden = " << cfg.model.shared_hidden << "\n";
  os << "activation = " << act_name(cfg.model.activation) << "\n";
  os << "tasks = ";
  for (std::size_t k = 0; k < cfg.model.tasks.size(); ++k) {
    os << (k ? "," : "") << cfg.model.tasks[k].name << ":" << cfg.model.tasks[k].num_labels;
  }
  os << "\n";
  os << "task_weights = ";
  for (std::size_t k = 0; k < cfg.model.task_weights.size(); ++k) {
    os << (k ? "," : "") << detail::fmt_double(cfg.model.task_weights[k]);
  }
  os << "\n";
  os << "rnn_input_dropout = " << detail::fmt_double(cfg.model.rnn_input_dropout) << "\n";
  os << "rnn_output_dropout = " << detail::fmt_double(cfg.model.rnn_output_dropout) << "\n";
  os << "freeze_embeddings = " << (cfg.model.freeze_embeddings ? "true" : "false") << "\n";
  os << "embeddings_file = " << cfg.embeddings_file << "\n";
  os << "optimizer = " << optimizer_name(cfg.optimizer) << "\n";
  os << "learning_rate = " << detail::fmt_double(cfg.learning_rate) << "\n";
  os << "adam_beta1 = " << detail::fmt_double(cfg.adam_beta1) << "\n";
  os << "adam_beta2 = " << detail::fmt_double(cfg.adam_beta2) << "\n";
  os << "adam_eps = " << detail::fmt_double(cfg.adam_eps) << "\n";
  os << "clip_norm = " << detail::fmt_double(cfg.clip_norm) << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "max_epochs = " << cfg.max_epochs << "\n";
  os << "patience = " << cfg.patience << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "selection_task = " << cfg.selection() << "\n";
  os << "min_count = " << cfg.min_count << "\n";
  os << "chunk_min = " << cfg.chunk_min << "\n";
  os << "chunk_max = " << cfg.chunk_max << "\n";
  os << "chunk_policy = " << chunk_policy_name(cfg.chunk_policy) << "\n";
}

// Grid file: same keys as the config file, each value a comma-separated list.
struct GridSpec {
  std::vector<std::pair<std::string, std::vector<std::string>>> knobs;

  std::size_t num_points() const {
    std::size_t n = 1;
    for (const auto& [k, vals] : knobs) n *= vals.size();
    return n;
  }

  // Point i in mixed-radix order: the first knob varies slowest.
  std::vector<std::pair<std::string, std::string>> point(std::size_t index) const {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t radix = num_points();
    for (const auto& [key, vals] : knobs) {
      radix /= vals.size();
      out.emplace_back(key, vals[(index / radix) % vals.size()]);
    }
    return out;
  }
};

inline GridSpec parse_grid_file(const std::string& path) {
  GridSpec grid;
  for (const auto& [key, value] : parse_kv_file(path)) {
    std::vector<std::string> vals;
    if (key == "tasks" || key == "task_weights") {
      // These values already contain commas; a grid over them uses ';'.
      for (const std::string& v : detail::split(value, ';')) vals.push_back(v);
    } else {
      vals = detail::split(value, ',');
    }
    if (vals.empty()) throw ConfigError("grid knob '" + key + "' has no values");
    grid.knobs.emplace_back(key, std::move(vals));
  }
  if (grid.knobs.empty()) throw ConfigError(path + ": grid file lists no knobs");
  return grid;
}

}  // namespace cslm
