#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/model.hpp"
#include "cslm/params.hpp"

namespace cslm {

// Self-describing binary container:
//   magic "CSLM1"
//   u32 pair count, then length-prefixed UTF-8 key/value pairs (config)
//   u32 tensor count, then per tensor: length-prefixed name, u32 rows,
//   u32 cols, rows*cols little-endian 32-bit floats, row-major.
// Save followed by load restores every byte of every tensor.

inline constexpr char kModelMagic[5] = {'C', 'S', 'L', 'M', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& path) {
  const std::uint32_t len = get_u32(is, path);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw IoError(path + ": truncated file");
  return s;
}

inline void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline float get_f32(std::istream& is, const std::string& path) {
  return std::bit_cast<float>(get_u32(is, path));
}

inline std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw DataError("bad numeric value '" + s + "' for " + what);
  }
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) next = s.size();
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

}  // namespace detail

// The tensor names init_params creates, in creation order.
inline std::vector<std::string> expected_param_names(const ModelConfig& cfg) {
  std::vector<std::string> names{"embedding"};
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    for (bool fwd : {true, false}) {
      for (const std::string& g : detail::gate_names(cfg.rnn_kind)) {
        names.push_back(detail::rnn_prefix(l, fwd) + g);
      }
    }
  }
  names.push_back("shared.W");
  names.push_back("shared.b");
  for (const auto& t : cfg.tasks) {
    names.push_back("head." + t.name + ".W");
    names.push_back("head." + t.name + ".b");
  }
  return names;
}

inline std::map<std::string, std::string> config_to_kv(const ModelConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["format_version"] = "1";
  kv["vocab_size"] = std::to_string(cfg.vocab_size);
  kv["embed_dim"] = std::to_string(cfg.embed_dim);
  kv["rnn_hidden"] = std::to_string(cfg.rnn_hidden);
  kv["rnn_kind"] = rnn_kind_name(cfg.rnn_kind);
  kv["num_layers"] = std::to_string(cfg.num_layers);
  kv["shared_hidden"] = std::to_string(cfg.shared_hidden);
  kv["activation"] = act_name(cfg.activation);
  std::string tasks, weights;
  for (std::size_t k = 0; k < cfg.tasks.size(); ++k) {
    if (k) {
      tasks += ',';
      weights += ',';
    }
    tasks += cfg.tasks[k].name + ":" + std::to_string(cfg.tasks[k].num_labels);
    weights += detail::fmt_double(cfg.task_weights[k]);
  }
  kv["tasks"] = tasks;
  kv["task_weights"] = weights;
  kv["rnn_input_dropout"] = detail::fmt_double(cfg.rnn_input_dropout);
  kv["rnn_output_dropout"] = detail::fmt_double(cfg.rnn_output_dropout);
  kv["freeze_embeddings"] = cfg.freeze_embeddings ? "true" : "false";
  return kv;
}

inline ModelConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("model config is missing key '" + key + "'");
    return it->second;
  };
  ModelConfig cfg;
  cfg.vocab_size = static_cast<std::size_t>(detail::parse_double(need("vocab_size"), "vocab_size"));
  cfg.embed_dim = static_cast<std::size_t>(detail::parse_double(need("embed_dim"), "embed_dim"));
  cfg.rnn_hidden = static_cast<std::size_t>(detail::parse_double(need("rnn_hidden"), "rnn_hidden"));
  cfg.rnn_kind = rnn_kind_from_name(need("rnn_kind"));
  cfg.num_layers = static_cast<std::size_t>(detail::parse_double(need("num_layers"), "num_layers"));
  cfg.shared_hidden =
      static_cast<std::size_t>(detail::parse_double(need("shared_hidden"), "shared_hidden"));
  cfg.activation = act_from_name(need("activation"));
  for (const std::string& spec : detail::split(need("tasks"), ',')) {
    const std::size_t colon = spec.rfind(':');
    if (colon == std::string::npos) throw DataError("bad task spec '" + spec + "'");
    cfg.tasks.push_back(
        {spec.substr(0, colon),
         static_cast<std::size_t>(detail::parse_double(spec.substr(colon + 1), "task size"))});
  }
  for (const std::string& w : detail::split(need("task_weights"), ',')) {
    cfg.task_weights.push_back(detail::parse_double(w, "task weight"));
  }
  cfg.rnn_input_dropout = detail::parse_double(need("rnn_input_dropout"), "rnn_input_dropout");
  cfg.rnn_output_dropout = detail::parse_double(need("rnn_output_dropout"), "rnn_output_dropout");
  cfg.freeze_embeddings = need("freeze_embeddings") == "true";
  return cfg;
}

inline void save_model(const std::string& path, const ModelConfig& cfg,
                       const ParamStore<float>& params,
                       const std::map<std::string, std::string>& extra_kv = {},
                       const std::map<std::string, Mat<float>>& extra_tensors = {}) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(kModelMagic, 5);

  std::map<std::string, std::string> kv = config_to_kv(cfg);
  for (const auto& [k, v] : extra_kv) kv[k] = v;
  detail::put_u32(f, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    detail::put_string(f, k);
    detail::put_string(f, v);
  }

  auto put_tensor = [&](const std::string& name, const Mat<float>& m) {
    detail::put_string(f, name);
    detail::put_u32(f, static_cast<std::uint32_t>(m.rows));
    detail::put_u32(f, static_cast<std::uint32_t>(m.cols));
    for (float v : m.data) detail::put_f32(f, v);
  };
  detail::put_u32(f, static_cast<std::uint32_t>(params.size() + extra_tensors.size()));
  for (const auto& [name, e] : params) put_tensor(name, e.value);
  for (const auto& [name, m] : extra_tensors) put_tensor(name, m);
  if (!f) throw IoError("write failed for " + path);
}

struct LoadedModel {
  ModelConfig config;
  ParamStore<float> params;
  std::map<std::string, std::string> extra_kv;
  std::map<std::string, Mat<float>> extra_tensors;
};

inline LoadedModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  char magic[5];
  if (!f.read(magic, 5) || std::memcmp(magic, kModelMagic, 5) != 0) {
    throw DataError(path + ": not a model file (bad magic)");
  }
  std::map<std::string, std::string> kv;
  const std::uint32_t n_pairs = detail::get_u32(f, path);
  for (std::uint32_t i = 0; i < n_pairs; ++i) {
    std::string k = detail::get_string(f, path);
    kv[k] = detail::get_string(f, path);
  }

  LoadedModel out;
  out.config = config_from_kv(kv);
  out.config.validate();

  const auto expected = expected_param_names(out.config);
  std::map<std::string, bool> expect_map;
  for (const auto& n : expected) expect_map[n] = false;

  const std::uint32_t n_tensors = detail::get_u32(f, path);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = detail::get_string(f, path);
    const std::uint32_t rows = detail::get_u32(f, path);
    const std::uint32_t cols = detail::get_u32(f, path);
    Mat<float> m(rows, cols);
    for (auto& v : m.data) v = detail::get_f32(f, path);
    auto it = expect_map.find(name);
    if (it != expect_map.end()) {
      if (it->second) throw DataError(path + ": duplicate tensor '" + name + "'");
      it->second = true;
      out.params.create(name, rows, cols) = m;
    } else {
      out.extra_tensors[name] = std::move(m);
    }
  }
  for (const auto& [name, found] : expect_map) {
    if (!found) throw DataError(path + ": missing tensor '" + name + "'");
  }

  const auto model_keys = config_to_kv(out.config);
  for (const auto& [k, v] : kv) {
    if (!model_keys.count(k)) out.extra_kv[k] = v;
  }
  return out;
}

}  // namespace cslm
