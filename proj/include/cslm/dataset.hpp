#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/labels.hpp"
#include "cslm/mat.hpp"
#include "cslm/rng.hpp"
#include "cslm/vocab.hpp"

namespace cslm {

// Token span [begin, end) within one stream.
struct Chunk {
  std::size_t stream = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
};

// When a drawn chunk ends mid-sentence: `overlap` restarts the cut sentence at
// the top of the next chunk (its first tokens appear in both chunks);
// `truncate` cuts the chunk back to the sentence boundary instead, so chunks
// never overlap but may fall short of min_len.
enum class ChunkPolicy { overlap, truncate };

inline const char* chunk_policy_name(ChunkPolicy p) {
  return p == ChunkPolicy::overlap ? "overlap" : "truncate";
}

inline ChunkPolicy chunk_policy_from_name(const std::string& s) {
  if (s == "overlap") return ChunkPolicy::overlap;
  if (s == "truncate") return ChunkPolicy::truncate;
  throw ConfigError("unknown chunk policy '" + s + "' (expected overlap|truncate)");
}

struct ChunkStats {
  std::size_t oversized_sentences = 0;
};

// Splits a stream into training sequences of random length in
// [min_len, max_len], each beginning at a sentence start. A stream shorter
// than min_len becomes a single chunk; a sentence that can't fit the drawn
// length is emitted on its own (with a warning count when it exceeds max_len).
inline std::vector<Chunk> chunk_stream(const LabeledStream& stream, std::size_t min_len,
                                       std::size_t max_len, Rng& rng,
                                       ChunkPolicy policy = ChunkPolicy::overlap,
                                       ChunkStats* stats = nullptr, std::size_t stream_index = 0) {
  if (min_len < 1 || min_len > max_len) {
    throw ConfigError("chunk bounds must satisfy 1 <= min_len <= max_len");
  }
  const std::size_t n = stream.size();
  std::vector<Chunk> chunks;
  if (n == 0) return chunks;

  const auto& starts = stream.sentence_starts;
  if (starts.empty()) {
    // degenerate stream (sentinel only): one whole-stream chunk
    chunks.push_back({stream_index, 0, n});
    return chunks;
  }
  auto next_start_after = [&](std::size_t pos) {
    auto it = std::upper_bound(starts.begin(), starts.end(), pos);
    return it == starts.end() ? n : *it;
  };
  auto start_at_or_before = [&](std::size_t pos) {
    auto it = std::upper_bound(starts.begin(), starts.end(), pos);
    return *(--it);  // starts always contains 0
  };

  std::size_t pos = 0;
  while (pos < n) {
    const std::size_t len = rng.between(min_len, max_len);
    std::size_t end = pos + len;
    if (end >= n) {
      chunks.push_back({stream_index, pos, n});
      break;
    }
    if (std::binary_search(starts.begin(), starts.end(), end)) {
      chunks.push_back({stream_index, pos, end});
      pos = end;
      continue;
    }
    const std::size_t cut_sentence = start_at_or_before(end);
    if (cut_sentence == pos) {
      // The first sentence alone exceeds the drawn length: emit it whole.
      const std::size_t sent_end = next_start_after(pos);
      if (sent_end - pos > max_len && stats) ++stats->oversized_sentences;
      chunks.push_back({stream_index, pos, sent_end});
      pos = sent_end;
      continue;
    }
    if (policy == ChunkPolicy::overlap) {
      chunks.push_back({stream_index, pos, end});
      pos = cut_sentence;
    } else {
      chunks.push_back({stream_index, pos, cut_sentence});
      pos = cut_sentence;
    }
  }
  return chunks;
}

// Validation and test streams are never chunked; each document is one
// full-length sequence.
inline std::vector<Chunk> consolidate_for_eval(const std::vector<LabeledStream>& streams) {
  std::vector<Chunk> out;
  out.reserve(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    if (streams[s].size() == 0) continue;
    out.push_back({s, 0, streams[s].size()});
  }
  return out;
}

// Padded batch: token ids and a validity mask (rows x max_len, masked-in
// prefix contiguous), plus per-task label ids and loss masks. The case task's
// mask additionally excludes the sentinel word.
struct TrainingBatch {
  std::size_t rows = 0;
  std::size_t max_len = 0;
  std::vector<std::int32_t> token_ids;
  std::vector<std::uint8_t> mask;
  struct TaskLabels {
    std::vector<std::int32_t> labels;
    std::vector<std::uint8_t> mask;
  };
  TaskLabels punct;
  TaskLabels cases;

  std::int32_t token(std::size_t r, std::size_t t) const { return token_ids[r * max_len + t]; }
};

inline std::vector<TrainingBatch> batchify(const std::vector<LabeledStream>& streams,
                                           const std::vector<Chunk>& chunks,
                                           std::size_t batch_size, const Vocabulary& vocab) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<TrainingBatch> batches;
  for (std::size_t at = 0; at < chunks.size(); at += batch_size) {
    const std::size_t rows = std::min(batch_size, chunks.size() - at);
    std::size_t max_len = 0;
    for (std::size_t r = 0; r < rows; ++r) max_len = std::max(max_len, chunks[at + r].length());
    TrainingBatch b;
    b.rows = rows;
    b.max_len = max_len;
    b.token_ids.assign(rows * max_len, Vocabulary::kPad);
    b.mask.assign(rows * max_len, 0);
    b.punct.labels.assign(rows * max_len, kPunctNullId);
    b.punct.mask.assign(rows * max_len, 0);
    b.cases.labels.assign(rows * max_len, kCaseNullId);
    b.cases.mask.assign(rows * max_len, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const Chunk& c = chunks[at + r];
      const LabeledStream& s = streams[c.stream];
      for (std::size_t t = 0; t < c.length(); ++t) {
        const std::size_t i = c.begin + t;
        const std::size_t cell = r * max_len + t;
        b.token_ids[cell] = vocab.id(s.words[i]);
        b.mask[cell] = 1;
        b.punct.labels[cell] = static_cast<std::int32_t>(s.punct[i]);
        b.punct.mask[cell] = 1;
        b.cases.labels[cell] = static_cast<std::int32_t>(s.cases[i]);
        b.cases.mask[cell] = s.words[i] == kEosWord ? 0 : 1;
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

template <typename T>
struct EmbeddingLoad {
  Mat<T> table;
  std::size_t found = 0;
  double coverage = 0.0;  // found / non-reserved vocab words
};

// word2vec text format: optional "count dim" header, then `word v1 ... v_d`
// per line. Rows for words absent from the file keep their random init, so the
// rng draw count does not depend on the file contents.
template <typename T>
EmbeddingLoad<T> load_embeddings(const std::string& path, const Vocabulary& vocab,
                                 std::size_t embed_dim, Rng& rng) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);

  EmbeddingLoad<T> out;
  out.table = Mat<T>(vocab.size(), embed_dim);
  for (auto& v : out.table.data) v = static_cast<T>(rng.gaussian(0.0, 0.1));

  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (first) {
      first = false;
      // A two-integer first line is the word2vec header.
      char* endp = nullptr;
      const long count = std::strtol(word.c_str(), &endp, 10);
      long dim = 0;
      if (endp && *endp == '\0' && ss >> dim && ss.eof() && count > 0) {
        if (static_cast<std::size_t>(dim) != embed_dim) {
          throw DataError(path + ":1: embedding dimension " + std::to_string(dim) +
                          " does not match configured " + std::to_string(embed_dim));
        }
        continue;
      }
      ss.clear();
      ss.str(line);
      ss >> word;
    }
    std::vector<T> values;
    values.reserve(embed_dim);
    double v;
    while (ss >> v) values.push_back(static_cast<T>(v));
    if (values.size() != embed_dim) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(embed_dim) + " values, got " + std::to_string(values.size()));
    }
    const std::int32_t id = vocab.id(word);
    if (id == Vocabulary::kUnk && word != "<unk>") continue;
    std::copy(values.begin(), values.end(), out.table.row(static_cast<std::size_t>(id)));
    if (!seen[static_cast<std::size_t>(id)]) {
      seen[static_cast<std::size_t>(id)] = true;
      ++out.found;
    }
  }
  const std::size_t real_words = vocab.size() - 3;
  out.coverage = real_words ? static_cast<double>(out.found) / static_cast<double>(real_words) : 0.0;
  return out;
}

// Slice of a stream as model inputs/targets.
struct SequenceExample {
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> punct_labels;
  std::vector<std::uint8_t> punct_mask;
  std::vector<std::int32_t> case_labels;
  std::vector<std::uint8_t> case_mask;
};

inline SequenceExample make_example(const LabeledStream& s, std::size_t begin, std::size_t end,
                                    const Vocabulary& vocab) {
  SequenceExample ex;
  const std::size_t n = end - begin;
  ex.token_ids.resize(n);
  ex.punct_labels.resize(n);
  ex.punct_mask.assign(n, 1);
  ex.case_labels.resize(n);
  ex.case_mask.assign(n, 1);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t i = begin + t;
    ex.token_ids[t] = vocab.id(s.words[i]);
    ex.punct_labels[t] = static_cast<std::int32_t>(s.punct[i]);
    ex.case_labels[t] = static_cast<std::int32_t>(s.cases[i]);
    if (s.words[i] == kEosWord) ex.case_mask[t] = 0;
  }
  return ex;
}

}  // namespace cslm
