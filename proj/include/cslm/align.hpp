#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/labels.hpp"

namespace cslm {

// One edit linking a reference position to a hypothesis position. Indices are
// -1 when the op does not touch that stream (insert has no ref, delete no hyp).
struct AlignmentOp {
  enum class Kind { match, substitute, insert, del };
  Kind kind;
  std::ptrdiff_t ref_index = -1;
  std::ptrdiff_t hyp_index = -1;
};

inline const char* align_kind_name(AlignmentOp::Kind k) {
  switch (k) {
    case AlignmentOp::Kind::match: return "match";
    case AlignmentOp::Kind::substitute: return "substitute";
    case AlignmentOp::Kind::insert: return "insert";
    case AlignmentOp::Kind::del: return "delete";
  }
  return "?";
}

// Minimal-cost word alignment under unit costs. When several tracebacks are
// optimal the preference is match > substitute > delete > insert.
inline std::vector<AlignmentOp> levenshtein_align(const std::vector<std::string>& ref,
                                                  const std::vector<std::string>& hyp) {
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<std::size_t> cost((m + 1) * (n + 1));
  auto c = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) c(i, 0) = i;
  for (std::size_t j = 0; j <= n; ++j) c(0, j) = j;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t diag = c(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::size_t del = c(i - 1, j) + 1;
      const std::size_t ins = c(i, j - 1) + 1;
      c(i, j) = std::min(diag, std::min(del, ins));
    }
  }

  std::vector<AlignmentOp> ops;
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool eq = ref[i - 1] == hyp[j - 1];
      if (c(i, j) == c(i - 1, j - 1) + (eq ? 0 : 1)) {
        ops.push_back({eq ? AlignmentOp::Kind::match : AlignmentOp::Kind::substitute,
                       static_cast<std::ptrdiff_t>(i - 1), static_cast<std::ptrdiff_t>(j - 1)});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && c(i, j) == c(i - 1, j) + 1) {
      ops.push_back({AlignmentOp::Kind::del, static_cast<std::ptrdiff_t>(i - 1), -1});
      --i;
      continue;
    }
    ops.push_back({AlignmentOp::Kind::insert, -1, static_cast<std::ptrdiff_t>(j - 1)});
    --j;
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

inline std::size_t alignment_cost(const std::vector<AlignmentOp>& ops) {
  std::size_t cost = 0;
  for (const auto& op : ops) {
    if (op.kind != AlignmentOp::Kind::match) ++cost;
  }
  return cost;
}

struct MapStats {
  std::size_t reattached_puncts = 0;
  std::size_t dropped_puncts = 0;
};

// Transfers reference labels onto the hypothesis. Matched and substituted
// tokens inherit the aligned reference labels; insertions get null labels. A
// deleted token's punctuation moves to the next aligned hypothesis token when
// that slot is free, otherwise it is dropped and counted. When several deleted
// marks compete for one slot the one nearest the following word wins.
inline LabeledStream map_labels_to_asr(const LabeledStream& ref,
                                       const std::vector<std::string>& hyp_words,
                                       const std::vector<AlignmentOp>& alignment,
                                       MapStats* stats = nullptr) {
  // Validate that the op sequence traverses both streams completely.
  std::size_t ri = 0, hi = 0;
  for (const auto& op : alignment) {
    const bool has_ref = op.kind != AlignmentOp::Kind::insert;
    const bool has_hyp = op.kind != AlignmentOp::Kind::del;
    if (has_ref && op.ref_index != static_cast<std::ptrdiff_t>(ri++)) {
      throw StateError("alignment does not traverse the reference stream monotonically");
    }
    if (has_hyp && op.hyp_index != static_cast<std::ptrdiff_t>(hi++)) {
      throw StateError("alignment does not traverse the hypothesis stream monotonically");
    }
  }
  if (ri != ref.size() || hi != hyp_words.size()) {
    throw StateError("alignment covers " + std::to_string(ri) + "/" + std::to_string(hi) +
                     " tokens but streams have " + std::to_string(ref.size()) + "/" +
                     std::to_string(hyp_words.size()));
  }

  MapStats local;
  LabeledStream out;
  Punct pending = Punct::none;
  for (const auto& op : alignment) {
    switch (op.kind) {
      case AlignmentOp::Kind::del: {
        const Punct p = ref.punct[static_cast<std::size_t>(op.ref_index)];
        if (p != Punct::none) {
          if (pending != Punct::none) ++local.dropped_puncts;
          pending = p;
        }
        break;
      }
      case AlignmentOp::Kind::insert:
        out.push(hyp_words[static_cast<std::size_t>(op.hyp_index)], Punct::none, Case::lower);
        break;
      case AlignmentOp::Kind::match:
      case AlignmentOp::Kind::substitute: {
        const std::size_t r = static_cast<std::size_t>(op.ref_index);
        Punct p = ref.punct[r];
        if (pending != Punct::none) {
          if (p == Punct::none) {
            p = pending;
            ++local.reattached_puncts;
          } else {
            ++local.dropped_puncts;
          }
          pending = Punct::none;
        }
        out.push(hyp_words[static_cast<std::size_t>(op.hyp_index)], p, ref.cases[r]);
        break;
      }
    }
  }
  if (pending != Punct::none) ++local.dropped_puncts;
  out.recompute_sentence_starts();
  if (stats) *stats = local;
  return out;
}

// Restriction masks over hypothesis positions: a punctuation slot counts only
// when the words on both of its sides were recognized correctly (position 0
// needs only token 0), and a case decision only on correctly recognized words.
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> eval_masks(
    const std::vector<AlignmentOp>& alignment, std::size_t hyp_len) {
  std::vector<std::uint8_t> matched(hyp_len, 0);
  for (const auto& op : alignment) {
    if (op.kind == AlignmentOp::Kind::match) {
      matched[static_cast<std::size_t>(op.hyp_index)] = 1;
    }
  }
  std::vector<std::uint8_t> punct_mask(hyp_len, 0);
  for (std::size_t i = 0; i < hyp_len; ++i) {
    punct_mask[i] = i == 0 ? matched[0] : (matched[i - 1] && matched[i]);
  }
  return {punct_mask, matched};
}

struct MappedStream {
  LabeledStream stream;
  std::vector<std::uint8_t> punct_mask;
  std::vector<std::uint8_t> case_mask;
  MapStats stats;
};

// Full mapping of one reference stream onto hypothesis words. A trailing
// sentinel on the reference is detached before alignment and re-appended to
// the result carrying the stream-final mark; its punctuation slot counts when
// the final hypothesis word was recognized correctly (the right context is the
// stream end), and it never enters the case mask.
inline MappedStream map_stream_to_asr(const LabeledStream& ref_in,
                                      const std::vector<std::string>& hyp_words) {
  LabeledStream ref = ref_in;
  bool had_sentinel = false;
  Punct sentinel_punct = Punct::none;
  if (!ref.words.empty() && ref.words.back() == kEosWord) {
    had_sentinel = true;
    sentinel_punct = ref.punct.back();
    ref.words.pop_back();
    ref.punct.pop_back();
    ref.cases.pop_back();
    ref.recompute_sentence_starts();
  }
  const auto alignment = levenshtein_align(ref.words, hyp_words);
  MappedStream out;
  out.stream = map_labels_to_asr(ref, hyp_words, alignment, &out.stats);
  auto masks = eval_masks(alignment, hyp_words.size());
  out.punct_mask = std::move(masks.first);
  out.case_mask = std::move(masks.second);
  if (had_sentinel) {
    out.stream.push(kEosWord, sentinel_punct, Case::lower);
    out.stream.recompute_sentence_starts();
    const bool last_ok =
        hyp_words.empty() ||
        (!alignment.empty() && alignment.back().kind == AlignmentOp::Kind::match);
    out.punct_mask.push_back(last_ok ? 1 : 0);
    out.case_mask.push_back(0);
  }
  return out;
}

// Mask sidecar: `punct<TAB>case` 0/1 flags, one line per token; blank line
// between streams.
inline void write_mask_sidecar(const std::vector<std::pair<std::vector<std::uint8_t>,
                                                           std::vector<std::uint8_t>>>& masks,
                               const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  for (std::size_t s = 0; s < masks.size(); ++s) {
    if (s) f << "\n";
    const auto& [pm, cm] = masks[s];
    for (std::size_t i = 0; i < pm.size(); ++i) {
      f << int(pm[i]) << '\t' << int(cm[i]) << "\n";
    }
  }
}

inline std::vector<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>>
read_mask_sidecar(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::vector<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>> out;
  std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&]() {
    if (!current.first.empty()) {
      out.push_back(std::move(current));
      current = {};
    }
  };
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.size() < 3 || line[1] != '\t' || (line[0] != '0' && line[0] != '1') ||
        (line[2] != '0' && line[2] != '1')) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 0/1<TAB>0/1");
    }
    current.first.push_back(line[0] == '1');
    current.second.push_back(line[2] == '1');
  }
  flush();
  return out;
}

}  // namespace cslm
