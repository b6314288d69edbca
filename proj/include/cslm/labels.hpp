#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cslm/errors.hpp"

namespace cslm {

// Punctuation occurring BEFORE a word. NO-PUNCT is the null class.
enum class Punct : std::int32_t { none = 0, comma = 1, period = 2, qmark = 3 };

// Surface form of a word. LOWERCASE is the null class. MIXED appears only
// during raw extraction and is merged into SENTENCE before anything else sees
// it.
enum class Case : std::int32_t { lower = 0, upper = 1, sentence = 2, single = 3, mixed = 4 };

constexpr std::size_t kNumPunctLabels = 4;
constexpr std::size_t kNumCaseLabels = 4;
constexpr std::int32_t kPunctNullId = 0;
constexpr std::int32_t kCaseNullId = 0;

// Sentinel word appended to a stream whose final punctuation would otherwise
// have no following word to attach to.
inline const std::string kEosWord = "<eos>";

inline const char* punct_name(Punct p) {
  switch (p) {
    case Punct::none: return "NO-PUNCT";
    case Punct::comma: return "COMMA";
    case Punct::period: return "PERIOD";
    case Punct::qmark: return "Q-MARK";
  }
  return "?";
}

inline Punct punct_from_name(const std::string& s) {
  if (s == "NO-PUNCT") return Punct::none;
  if (s == "COMMA") return Punct::comma;
  if (s == "PERIOD") return Punct::period;
  if (s == "Q-MARK") return Punct::qmark;
  throw DataError("unknown punctuation label '" + s + "'");
}

inline const char* case_name(Case c) {
  switch (c) {
    case Case::lower: return "LOWERCASE";
    case Case::upper: return "UPPERCASE";
    case Case::sentence: return "SENTENCE-CASE";
    case Case::single: return "SINGLE-CASE";
    case Case::mixed: return "MIXED-CASE";
  }
  return "?";
}

inline Case case_from_name(const std::string& s) {
  if (s == "LOWERCASE") return Case::lower;
  if (s == "UPPERCASE") return Case::upper;
  if (s == "SENTENCE-CASE") return Case::sentence;
  if (s == "SINGLE-CASE") return Case::single;
  throw DataError("unknown case label '" + s + "'");
}

// Parallel arrays describing one document stream: lowercase words, the
// punctuation before each word, and each word's case. punct[i] and case[i]
// always line up with words[i]. sentence_starts holds index 0 plus every
// position whose preceding punctuation ends a sentence.
struct LabeledStream {
  std::vector<std::string> words;
  std::vector<Punct> punct;
  std::vector<Case> cases;
  std::vector<std::size_t> sentence_starts;

  std::size_t size() const { return words.size(); }

  void push(std::string word, Punct p, Case c) {
    words.push_back(std::move(word));
    punct.push_back(p);
    cases.push_back(c);
  }

  // Rebuilds sentence_starts from the labels. The trailing sentinel is never a
  // sentence start.
  void recompute_sentence_starts() {
    sentence_starts.clear();
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words[i] == kEosWord) continue;
      if (i == 0 || punct[i] == Punct::period || punct[i] == Punct::qmark) {
        sentence_starts.push_back(i);
      }
    }
  }
};

struct ExtractStats {
  std::size_t dropped_marks = 0;     // punctuation outside {, . ?}
  std::size_t collapsed_marks = 0;   // consecutive marks, earlier one discarded
};

namespace detail {

inline bool is_ascii_upper(char ch) { return ch >= 'A' && ch <= 'Z'; }
inline bool is_ascii_lower(char ch) { return ch >= 'a' && ch <= 'z'; }
inline bool is_ascii_alpha(char ch) { return is_ascii_upper(ch) || is_ascii_lower(ch); }

inline bool is_punct_token(const std::string& tok) {
  if (tok.empty()) return false;
  for (char ch : tok) {
    if (std::isalnum(static_cast<unsigned char>(ch))) return false;
  }
  return true;
}

inline std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& ch : out) {
    if (is_ascii_upper(ch)) ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

inline Case classify_case(const std::string& word) {
  std::size_t letters = 0, uppers = 0;
  bool first_letter_upper = false;
  bool saw_letter = false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (!is_ascii_alpha(word[i])) continue;
    if (!saw_letter) {
      saw_letter = true;
      first_letter_upper = is_ascii_upper(word[i]) && i == 0;
    }
    ++letters;
    if (is_ascii_upper(word[i])) ++uppers;
  }
  if (uppers == 0) return Case::lower;
  if (word.size() == 1 && letters == 1 && uppers == 1) return Case::single;
  if (uppers == letters && word.size() > 1) return Case::upper;
  if (uppers == 1 && first_letter_upper) return Case::sentence;
  return Case::mixed;
}

}  // namespace detail

// Turns a surface token stream (punctuation as separate tokens) into a
// LabeledStream. Words are lowercased; a mark attaches to the next word, and a
// stream-final mark attaches to an appended sentinel word. Marks outside
// {, . ?} are dropped and counted; of two consecutive marks the later wins.
inline LabeledStream extract_labels(const std::vector<std::string>& tokens,
                                    ExtractStats* stats = nullptr) {
  LabeledStream out;
  ExtractStats local;
  Punct pending = Punct::none;
  for (const std::string& tok : tokens) {
    if (tok.empty()) continue;
    if (detail::is_punct_token(tok)) {
      Punct p = Punct::none;
      if (tok == ",") {
        p = Punct::comma;
      } else if (tok == ".") {
        p = Punct::period;
      } else if (tok == "?") {
        p = Punct::qmark;
      } else {
        ++local.dropped_marks;
        continue;
      }
      if (pending != Punct::none) ++local.collapsed_marks;
      pending = p;
      continue;
    }
    Case c = detail::classify_case(tok);
    if (c == Case::mixed) c = Case::sentence;
    out.push(detail::ascii_lower(tok), pending, c);
    pending = Punct::none;
  }
  if (pending != Punct::none && !out.words.empty()) {
    out.push(kEosWord, pending, Case::lower);
  }
  out.recompute_sentence_starts();
  if (stats) *stats = local;
  return out;
}

// Inverse of extract_labels for streams without true mixed-case words: applies
// the case transform and re-inserts marks as separate tokens before the word
// they label. The sentinel word itself is dropped; its mark ends the text.
inline std::string reconstruct(const LabeledStream& stream) {
  std::string out;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const bool sentinel = stream.words[i] == kEosWord;
    if (stream.punct[i] != Punct::none) {
      const char* mark = stream.punct[i] == Punct::comma ? ","
                         : stream.punct[i] == Punct::period ? "."
                                                            : "?";
      if (!out.empty()) out += ' ';
      out += mark;
    }
    if (sentinel) continue;
    std::string word = stream.words[i];
    switch (stream.cases[i]) {
      case Case::lower:
        break;
      case Case::upper:
        for (char& ch : word) {
          if (detail::is_ascii_lower(ch)) ch = static_cast<char>(ch - 'a' + 'A');
        }
        break;
      case Case::sentence:
      case Case::single:
        if (!word.empty() && detail::is_ascii_lower(word[0])) {
          word[0] = static_cast<char>(word[0] - 'a' + 'A');
        }
        break;
      case Case::mixed:
        break;
    }
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

// ---- Labeled TSV: `word<TAB>punct<TAB>case` per token, blank line between
// streams.

inline void write_labeled_tsv(const std::vector<LabeledStream>& streams, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  for (std::size_t s = 0; s < streams.size(); ++s) {
    if (s) f << "\n";
    const LabeledStream& st = streams[s];
    for (std::size_t i = 0; i < st.size(); ++i) {
      f << st.words[i] << '\t' << punct_name(st.punct[i]) << '\t' << case_name(st.cases[i])
        << "\n";
    }
  }
}

inline std::vector<LabeledStream> read_labeled_tsv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::vector<LabeledStream> streams;
  LabeledStream current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&]() {
    if (!current.words.empty()) {
      current.recompute_sentence_starts();
      streams.push_back(std::move(current));
      current = LabeledStream{};
    }
  };
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected word<TAB>punct<TAB>case");
    }
    try {
      current.push(line.substr(0, t1), punct_from_name(line.substr(t1 + 1, t2 - t1 - 1)),
                   case_from_name(line.substr(t2 + 1)));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  flush();
  return streams;
}

// ---- Corpus file: UTF-8, whitespace-tokenized, punctuation as separate
// tokens, one sentence per line; a blank line separates document streams.

inline std::vector<std::vector<std::string>> read_corpus_tokens(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::vector<std::vector<std::string>> docs;
  std::vector<std::string> current;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      if (!current.empty()) {
        docs.push_back(std::move(current));
        current.clear();
      }
      continue;
    }
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) current.push_back(tok);
  }
  if (!current.empty()) docs.push_back(std::move(current));
  return docs;
}

}  // namespace cslm
