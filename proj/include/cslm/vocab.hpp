#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/labels.hpp"

namespace cslm {

// Word-to-id map with three reserved entries. Unknown words resolve to UNK.
class Vocabulary {
 public:
  static constexpr std::int32_t kUnk = 0;
  static constexpr std::int32_t kPad = 1;
  static constexpr std::int32_t kEos = 2;

  Vocabulary() { words_ = {"<unk>", "<pad>", kEosWord}; }

  std::int32_t id(const std::string& word) const {
    auto it = map_.find(word);
    return it == map_.end() ? kUnk : it->second;
  }

  const std::string& word(std::int32_t id) const { return words_[static_cast<std::size_t>(id)]; }

  std::size_t size() const { return words_.size(); }

  // Words from count-sorted order (descending, ties lexicographic) with count
  // >= min_count get ids after the reserved block.
  static Vocabulary build(const std::vector<LabeledStream>& streams, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : streams) {
      for (const auto& w : s.words) {
        if (w == kEosWord) continue;
        ++counts[w];
      }
    }
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [word, count] : items) {
      if (count < min_count) continue;
      if (word == "<unk>" || word == "<pad>" || word == kEosWord) continue;
      v.add(word, count);
    }
    v.map_[kEosWord] = kEos;
    return v;
  }

  // Newline-joined non-reserved words in id order, for embedding a vocabulary
  // inside a model file.
  std::string to_blob() const {
    std::string out;
    for (std::size_t i = 3; i < words_.size(); ++i) {
      if (i > 3) out += '\n';
      out += words_[i];
    }
    return out;
  }

  static Vocabulary from_blob(const std::string& blob) {
    Vocabulary v;
    std::size_t pos = 0;
    while (pos <= blob.size() && !blob.empty()) {
      std::size_t next = blob.find('\n', pos);
      if (next == std::string::npos) next = blob.size();
      std::string word = blob.substr(pos, next - pos);
      if (!word.empty()) v.add(word, 0);
      pos = next + 1;
      if (next == blob.size()) break;
    }
    v.map_[kEosWord] = kEos;
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < words_.size(); ++i) {
      f << words_[i] << '\t' << (i < counts_.size() ? counts_[i] : 0) << "\n";
    }
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    Vocabulary v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError(path + ":" + std::to_string(line_no) + ": expected word<TAB>count");
      }
      std::string word = line.substr(0, tab);
      std::size_t count = 0;
      try {
        count = std::stoull(line.substr(tab + 1));
      } catch (...) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad count");
      }
      if (line_no <= 3) {
        // reserved rows; verify they are what we expect
        const char* expect = line_no == 1 ? "<unk>" : line_no == 2 ? "<pad>" : kEosWord.c_str();
        if (word != expect) {
          throw DataError(path + ":" + std::to_string(line_no) + ": expected reserved word '" +
                          expect + "', got '" + word + "'");
        }
        continue;
      }
      v.add(word, count);
    }
    v.map_[kEosWord] = kEos;
    return v;
  }

 private:
  void add(const std::string& word, std::size_t count) {
    map_[word] = static_cast<std::int32_t>(words_.size());
    words_.push_back(word);
    counts_.resize(words_.size(), 0);
    counts_.back() = count;
  }

  std::unordered_map<std::string, std::int32_t> map_;
  std::vector<std::string> words_;
  std::vector<std::size_t> counts_{0, 0, 0};
};

}  // namespace cslm
