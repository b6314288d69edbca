#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cslm/dataset.hpp"
#include "cslm/labels.hpp"
#include "cslm/vocab.hpp"
#include "support/synth.hpp"
#include "support/tmpdir.hpp"

using namespace cslm;
using Catch::Approx;

namespace {

std::vector<std::string> toks(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> out;
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("label extraction on the Kilimanjaro sentence", "[data]") {
  auto s = extract_labels(
      toks("I ended up hiking up Mount Kilimanjaro , the highest mountain in Africa ."));

  const std::vector<std::string> words = {"i",  "ended",   "up",       "hiking", "up",
                                          "mount", "kilimanjaro", "the", "highest",
                                          "mountain", "in", "africa", "<eos>"};
  REQUIRE(s.words == words);
  std::map<std::string, Punct> punct;
  std::map<std::string, Case> cases;
  for (std::size_t i = 0; i < s.size(); ++i) {
    punct[s.words[i]] = s.punct[i];
    cases[s.words[i]] = s.cases[i];
  }
  REQUIRE(punct["the"] == Punct::comma);
  REQUIRE(punct["<eos>"] == Punct::period);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.words[i] != "the" && s.words[i] != "<eos>") REQUIRE(s.punct[i] == Punct::none);
  }
  REQUIRE(cases["i"] == Case::single);
  REQUIRE(cases["mount"] == Case::sentence);
  REQUIRE(cases["kilimanjaro"] == Case::sentence);
  REQUIRE(cases["africa"] == Case::sentence);
  REQUIRE(cases["ended"] == Case::lower);
  REQUIRE(cases["<eos>"] == Case::lower);
}

TEST_CASE("sentence boundaries attach to the following word", "[data]") {
  auto s = extract_labels(toks("I wish you luck . May none of your non cancer cells become "
                               "endangered species ."));
  REQUIRE(s.words[4] == "may");
  REQUIRE(s.punct[4] == Punct::period);
  REQUIRE(s.cases[4] == Case::sentence);
  // sentence starts: index 0 and "may"
  REQUIRE(s.sentence_starts == std::vector<std::size_t>{0, 4});
}

TEST_CASE("case classes: acronyms, mixed-case merge, digits", "[data]") {
  auto s = extract_labels(toks("NASA hired McGill for mission 7A ."));
  REQUIRE(s.words[0] == "nasa");
  REQUIRE(s.cases[0] == Case::upper);
  REQUIRE(s.words[2] == "mcgill");
  REQUIRE(s.cases[2] == Case::sentence);  // MIXED-CASE merged
  REQUIRE(s.cases[1] == Case::lower);
  REQUIRE(s.cases[5] == Case::upper);  // "7A": its only letter is uppercase
}

TEST_CASE("stray and doubled punctuation", "[data]") {
  ExtractStats stats;
  auto s = extract_labels(toks("well ; he said , . fine !"), &stats);
  // the trailing "!" is dropped, so no sentinel is appended either
  REQUIRE(s.words == std::vector<std::string>{"well", "he", "said", "fine"});
  REQUIRE(stats.dropped_marks == 2);     // ; and !
  REQUIRE(stats.collapsed_marks == 1);   // ", ." keeps the period
  REQUIRE(s.punct[3] == Punct::period);  // on "fine"
}

TEST_CASE("streams without trailing punctuation get no sentinel", "[data]") {
  auto s = extract_labels(toks("hello there"));
  REQUIRE(s.words == std::vector<std::string>{"hello", "there"});
}

TEST_CASE("reconstruction inverts extraction on the Kilimanjaro sentence", "[data]") {
  const std::string text =
      "I ended up hiking up Mount Kilimanjaro , the highest mountain in Africa .";
  REQUIRE(reconstruct(extract_labels(toks(text))) == text);
}

TEST_CASE("reconstruction of null labels is the space join", "[data]") {
  LabeledStream s;
  s.push("plain", Punct::none, Case::lower);
  s.push("words", Punct::none, Case::lower);
  s.push("here", Punct::none, Case::lower);
  REQUIRE(reconstruct(s) == "plain words here");
}

TEST_CASE("merged mixed-case reconstructs with first-letter capitalization only", "[data]") {
  LabeledStream s;
  s.push("mcgill", Punct::none, Case::sentence);
  REQUIRE(reconstruct(s) == "Mcgill");
}

TEST_CASE("extract/reconstruct round-trips generated mixed-case-free corpora", "[data]") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    synth::Options opt;
    opt.sentences = 1 + rng.below(30);
    opt.rich_case = trial % 2 == 0;  // I / NASA / proper nouns are still not mixed-case
    auto tokens = synth::corpus_tokens(opt, rng);
    std::string joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) joined += ' ';
      joined += tokens[i];
    }
    REQUIRE(reconstruct(extract_labels(tokens)) == joined);
  }
}

TEST_CASE("class imbalance favors NO-PUNCT on natural-looking fixtures", "[data]") {
  Rng rng(7);
  synth::Options opt;
  opt.sentences = 100;
  auto s = extract_labels(synth::corpus_tokens(opt, rng));
  std::map<Punct, std::size_t> counts;
  for (auto p : s.punct) ++counts[p];
  REQUIRE(counts[Punct::none] > counts[Punct::comma]);
  REQUIRE(counts[Punct::none] > counts[Punct::period]);
  REQUIRE(counts[Punct::none] > counts[Punct::qmark]);
}

TEST_CASE("labeled TSV round-trips", "[data]") {
  testsup::TmpDir tmp("tsv");
  Rng rng(9);
  synth::Options opt;
  opt.sentences = 12;
  opt.rich_case = true;
  std::vector<LabeledStream> streams;
  streams.push_back(extract_labels(synth::corpus_tokens(opt, rng)));
  streams.push_back(extract_labels(synth::corpus_tokens(opt, rng)));

  const std::string path = tmp.file("x.tsv");
  write_labeled_tsv(streams, path);
  auto loaded = read_labeled_tsv(path);
  REQUIRE(loaded.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(loaded[i].words == streams[i].words);
    REQUIRE(loaded[i].punct == streams[i].punct);
    REQUIRE(loaded[i].cases == streams[i].cases);
    REQUIRE(loaded[i].sentence_starts == streams[i].sentence_starts);
  }

  testsup::write_file(tmp.file("bad.tsv"), "word\tNO-PUNCT\n");
  try {
    read_labeled_tsv(tmp.file("bad.tsv"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(":1:") != std::string::npos);
  }
}

TEST_CASE("short streams become a single chunk", "[data]") {
  Rng rng(1);
  synth::Options opt;
  opt.sentences = 3;
  auto s = extract_labels(synth::corpus_tokens(opt, rng));
  REQUIRE(s.size() < 40);
  Rng crng(2);
  auto chunks = chunk_stream(s, 40, 70, crng);
  REQUIRE(chunks.size() == 1);
  REQUIRE(chunks[0].begin == 0);
  REQUIRE(chunks[0].end == s.size());
}

TEST_CASE("a cut sentence restarts the next chunk", "[data]") {
  // three sentences of exactly 25 tokens; a fixed draw of 60 cuts the third
  LabeledStream s;
  for (int sent = 0; sent < 3; ++sent) {
    for (int w = 0; w < 25; ++w) {
      s.push("w" + std::to_string(w), w == 0 && sent > 0 ? Punct::period : Punct::none,
             Case::lower);
    }
  }
  s.recompute_sentence_starts();
  REQUIRE(s.sentence_starts == std::vector<std::size_t>{0, 25, 50});

  Rng rng(1);
  auto chunks = chunk_stream(s, 60, 60, rng, ChunkPolicy::overlap);
  REQUIRE(chunks.size() == 2);
  REQUIRE(chunks[0].begin == 0);
  REQUIRE(chunks[0].end == 60);
  REQUIRE(chunks[1].begin == 50);  // the cut sentence appears in both chunks
  REQUIRE(chunks[1].end == 75);

  Rng rng2(1);
  auto cut = chunk_stream(s, 60, 60, rng2, ChunkPolicy::truncate);
  REQUIRE(cut.size() == 2);
  REQUIRE(cut[0].end == 50);  // truncated to the boundary instead
  REQUIRE(cut[1].begin == 50);
}

TEST_CASE("every chunk begins at a sentence start", "[data]") {
  Rng rng(77);
  synth::Options opt;
  opt.sentences = 120;
  auto s = extract_labels(synth::corpus_tokens(opt, rng));
  Rng crng(78);
  for (auto policy : {ChunkPolicy::overlap, ChunkPolicy::truncate}) {
    auto chunks = chunk_stream(s, 40, 70, crng, policy);
    for (const auto& c : chunks) {
      REQUIRE(std::binary_search(s.sentence_starts.begin(), s.sentence_starts.end(), c.begin));
      REQUIRE(c.end > c.begin);
    }
    // concatenating with overlaps deduplicated reproduces the stream
    std::size_t covered = 0;
    for (const auto& c : chunks) {
      REQUIRE(c.begin <= covered);  // no gaps
      covered = std::max(covered, c.end);
    }
    REQUIRE(covered == s.size());
  }
}

TEST_CASE("sentences longer than max_len are emitted whole with a warning", "[data]") {
  LabeledStream s;
  for (int w = 0; w < 100; ++w) s.push("w", Punct::none, Case::lower);
  s.recompute_sentence_starts();
  Rng rng(3);
  ChunkStats stats;
  auto chunks = chunk_stream(s, 40, 70, rng, ChunkPolicy::overlap, &stats);
  REQUIRE(chunks.size() == 1);
  REQUIRE(chunks[0].length() == 100);
  REQUIRE(stats.oversized_sentences == 1);
}

TEST_CASE("consolidation keeps one full sequence per stream", "[data]") {
  Rng rng(5);
  synth::Options opt;
  opt.sentences = 8;
  std::vector<LabeledStream> docs;
  for (int i = 0; i < 3; ++i) docs.push_back(extract_labels(synth::corpus_tokens(opt, rng)));
  auto chunks = consolidate_for_eval(docs);
  REQUIRE(chunks.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(chunks[i].stream == i);
    REQUIRE(chunks[i].begin == 0);
    REQUIRE(chunks[i].end == docs[i].size());
  }
}

TEST_CASE("vocabulary thresholds and reserved ids", "[data]") {
  LabeledStream s;
  for (const char* w : {"apple", "apple", "pear", "apple", "plum", "plum"}) {
    s.push(w, Punct::none, Case::lower);
  }
  auto v1 = Vocabulary::build({s}, 1);
  REQUIRE(v1.size() == 3 + 3);
  REQUIRE(v1.id("apple") == 3);  // most frequent first
  REQUIRE(v1.id("plum") == 4);
  REQUIRE(v1.id("pear") == 5);
  REQUIRE(v1.id("<eos>") == Vocabulary::kEos);

  auto v2 = Vocabulary::build({s}, 2);
  REQUIRE(v2.id("pear") == Vocabulary::kUnk);  // seen once, threshold 2
  REQUIRE(v2.id("never-seen") == Vocabulary::kUnk);

  testsup::TmpDir tmp("vocab");
  v1.save(tmp.file("v.vocab"));
  auto loaded = Vocabulary::load(tmp.file("v.vocab"));
  REQUIRE(loaded.size() == v1.size());
  REQUIRE(loaded.id("plum") == 4);

  auto blob = Vocabulary::from_blob(v1.to_blob());
  REQUIRE(blob.size() == v1.size());
  REQUIRE(blob.id("pear") == 5);
}

TEST_CASE("batchify pads, masks and excludes the sentinel from the case task", "[data]") {
  auto s = extract_labels(toks("Good work , team . Nice job ."));
  REQUIRE(s.size() == 6);  // 5 words + sentinel
  auto vocab = Vocabulary::build({s}, 1);
  std::vector<Chunk> chunks = {{0, 0, 6}, {0, 3, 6}};
  auto batches = batchify({s}, chunks, 2, vocab);
  REQUIRE(batches.size() == 1);
  const auto& b = batches[0];
  REQUIRE(b.rows == 2);
  REQUIRE(b.max_len == 6);
  for (std::size_t t = 0; t < 6; ++t) {
    REQUIRE(b.mask[t] == 1);
    REQUIRE(b.punct.mask[t] == 1);
  }
  // row 1 is 3 long; the padded suffix is masked out and holds PAD + nulls
  for (std::size_t t = 3; t < 6; ++t) {
    REQUIRE(b.mask[6 + t] == 0);
    REQUIRE(b.token(1, t) == Vocabulary::kPad);
    REQUIRE(b.punct.labels[6 + t] == kPunctNullId);
    REQUIRE(b.punct.mask[6 + t] == 0);
    REQUIRE(b.cases.mask[6 + t] == 0);
  }
  // the sentinel is masked out of the case task only
  REQUIRE(b.token(0, 5) == Vocabulary::kEos);
  REQUIRE(b.cases.mask[5] == 0);
  REQUIRE(b.punct.mask[5] == 1);
  REQUIRE(b.token(1, 2) == Vocabulary::kEos);  // row 1 sentinel at position 2
  REQUIRE(b.cases.mask[6 + 2] == 0);
  REQUIRE(b.punct.mask[6 + 2] == 1);
}

TEST_CASE("embedding loader: coverage, header, malformed lines", "[data]") {
  testsup::TmpDir tmp("embed");
  LabeledStream s;
  for (const char* w : {"alpha", "beta", "gamma", "delta", "epsilon"}) {
    s.push(w, Punct::none, Case::lower);
  }
  auto vocab = Vocabulary::build({s}, 1);
  REQUIRE(vocab.size() == 8);

  testsup::write_file(tmp.file("vec.txt"),
                      "alpha 1 2 3\n"
                      "gamma 4 5 6\n"
                      "unknownword 9 9 9\n"
                      "epsilon 7 8 9\n");
  Rng rng(1);
  auto loaded = load_embeddings<float>(tmp.file("vec.txt"), vocab, 3, rng);
  REQUIRE(loaded.found == 3);
  REQUIRE(loaded.coverage == Approx(0.6));
  REQUIRE(loaded.table.rows == vocab.size());
  const auto a = static_cast<std::size_t>(vocab.id("alpha"));
  REQUIRE(loaded.table.at(a, 0) == 1.0f);
  REQUIRE(loaded.table.at(a, 2) == 3.0f);
  // words absent from the file keep a random init
  const auto b = static_cast<std::size_t>(vocab.id("beta"));
  REQUIRE(loaded.table.at(b, 0) != 0.0f);

  // word2vec header line is accepted
  testsup::write_file(tmp.file("hdr.txt"), "2 3\nalpha 1 2 3\nbeta 4 5 6\n");
  Rng rng2(1);
  auto with_header = load_embeddings<float>(tmp.file("hdr.txt"), vocab, 3, rng2);
  REQUIRE(with_header.found == 2);

  // wrong arity names the line
  testsup::write_file(tmp.file("bad.txt"), "alpha 1 2 3\nbeta 1 2\n");
  Rng rng3(1);
  try {
    load_embeddings<float>(tmp.file("bad.txt"), vocab, 3, rng3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);
  }

  // header dimension mismatch
  testsup::write_file(tmp.file("dim.txt"), "1 5\nalpha 1 2 3 4 5\n");
  Rng rng4(1);
  REQUIRE_THROWS_AS(load_embeddings<float>(tmp.file("dim.txt"), vocab, 3, rng4), DataError);
}

TEST_CASE("corpus reader splits documents on blank lines", "[data]") {
  testsup::TmpDir tmp("corpus");
  testsup::write_file(tmp.file("c.txt"), "One two .\nThree four .\n\nFive six ?\n");
  auto docs = read_corpus_tokens(tmp.file("c.txt"));
  REQUIRE(docs.size() == 2);
  REQUIRE(docs[0].size() == 6);
  REQUIRE(docs[1].size() == 3);
}
