#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "cslm/align.hpp"
#include "cslm/labels.hpp"
#include "cslm/metrics.hpp"
#include "cslm/rng.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace cslm;

namespace {

using Kind = AlignmentOp::Kind;

std::vector<std::string> random_words(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
  std::vector<std::string> out(rng.below(max_len + 1));
  for (auto& w : out) w = pool[rng.below(pool.size())];
  return out;
}

// Replay the ops against both streams; they must reproduce them completely.
void check_replay(const std::vector<AlignmentOp>& ops, const std::vector<std::string>& ref,
                  const std::vector<std::string>& hyp) {
  std::size_t ri = 0, hi = 0;
  for (const auto& op : ops) {
    switch (op.kind) {
      case Kind::match:
        REQUIRE(ref.at(ri) == hyp.at(hi));
        REQUIRE(op.ref_index == static_cast<std::ptrdiff_t>(ri++));
        REQUIRE(op.hyp_index == static_cast<std::ptrdiff_t>(hi++));
        break;
      case Kind::substitute:
        REQUIRE(ref.at(ri) != hyp.at(hi));
        REQUIRE(op.ref_index == static_cast<std::ptrdiff_t>(ri++));
        REQUIRE(op.hyp_index == static_cast<std::ptrdiff_t>(hi++));
        break;
      case Kind::del:
        REQUIRE(op.ref_index == static_cast<std::ptrdiff_t>(ri++));
        REQUIRE(op.hyp_index == -1);
        break;
      case Kind::insert:
        REQUIRE(op.ref_index == -1);
        REQUIRE(op.hyp_index == static_cast<std::ptrdiff_t>(hi++));
        break;
    }
  }
  REQUIRE(ri == ref.size());
  REQUIRE(hi == hyp.size());
}

}  // namespace

TEST_CASE("identical streams align as all matches", "[align]") {
  std::vector<std::string> w = {"the", "cat", "sat"};
  auto ops = levenshtein_align(w, w);
  REQUIRE(ops.size() == 3);
  for (const auto& op : ops) REQUIRE(op.kind == Kind::match);
  REQUIRE(alignment_cost(ops) == 0);
}

TEST_CASE("hand-worked alignment: substitution plus deletion", "[align]") {
  std::vector<std::string> ref = {"a", "b", "c", "d"};
  std::vector<std::string> hyp = {"a", "x", "c"};
  auto ops = levenshtein_align(ref, hyp);
  REQUIRE(ops.size() == 4);
  REQUIRE(ops[0].kind == Kind::match);
  REQUIRE(ops[1].kind == Kind::substitute);
  REQUIRE(ops[2].kind == Kind::match);
  REQUIRE(ops[3].kind == Kind::del);
  REQUIRE(alignment_cost(ops) == 2);
}

TEST_CASE("distance is symmetric with insertions and deletions swapped", "[align]") {
  // unambiguous pair: swapping the streams exactly exchanges ins and del
  std::vector<std::string> longer = {"we", "all", "left", "early"};
  std::vector<std::string> shorter = {"we", "left"};
  auto fwd = levenshtein_align(longer, shorter);
  auto rev = levenshtein_align(shorter, longer);
  REQUIRE(alignment_cost(fwd) == 2);
  REQUIRE(alignment_cost(rev) == 2);
  std::size_t fwd_del = 0, rev_ins = 0;
  for (const auto& op : fwd) fwd_del += op.kind == Kind::del;
  for (const auto& op : rev) rev_ins += op.kind == Kind::insert;
  REQUIRE(fwd_del == 2);
  REQUIRE(rev_ins == 2);

  // in general only the cost and the del-ins balance are direction-invariant
  // (ties let the two tracebacks pick different but equally minimal op mixes)
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_words(rng, 12);
    auto b = random_words(rng, 12);
    auto ab = levenshtein_align(a, b);
    auto ba = levenshtein_align(b, a);
    REQUIRE(alignment_cost(ab) == alignment_cost(ba));
    std::ptrdiff_t bal_ab = 0, bal_ba = 0;
    for (const auto& op : ab) {
      bal_ab += op.kind == Kind::del;
      bal_ab -= op.kind == Kind::insert;
    }
    for (const auto& op : ba) {
      bal_ba += op.kind == Kind::del;
      bal_ba -= op.kind == Kind::insert;
    }
    REQUIRE(bal_ab == static_cast<std::ptrdiff_t>(a.size()) -
                          static_cast<std::ptrdiff_t>(b.size()));
    REQUIRE(bal_ba == -bal_ab);
  }
}

TEST_CASE("alignment cost matches the textbook recurrence on random pairs", "[align]") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    auto ref = random_words(rng, 15);
    auto hyp = random_words(rng, 15);
    auto ops = levenshtein_align(ref, hyp);
    REQUIRE(alignment_cost(ops) == oracle::edit_distance(ref, hyp));
    check_replay(ops, ref, hyp);
  }
}

TEST_CASE("perfect recognition maps labels through unchanged", "[align]") {
  auto ref = extract_labels({"We", "met", ",", "then", "left", "."});
  std::vector<std::string> hyp = ref.words;
  hyp.pop_back();  // drop the sentinel; ASR streams have none
  LabeledStream ref_nosent = ref;
  ref_nosent.words.pop_back();
  ref_nosent.punct.pop_back();
  ref_nosent.cases.pop_back();
  ref_nosent.recompute_sentence_starts();

  auto ops = levenshtein_align(ref_nosent.words, hyp);
  auto mapped = map_labels_to_asr(ref_nosent, hyp, ops);
  REQUIRE(mapped.words == ref_nosent.words);
  REQUIRE(mapped.punct == ref_nosent.punct);
  REQUIRE(mapped.cases == ref_nosent.cases);
}

TEST_CASE("insertions receive null labels", "[align]") {
  LabeledStream ref;
  ref.push("good", Punct::none, Case::sentence);
  ref.push("day", Punct::none, Case::lower);
  ref.recompute_sentence_starts();
  std::vector<std::string> hyp = {"good", "uh", "day"};
  auto ops = levenshtein_align(ref.words, hyp);
  auto mapped = map_labels_to_asr(ref, hyp, ops);
  REQUIRE(mapped.words == hyp);
  REQUIRE(mapped.punct[1] == Punct::none);
  REQUIRE(mapped.cases[1] == Case::lower);
  REQUIRE(mapped.cases[0] == Case::sentence);
}

TEST_CASE("a deleted word's punctuation re-attaches to the next aligned token", "[align]") {
  // COMMA sits on "then", which the recognizer missed entirely
  LabeledStream ref;
  ref.push("we", Punct::none, Case::sentence);
  ref.push("met", Punct::none, Case::lower);
  ref.push("then", Punct::comma, Case::lower);
  ref.push("left", Punct::none, Case::lower);
  ref.recompute_sentence_starts();
  std::vector<std::string> hyp = {"we", "met", "left"};
  auto ops = levenshtein_align(ref.words, hyp);
  MapStats stats;
  auto mapped = map_labels_to_asr(ref, hyp, ops, &stats);
  REQUIRE(mapped.punct[2] == Punct::comma);  // landed on "left"
  REQUIRE(stats.reattached_puncts == 1);
  REQUIRE(stats.dropped_puncts == 0);
}

TEST_CASE("re-attachment drops the mark when the slot is already occupied", "[align]") {
  LabeledStream ref;
  ref.push("one", Punct::none, Case::lower);
  ref.push("two", Punct::comma, Case::lower);
  ref.push("three", Punct::period, Case::lower);
  ref.recompute_sentence_starts();
  std::vector<std::string> hyp = {"one", "three"};  // "two" deleted
  auto ops = levenshtein_align(ref.words, hyp);
  MapStats stats;
  auto mapped = map_labels_to_asr(ref, hyp, ops, &stats);
  REQUIRE(mapped.punct[1] == Punct::period);  // its own mark wins
  REQUIRE(stats.dropped_puncts == 1);
}

TEST_CASE("trailing deletions drop their punctuation with a count", "[align]") {
  LabeledStream ref;
  ref.push("stay", Punct::none, Case::lower);
  ref.push("here", Punct::comma, Case::lower);
  ref.recompute_sentence_starts();
  std::vector<std::string> hyp = {"stay"};
  auto ops = levenshtein_align(ref.words, hyp);
  MapStats stats;
  auto mapped = map_labels_to_asr(ref, hyp, ops, &stats);
  REQUIRE(mapped.size() == 1);
  REQUIRE(stats.dropped_puncts == 1);
}

TEST_CASE("mismatched alignments are rejected", "[align]") {
  LabeledStream ref;
  ref.push("a", Punct::none, Case::lower);
  ref.push("b", Punct::none, Case::lower);
  ref.recompute_sentence_starts();
  std::vector<std::string> hyp = {"a", "b"};
  auto ops = levenshtein_align(ref.words, hyp);
  ops.pop_back();
  REQUIRE_THROWS_AS(map_labels_to_asr(ref, hyp, ops), StateError);
}

TEST_CASE("restriction masks: all-match, single substitution, empty", "[align]") {
  std::vector<std::string> same = {"a", "b", "c"};
  auto [pm, cm] = eval_masks(levenshtein_align(same, same), 3);
  REQUIRE(pm == std::vector<std::uint8_t>{1, 1, 1});
  REQUIRE(cm == std::vector<std::uint8_t>{1, 1, 1});

  std::vector<std::string> ref = {"a", "b", "c", "d", "e"};
  std::vector<std::string> hyp = {"a", "b", "x", "d", "e"};
  auto [pm2, cm2] = eval_masks(levenshtein_align(ref, hyp), 5);
  REQUIRE(cm2 == std::vector<std::uint8_t>{1, 1, 0, 1, 1});
  REQUIRE(pm2 == std::vector<std::uint8_t>{1, 1, 0, 0, 1});

  auto [pm3, cm3] = eval_masks(levenshtein_align(ref, {}), 0);
  REQUIRE(pm3.empty());
  REQUIRE(cm3.empty());
}

TEST_CASE("self-mapping is metrically perfect", "[align]") {
  auto ref = extract_labels({"Fine", "work", ",", "really", ".", "Thanks", "."});
  LabeledStream nosent = ref;
  nosent.words.pop_back();
  nosent.punct.pop_back();
  nosent.cases.pop_back();
  nosent.recompute_sentence_starts();

  auto ops = levenshtein_align(nosent.words, nosent.words);
  auto mapped = map_labels_to_asr(nosent, nosent.words, ops);
  auto [pm, cm] = eval_masks(ops, nosent.words.size());

  std::vector<std::int32_t> gold_p, map_p, gold_c, map_c;
  for (std::size_t i = 0; i < nosent.size(); ++i) {
    gold_p.push_back(static_cast<std::int32_t>(nosent.punct[i]));
    map_p.push_back(static_cast<std::int32_t>(mapped.punct[i]));
    gold_c.push_back(static_cast<std::int32_t>(nosent.cases[i]));
    map_c.push_back(static_cast<std::int32_t>(mapped.cases[i]));
  }
  auto sp = ser(gold_p, map_p, pm, kPunctNullId);
  REQUIRE(sp.ser == 0.0);
  auto prf_rep = prf(confusion(gold_p, map_p, pm, kNumPunctLabels, kPunctNullId));
  REQUIRE(prf_rep.overall_micro.f1 == 1.0);
  auto sc = ser(gold_c, map_c, cm, kCaseNullId);
  REQUIRE(sc.ser == 0.0);
}

TEST_CASE("mask sidecars round-trip through files", "[align]") {
  testsup::TmpDir tmp("mask");
  std::vector<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>> masks;
  masks.push_back({{1, 0, 1}, {1, 1, 0}});
  masks.push_back({{0, 1}, {1, 0}});
  write_mask_sidecar(masks, tmp.file("m.mask"));
  auto loaded = read_mask_sidecar(tmp.file("m.mask"));
  REQUIRE(loaded == masks);
}
