#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <string>

#include "cslm/labels.hpp"
#include "support/tmpdir.hpp"

using namespace cslm;

namespace {

struct ToolResult {
  int exit_code = -1;
  std::string output;
};

ToolResult run_tool(const std::string& args, const testsup::TmpDir& tmp,
                    const std::string& log_name) {
  const std::string log = tmp.file(log_name);
  const std::string cmd = std::string(CSLM_TOOL_PATH) + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  ToolResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.output = testsup::read_file(log);
  return r;
}

// The case task converges last on the anecdote fixture, so selecting its best
// checkpoint yields a model that has memorized both tasks.
const char* kTrainConfig =
    "embed_dim = 16\n"
    "rnn_hidden = 24\n"
    "shared_hidden = 24\n"
    "rnn_kind = gru\n"
    "batch_size = 4\n"
    "max_epochs = 300\n"
    "patience = 300\n"
    "learning_rate = 0.005\n"
    "seed = 11\n"
    "chunk_min = 10\n"
    "chunk_max = 20\n"
    "selection_task = case\n";

std::string lowercase_words_of(const std::string& fixture_corpus) {
  // the raw-stream form of a corpus: lowercased words, punctuation removed
  std::istringstream ss(fixture_corpus);
  std::string tok, out;
  while (ss >> tok) {
    if (detail::is_punct_token(tok)) continue;
    if (!out.empty()) out += ' ';
    out += detail::ascii_lower(tok);
  }
  return out;
}

}  // namespace

TEST_CASE("--version prints toolkit and format versions", "[cli]") {
  testsup::TmpDir tmp("cli_version");
  auto r = run_tool("--version", tmp, "v.log");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("cslm") != std::string::npos);
  REQUIRE(r.output.find("CSLM1") != std::string::npos);
}

TEST_CASE("unknown flags and subcommands are rejected", "[cli]") {
  testsup::TmpDir tmp("cli_bad");
  REQUIRE(run_tool("frobnicate", tmp, "a.log").exit_code != 0);
  REQUIRE(run_tool("prepare --corpus x --out y --bogus-flag 1", tmp, "b.log").exit_code != 0);
}

TEST_CASE("missing inputs fail with a one-line diagnostic", "[cli]") {
  testsup::TmpDir tmp("cli_missing");
  auto r = run_tool("predict --model nowhere.cslm --input nowhere.txt --out " + tmp.file("o"),
                    tmp, "m.log");
  REQUIRE(r.exit_code == 1);
  REQUIRE(r.output.find("error:") != std::string::npos);
  // a single diagnostic line
  REQUIRE(std::count(r.output.begin(), r.output.end(), '\n') == 1);
}

TEST_CASE("the full pipeline memorizes the anecdote fixture", "[cli]") {
  testsup::TmpDir tmp("cli_pipeline");
  const std::string fixture = std::string(CSLM_FIXTURE_DIR) + "/anecdotes.txt";
  const auto t0 = std::chrono::steady_clock::now();

  // prepare
  auto prep = run_tool("prepare --corpus " + fixture + " --out " + tmp.file("gold") +
                           " --min-len 10 --max-len 20 --seed 11",
                       tmp, "prep.log");
  REQUIRE(prep.exit_code == 0);
  REQUIRE(prep.output.find("# resolved configuration") != std::string::npos);

  // train
  testsup::write_file(tmp.file("train.conf"), kTrainConfig);
  auto train = run_tool("train --config " + tmp.file("train.conf") + " --train " +
                            tmp.file("gold.tsv") + " --val " + tmp.file("gold.tsv") +
                            " --out-model " + tmp.file("model.cslm"),
                        tmp, "train.log");
  REQUIRE(train.exit_code == 0);
  REQUIRE(train.output.find("# resolved configuration") != std::string::npos);

  // predict on the raw lowercase word stream of the same corpus
  testsup::write_file(tmp.file("raw.txt"),
                      lowercase_words_of(testsup::read_file(fixture)) + "\n");
  auto pred = run_tool("predict --model " + tmp.file("model.cslm") + " --input " +
                           tmp.file("raw.txt") + " --out " + tmp.file("pred"),
                       tmp, "pred.log");
  REQUIRE(pred.exit_code == 0);

  // the memorized model reproduces the gold labels exactly
  REQUIRE(testsup::read_file(tmp.file("pred.tsv")) == testsup::read_file(tmp.file("gold.tsv")));

  // and the reconstructed text matches the original sentences
  std::istringstream corpus(testsup::read_file(fixture));
  std::string line, joined;
  while (std::getline(corpus, line)) {
    if (line.empty()) continue;
    if (!joined.empty()) joined += ' ';
    joined += line;
  }
  REQUIRE(testsup::read_file(tmp.file("pred.txt")) == joined + "\n");

  // evaluate the prediction against gold: perfect scores
  auto eval = run_tool("evaluate --gold " + tmp.file("gold.tsv") + " --pred " +
                           tmp.file("pred.tsv") + " --out " + tmp.file("report"),
                       tmp, "eval.log");
  REQUIRE(eval.exit_code == 0);
  const std::string kv = testsup::read_file(tmp.file("report.kv"));
  REQUIRE(kv.find("punct.OVERALL.f1 = 1\n") != std::string::npos);
  REQUIRE(kv.find("punct.OVERALL.ser = 0.0") != std::string::npos);
  REQUIRE(kv.find("case.OVERALL.f1 = 1\n") != std::string::npos);

  const auto elapsed = std::chrono::steady_clock::now() - t0;
  REQUIRE(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count() < 300);
}

TEST_CASE("the pipeline handles the 200-sentence fixture within its budget", "[cli]") {
  testsup::TmpDir tmp("cli_fixture200");
  const std::string fixture = std::string(CSLM_FIXTURE_DIR) + "/overfit_200.txt";
  const auto t0 = std::chrono::steady_clock::now();

  REQUIRE(run_tool("prepare --corpus " + fixture + " --out " + tmp.file("g") + " --seed 13", tmp,
                   "p.log")
              .exit_code == 0);
  testsup::write_file(tmp.file("train.conf"),
                      "embed_dim = 24\nrnn_hidden = 32\nshared_hidden = 32\nrnn_kind = gru\n"
                      "batch_size = 16\nmax_epochs = 60\npatience = 60\n"
                      "learning_rate = 0.005\nseed = 13\n");
  REQUIRE(run_tool("train --config " + tmp.file("train.conf") + " --train " + tmp.file("g.tsv") +
                       " --val " + tmp.file("g.tsv") + " --out-model " + tmp.file("m.cslm"),
                   tmp, "t.log")
              .exit_code == 0);
  testsup::write_file(tmp.file("raw.txt"),
                      lowercase_words_of(testsup::read_file(fixture)) + "\n");
  REQUIRE(run_tool("predict --model " + tmp.file("m.cslm") + " --input " + tmp.file("raw.txt") +
                       " --out " + tmp.file("pred"),
                   tmp, "pr.log")
              .exit_code == 0);
  auto eval = run_tool("evaluate --gold " + tmp.file("g.tsv") + " --pred " + tmp.file("pred.tsv") +
                           " --out " + tmp.file("rep"),
                       tmp, "e.log");
  REQUIRE(eval.exit_code == 0);
  REQUIRE(eval.output.find("OVERALL") != std::string::npos);
  REQUIRE(!testsup::read_file(tmp.file("rep.kv")).empty());

  // blank-line-separated documents predict as separate streams
  testsup::write_file(tmp.file("raw2.txt"), "today people work here\n\nwhy was the room quiet\n");
  REQUIRE(run_tool("predict --model " + tmp.file("m.cslm") + " --input " + tmp.file("raw2.txt") +
                       " --out " + tmp.file("two"),
                   tmp, "two.log")
              .exit_code == 0);
  REQUIRE(read_labeled_tsv(tmp.file("two.tsv")).size() == 2);
  const std::string two_text = testsup::read_file(tmp.file("two.txt"));
  REQUIRE(std::count(two_text.begin(), two_text.end(), '\n') == 2);

  const auto elapsed = std::chrono::steady_clock::now() - t0;
  REQUIRE(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count() < 300);
}

TEST_CASE("evaluating gold against itself is perfect", "[cli]") {
  testsup::TmpDir tmp("cli_selfeval");
  const std::string fixture = std::string(CSLM_FIXTURE_DIR) + "/anecdotes.txt";
  auto prep = run_tool("prepare --corpus " + fixture + " --out " + tmp.file("g"), tmp, "p.log");
  REQUIRE(prep.exit_code == 0);
  auto eval = run_tool("evaluate --gold " + tmp.file("g.tsv") + " --pred " + tmp.file("g.tsv") +
                           " --out " + tmp.file("r"),
                       tmp, "e.log");
  REQUIRE(eval.exit_code == 0);
  const std::string kv = testsup::read_file(tmp.file("r.kv"));
  REQUIRE(kv.find("punct.OVERALL.ser = 0.0") != std::string::npos);
  REQUIRE(kv.find("case.OVERALL.ser = 0.0") != std::string::npos);

  // the overall aggregation is switchable; macro is the non-default
  auto macro = run_tool("evaluate --gold " + tmp.file("g.tsv") + " --pred " + tmp.file("g.tsv") +
                            " --out " + tmp.file("r2") + " --overall macro",
                        tmp, "e2.log");
  REQUIRE(macro.exit_code == 0);
  REQUIRE(testsup::read_file(tmp.file("r2.txt")).find("macro average") != std::string::npos);
  REQUIRE(run_tool("evaluate --gold " + tmp.file("g.tsv") + " --pred " + tmp.file("g.tsv") +
                       " --out " + tmp.file("r3") + " --overall bogus",
                   tmp, "e3.log")
              .exit_code != 0);
}

TEST_CASE("subcommands are byte-deterministic across reruns", "[cli]") {
  testsup::TmpDir tmp("cli_determinism");
  const std::string fixture = std::string(CSLM_FIXTURE_DIR) + "/anecdotes.txt";
  testsup::write_file(tmp.file("train.conf"), kTrainConfig);

  for (int round = 0; round < 2; ++round) {
    const std::string tag = std::to_string(round);
    REQUIRE(run_tool("prepare --corpus " + fixture + " --out " + tmp.file("g" + tag) +
                         " --min-len 10 --max-len 20 --seed 11",
                     tmp, "p" + tag + ".log")
                .exit_code == 0);
    REQUIRE(run_tool("train --config " + tmp.file("train.conf") + " --train " +
                         tmp.file("g" + tag + ".tsv") + " --val " + tmp.file("g" + tag + ".tsv") +
                         " --out-model " + tmp.file("m" + tag + ".cslm"),
                     tmp, "t" + tag + ".log")
                .exit_code == 0);
  }
  REQUIRE(testsup::read_file(tmp.file("g0.tsv")) == testsup::read_file(tmp.file("g1.tsv")));
  REQUIRE(testsup::read_file(tmp.file("g0.vocab")) == testsup::read_file(tmp.file("g1.vocab")));
  REQUIRE(testsup::read_file(tmp.file("g0.chunks")) == testsup::read_file(tmp.file("g1.chunks")));
  REQUIRE(testsup::read_file(tmp.file("m0.cslm")) == testsup::read_file(tmp.file("m1.cslm")));
  REQUIRE(testsup::read_file(tmp.file("m0.cslm.history.csv")) ==
          testsup::read_file(tmp.file("m1.cslm.history.csv")));
}

TEST_CASE("align-map reproduces the hand-worked fixture", "[cli]") {
  testsup::TmpDir tmp("cli_alignmap");
  const std::string dir = CSLM_FIXTURE_DIR;
  auto r = run_tool("align-map --ref " + dir + "/asr_ref.tsv --hyp " + dir +
                        "/asr_hyp.txt --out " + tmp.file("mapped"),
                    tmp, "am.log");
  REQUIRE(r.exit_code == 0);
  REQUIRE(testsup::read_file(tmp.file("mapped.tsv")) ==
          testsup::read_file(dir + "/asr_expected_mapped.tsv"));
  REQUIRE(testsup::read_file(tmp.file("mapped.mask")) ==
          testsup::read_file(dir + "/asr_expected.mask"));
}

TEST_CASE("restricted evaluation flows from align-map masks into evaluate", "[cli]") {
  testsup::TmpDir tmp("cli_restricted");
  const std::string dir = CSLM_FIXTURE_DIR;
  REQUIRE(run_tool("align-map --ref " + dir + "/asr_ref.tsv --hyp " + dir +
                       "/asr_hyp.txt --out " + tmp.file("mapped"),
                   tmp, "am.log")
              .exit_code == 0);
  // comparing the mapped labels against themselves under the restriction
  // masks must be perfect
  auto eval = run_tool("evaluate --gold " + tmp.file("mapped.tsv") + " --pred " +
                           tmp.file("mapped.tsv") + " --mask " + tmp.file("mapped.mask") +
                           " --out " + tmp.file("rep"),
                       tmp, "e.log");
  REQUIRE(eval.exit_code == 0);
  const std::string kv = testsup::read_file(tmp.file("rep.kv"));
  REQUIRE(kv.find("punct.OVERALL.ser = 0.0") != std::string::npos);
  REQUIRE(kv.find("punct.OVERALL.f1 = 1\n") != std::string::npos);
  REQUIRE(kv.find("case.OVERALL.ser = 0.0") != std::string::npos);

  // a wrong prediction at a masked-out position changes nothing: flip the
  // substituted token's labels (position 5 is masked out of both tasks)
  auto streams = read_labeled_tsv(tmp.file("mapped.tsv"));
  streams[0].punct[5] = Punct::qmark;
  streams[0].cases[5] = Case::upper;
  write_labeled_tsv(streams, tmp.file("pred2.tsv"));
  auto eval2 = run_tool("evaluate --gold " + tmp.file("mapped.tsv") + " --pred " +
                            tmp.file("pred2.tsv") + " --mask " + tmp.file("mapped.mask") +
                            " --out " + tmp.file("rep2"),
                        tmp, "e2.log");
  REQUIRE(eval2.exit_code == 0);
  const std::string kv2 = testsup::read_file(tmp.file("rep2.kv"));
  REQUIRE(kv2.find("punct.OVERALL.ser = 0.0") != std::string::npos);
  REQUIRE(kv2.find("case.OVERALL.ser = 0.0") != std::string::npos);

  // without the mask the same wrong labels do count
  auto eval3 = run_tool("evaluate --gold " + tmp.file("mapped.tsv") + " --pred " +
                            tmp.file("pred2.tsv") + " --out " + tmp.file("rep3"),
                        tmp, "e3.log");
  REQUIRE(eval3.exit_code == 0);
  const std::string kv3 = testsup::read_file(tmp.file("rep3.kv"));
  REQUIRE(kv3.find("punct.OVERALL.ser = 0.0") == std::string::npos);
}

TEST_CASE("grid runs produce leaderboards and per-run artifacts", "[cli]") {
  testsup::TmpDir tmp("cli_grid");
  const std::string fixture = std::string(CSLM_FIXTURE_DIR) + "/anecdotes.txt";
  REQUIRE(run_tool("prepare --corpus " + fixture + " --out " + tmp.file("g"), tmp, "p.log")
              .exit_code == 0);
  testsup::write_file(tmp.file("base.conf"),
                      "embed_dim = 8\nrnn_hidden = 8\nshared_hidden = 8\nbatch_size = 4\n"
                      "max_epochs = 2\npatience = 2\nchunk_min = 10\nchunk_max = 20\nseed = 3\n");
  testsup::write_file(tmp.file("grid.conf"), "rnn_kind = simple,gru\n");
  auto r = run_tool("grid --config " + tmp.file("base.conf") + " --grid " + tmp.file("grid.conf") +
                        " --train " + tmp.file("g.tsv") + " --val " + tmp.file("g.tsv") +
                        " --out-dir " + tmp.file("sweep"),
                    tmp, "grid.log");
  REQUIRE(r.exit_code == 0);
  const std::string runs = testsup::read_file(tmp.file("sweep/runs.tsv"));
  REQUIRE(runs.find("rnn_kind=simple") != std::string::npos);
  REQUIRE(runs.find("rnn_kind=gru") != std::string::npos);
  REQUIRE(testsup::read_file(tmp.file("sweep/leaderboard_punct.tsv")).find("rank") == 0);
  REQUIRE(testsup::read_file(tmp.file("sweep/leaderboard_case.tsv")).find("rank") == 0);
  REQUIRE(!testsup::read_file(tmp.file("sweep/run_0/history.csv")).empty());
  REQUIRE(!testsup::read_file(tmp.file("sweep/run_1/model_punct.cslm")).empty());
}
