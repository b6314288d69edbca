// Command-line front end for the punctuation + capitalization toolkit:
//   prepare   corpus -> labeled TSV, vocabulary, chunk manifest
//   train     labeled TSVs -> model file + history CSV
//   grid      exhaustive hyperparameter sweep -> leaderboards + per-run runs
//   predict   raw word stream -> labeled TSV + reconstructed text
//   evaluate  gold/predicted TSVs -> metric reports
//   align-map reference TSV + ASR words -> mapped labels + evaluation masks

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cslm/align.hpp"
#include "cslm/config.hpp"
#include "cslm/dataset.hpp"
#include "cslm/errors.hpp"
#include "cslm/labels.hpp"
#include "cslm/metrics.hpp"
#include "cslm/model.hpp"
#include "cslm/model_io.hpp"
#include "cslm/train.hpp"
#include "cslm/version.hpp"
#include "cslm/vocab.hpp"

namespace {

using namespace cslm;

// Splits raw prediction/ASR input into token streams, dropping stray
// punctuation tokens and lowercasing anything with stray capitals.
struct RawInput {
  std::vector<std::vector<std::string>> docs;
  std::size_t stripped_marks = 0;
  std::size_t lowercased = 0;
};

RawInput read_raw_words(const std::string& path) {
  RawInput out;
  for (auto& doc : read_corpus_tokens(path)) {
    std::vector<std::string> words;
    for (auto& tok : doc) {
      if (detail::is_punct_token(tok)) {
        ++out.stripped_marks;
        continue;
      }
      std::string low = detail::ascii_lower(tok);
      if (low != tok) ++out.lowercased;
      words.push_back(std::move(low));
    }
    if (!words.empty()) out.docs.push_back(std::move(words));
  }
  return out;
}

std::vector<Chunk> chunk_streams(const std::vector<LabeledStream>& streams, std::size_t min_len,
                                 std::size_t max_len, ChunkPolicy policy, std::uint64_t seed,
                                 ChunkStats* stats = nullptr) {
  Rng rng = Rng(seed).fork(3);
  std::vector<Chunk> chunks;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    auto c = chunk_stream(streams[s], min_len, max_len, rng, policy, stats, s);
    chunks.insert(chunks.end(), c.begin(), c.end());
  }
  return chunks;
}

int cmd_prepare(const std::string& corpus, const std::string& out, std::size_t min_count,
                std::size_t min_len, std::size_t max_len, const std::string& policy_name,
                std::uint64_t seed) {
  const ChunkPolicy policy = chunk_policy_from_name(policy_name);
  std::cout << "# resolved configuration\n"
            << "corpus = " << corpus << "\nout = " << out << "\nmin_count = " << min_count
            << "\nmin_len = " << min_len << "\nmax_len = " << max_len
            << "\nchunk_policy = " << policy_name << "\nseed = " << seed << "\n";

  ExtractStats total_stats;
  std::vector<LabeledStream> streams;
  for (const auto& doc : read_corpus_tokens(corpus)) {
    ExtractStats stats;
    streams.push_back(extract_labels(doc, &stats));
    total_stats.dropped_marks += stats.dropped_marks;
    total_stats.collapsed_marks += stats.collapsed_marks;
  }
  if (streams.empty()) throw DataError(corpus + ": no tokens found");

  write_labeled_tsv(streams, out + ".tsv");
  Vocabulary vocab = Vocabulary::build(streams, min_count);
  vocab.save(out + ".vocab");

  ChunkStats chunk_stats;
  const auto chunks = chunk_streams(streams, min_len, max_len, policy, seed, &chunk_stats);
  std::ofstream mf(out + ".chunks", std::ios::binary);
  if (!mf) throw IoError("cannot write " + out + ".chunks");
  mf << "stream\tbegin\tend\n";
  for (const auto& c : chunks) mf << c.stream << '\t' << c.begin << '\t' << c.end << "\n";

  std::size_t tokens = 0;
  for (const auto& s : streams) tokens += s.size();
  std::cout << "streams: " << streams.size() << ", tokens: " << tokens
            << ", vocab: " << vocab.size() << ", chunks: " << chunks.size() << "\n";
  std::cout << "dropped marks: " << total_stats.dropped_marks
            << ", collapsed mark pairs: " << total_stats.collapsed_marks
            << ", oversized sentences: " << chunk_stats.oversized_sentences << "\n";
  std::cout << "wrote " << out << ".tsv, " << out << ".vocab, " << out << ".chunks\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& train_path,
              const std::string& val_path, const std::string& out_model) {
  TrainConfig cfg = train_config_from_entries(parse_kv_file(config_path));
  validate_toolkit_tasks(cfg.model);

  const auto train_streams = read_labeled_tsv(train_path);
  const auto val_streams = read_labeled_tsv(val_path);
  if (train_streams.empty()) throw DataError(train_path + ": no streams");
  if (val_streams.empty()) throw DataError(val_path + ": no streams");

  Vocabulary vocab = Vocabulary::build(train_streams, cfg.min_count);
  cfg.model.vocab_size = vocab.size();
  cfg.validate();
  print_resolved_config(cfg, vocab.size(), std::cout);

  const auto chunks = chunk_streams(train_streams, cfg.chunk_min, cfg.chunk_max, cfg.chunk_policy,
                                    cfg.seed);
  auto result = train_loop<float>(cfg, train_streams, chunks, val_streams, vocab);
  if (result.embedding_coverage >= 0.0) {
    std::cout << "embedding coverage: " << detail::fmt_double(result.embedding_coverage) << " ("
              << result.embedding_found << " of " << vocab.size() - 3 << " vocab words)\n";
  }

  const std::size_t sel = cfg.selection_index();
  const auto& best = result.state.best[sel];
  if (best.params.size() == 0) {
    throw StateError(result.state.diverged
                         ? "training diverged before any usable checkpoint"
                         : "validation never produced a finite SER; no checkpoint to save");
  }
  std::map<std::string, std::string> extra;
  extra["vocab"] = vocab.to_blob();
  extra["selected_task"] = cfg.selection();
  extra["selected_epoch"] = std::to_string(best.epoch);
  extra["selected_val_ser"] = detail::fmt_double(best.ser);
  save_model(out_model, cfg.model, best.params, extra);

  std::vector<std::string> task_names;
  for (const auto& t : cfg.model.tasks) task_names.push_back(t.name);
  write_history_csv(out_model + ".history.csv", task_names, result.history);

  std::cout << "epochs: " << result.history.size() << (result.state.diverged ? " (diverged)" : "")
            << "\n";
  for (std::size_t k = 0; k < task_names.size(); ++k) {
    std::cout << "best val SER [" << task_names[k] << "]: "
              << detail::fmt_double(result.state.best[k].ser) << " @ epoch "
              << result.state.best[k].epoch << "\n";
  }
  std::cout << "wrote " << out_model << ", " << out_model << ".history.csv\n";
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& grid_path,
             const std::string& train_path, const std::string& val_path,
             const std::string& out_dir) {
  const auto base_entries = parse_kv_file(config_path);
  const GridSpec grid = parse_grid_file(grid_path);
  const auto train_streams = read_labeled_tsv(train_path);
  const auto val_streams = read_labeled_tsv(val_path);
  std::filesystem::create_directories(out_dir);

  std::cout << "# grid over " << grid.num_points() << " points\n";
  for (const auto& [key, vals] : grid.knobs) {
    std::cout << key << " = ";
    for (std::size_t i = 0; i < vals.size(); ++i) std::cout << (i ? "," : "") << vals[i];
    std::cout << "\n";
  }

  auto on_run = [&](std::size_t run_id, const TrainConfig& cfg,
                    const TrainResult<float>& result) {
    const std::string run_dir = out_dir + "/run_" + std::to_string(run_id);
    std::filesystem::create_directories(run_dir);
    std::ofstream rc(run_dir + "/config.resolved", std::ios::binary);
    print_resolved_config(cfg, cfg.model.vocab_size, rc);
    std::vector<std::string> task_names;
    for (const auto& t : cfg.model.tasks) task_names.push_back(t.name);
    write_history_csv(run_dir + "/history.csv", task_names, result.history);
    Vocabulary vocab = Vocabulary::build(train_streams, cfg.min_count);
    for (std::size_t k = 0; k < task_names.size(); ++k) {
      if (!result.state.best[k].params.size()) continue;
      std::map<std::string, std::string> extra;
      extra["vocab"] = vocab.to_blob();
      extra["selected_task"] = task_names[k];
      extra["selected_epoch"] = std::to_string(result.state.best[k].epoch);
      extra["selected_val_ser"] = detail::fmt_double(result.state.best[k].ser);
      save_model(run_dir + "/model_" + task_names[k] + ".cslm", cfg.model,
                 result.state.best[k].params, extra);
    }
  };

  GridOutcome outcome =
      grid_run<float>(base_entries, grid, train_streams, val_streams, on_run);

  std::ofstream runs(out_dir + "/runs.tsv", std::ios::binary);
  if (!runs) throw IoError("cannot write " + out_dir + "/runs.tsv");
  runs << "run";
  for (const auto& t : outcome.task_names) runs << "\tval_ser_" << t;
  runs << "\tepochs\toverrides\n";
  for (const auto& run : outcome.runs) {
    runs << run.run_id;
    for (double s : run.best_ser) {
      runs << '\t' << (std::isfinite(s) ? detail::fmt_double(s) : std::string("inf"));
    }
    runs << '\t' << run.epochs_ran << '\t';
    for (std::size_t i = 0; i < run.overrides.size(); ++i) {
      runs << (i ? " " : "") << run.overrides[i].first << "=" << run.overrides[i].second;
    }
    runs << "\n";
  }

  for (std::size_t k = 0; k < outcome.task_names.size(); ++k) {
    const std::string path = out_dir + "/leaderboard_" + outcome.task_names[k] + ".tsv";
    std::ofstream lb(path, std::ios::binary);
    if (!lb) throw IoError("cannot write " + path);
    lb << "rank\trun\tval_ser\tbest_epoch\toverrides\n";
    std::size_t rank = 1;
    for (std::size_t idx : outcome.leaderboard(k)) {
      const auto& run = outcome.runs[idx];
      lb << rank++ << '\t' << run.run_id << '\t'
         << (std::isfinite(run.best_ser[k]) ? detail::fmt_double(run.best_ser[k])
                                            : std::string("inf"))
         << '\t' << run.best_epoch[k] << '\t';
      for (std::size_t i = 0; i < run.overrides.size(); ++i) {
        lb << (i ? " " : "") << run.overrides[i].first << "=" << run.overrides[i].second;
      }
      lb << "\n";
    }
  }
  std::cout << "ran " << outcome.runs.size() << " configurations; leaderboards in " << out_dir
            << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input_path,
                const std::string& out) {
  LoadedModel loaded = load_model(model_path);
  auto vb = loaded.extra_kv.find("vocab");
  if (vb == loaded.extra_kv.end()) {
    throw DataError(model_path + ": model file carries no vocabulary");
  }
  Vocabulary vocab = Vocabulary::from_blob(vb->second);

  std::cout << "# resolved configuration\nmodel = " << model_path << "\ninput = " << input_path
            << "\nout = " << out << "\nvocab_size = " << vocab.size() << "\n";

  RawInput raw = read_raw_words(input_path);
  if (raw.docs.empty()) throw DataError(input_path + ": no words found");
  if (raw.stripped_marks || raw.lowercased) {
    std::cout << "warning: stripped " << raw.stripped_marks << " punctuation tokens, lowercased "
              << raw.lowercased << " words in input\n";
  }

  // Single-task models predict only their own head; the other task stays null.
  std::ptrdiff_t punct_idx = -1, case_idx = -1;
  for (std::size_t k = 0; k < loaded.config.tasks.size(); ++k) {
    if (loaded.config.tasks[k].name == "punct") punct_idx = static_cast<std::ptrdiff_t>(k);
    if (loaded.config.tasks[k].name == "case") case_idx = static_cast<std::ptrdiff_t>(k);
  }

  std::vector<LabeledStream> out_streams;
  std::string text;
  for (const auto& words : raw.docs) {
    std::vector<std::int32_t> ids;
    ids.reserve(words.size() + 1);
    for (const auto& w : words) ids.push_back(vocab.id(w));
    ids.push_back(Vocabulary::kEos);

    auto preds = predict(ids, loaded.params, loaded.config);
    LabeledStream s;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const Punct p = punct_idx < 0
                          ? Punct::none
                          : static_cast<Punct>(preds[static_cast<std::size_t>(punct_idx)][i]);
      const Case c = case_idx < 0
                         ? Case::lower
                         : static_cast<Case>(preds[static_cast<std::size_t>(case_idx)][i]);
      s.push(words[i], p, c);
    }
    // The sentinel carries any stream-final punctuation; its case is fixed.
    const Punct final_p =
        punct_idx < 0 ? Punct::none
                      : static_cast<Punct>(preds[static_cast<std::size_t>(punct_idx)][words.size()]);
    s.push(kEosWord, final_p, Case::lower);
    s.recompute_sentence_starts();
    if (!text.empty()) text += '\n';
    text += reconstruct(s);
    out_streams.push_back(std::move(s));
  }

  write_labeled_tsv(out_streams, out + ".tsv");
  std::ofstream tf(out + ".txt", std::ios::binary);
  if (!tf) throw IoError("cannot write " + out + ".txt");
  tf << text << "\n";
  std::cout << "wrote " << out << ".tsv, " << out << ".txt\n";
  return 0;
}

int cmd_evaluate(const std::string& gold_path, const std::string& pred_path,
                 const std::string& mask_path, const std::string& out,
                 const std::string& overall) {
  if (overall != "micro" && overall != "macro") {
    throw ConfigError("--overall must be micro or macro, got '" + overall + "'");
  }
  const bool macro = overall == "macro";
  const auto gold = read_labeled_tsv(gold_path);
  const auto pred = read_labeled_tsv(pred_path);
  if (gold.size() != pred.size()) {
    throw DataError("stream count mismatch: " + gold_path + " has " + std::to_string(gold.size()) +
                    ", " + pred_path + " has " + std::to_string(pred.size()));
  }
  std::vector<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>> masks;
  if (!mask_path.empty()) {
    masks = read_mask_sidecar(mask_path);
    if (masks.size() != gold.size()) {
      throw DataError(mask_path + ": " + std::to_string(masks.size()) + " mask streams for " +
                      std::to_string(gold.size()) + " gold streams");
    }
  }

  std::cout << "# resolved configuration\ngold = " << gold_path << "\npred = " << pred_path
            << "\nmask = " << (mask_path.empty() ? "(none)" : mask_path) << "\nout = " << out
            << "\noverall = " << overall << "\n";

  std::vector<std::int32_t> punct_gold, punct_pred, case_gold, case_pred;
  std::vector<std::uint8_t> punct_mask, case_mask;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw DataError("stream " + std::to_string(s) + " length mismatch: gold " +
                      std::to_string(gold[s].size()) + " vs pred " +
                      std::to_string(pred[s].size()));
    }
    if (!masks.empty() && masks[s].first.size() != gold[s].size()) {
      throw DataError("stream " + std::to_string(s) + " mask length " +
                      std::to_string(masks[s].first.size()) + " vs " +
                      std::to_string(gold[s].size()) + " tokens");
    }
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      punct_gold.push_back(static_cast<std::int32_t>(gold[s].punct[i]));
      punct_pred.push_back(static_cast<std::int32_t>(pred[s].punct[i]));
      case_gold.push_back(static_cast<std::int32_t>(gold[s].cases[i]));
      case_pred.push_back(static_cast<std::int32_t>(pred[s].cases[i]));
      const bool sentinel = gold[s].words[i] == kEosWord;
      punct_mask.push_back(masks.empty() ? 1 : masks[s].first[i]);
      case_mask.push_back((masks.empty() ? 1 : masks[s].second[i]) && !sentinel);
    }
  }

  std::vector<TaskReport> reports;
  reports.push_back(evaluate_task(
      "punct", {"NO-PUNCT", "COMMA", "PERIOD", "Q-MARK"}, kPunctNullId, punct_gold, punct_pred,
      punct_mask));
  reports.push_back(evaluate_task(
      "case", {"LOWERCASE", "UPPERCASE", "SENTENCE-CASE", "SINGLE-CASE"}, kCaseNullId, case_gold,
      case_pred, case_mask));

  render_report(reports, std::cout, macro);
  std::ofstream tf(out + ".txt", std::ios::binary);
  if (!tf) throw IoError("cannot write " + out + ".txt");
  render_report(reports, tf, macro);
  write_report_kv(reports, out + ".kv");
  std::cout << "wrote " << out << ".txt, " << out << ".kv\n";
  return 0;
}

int cmd_align_map(const std::string& ref_path, const std::string& hyp_path,
                  const std::string& out) {
  const auto refs = read_labeled_tsv(ref_path);
  RawInput raw = read_raw_words(hyp_path);
  if (refs.size() != raw.docs.size()) {
    throw DataError("stream count mismatch: " + ref_path + " has " + std::to_string(refs.size()) +
                    ", " + hyp_path + " has " + std::to_string(raw.docs.size()));
  }
  std::cout << "# resolved configuration\nref = " << ref_path << "\nhyp = " << hyp_path
            << "\nout = " << out << "\n";
  if (raw.stripped_marks || raw.lowercased) {
    std::cout << "warning: stripped " << raw.stripped_marks << " punctuation tokens, lowercased "
              << raw.lowercased << " words in hypothesis\n";
  }

  std::vector<LabeledStream> mapped_streams;
  std::vector<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>> all_masks;
  MapStats totals;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    MappedStream mapped = map_stream_to_asr(refs[s], raw.docs[s]);
    totals.reattached_puncts += mapped.stats.reattached_puncts;
    totals.dropped_puncts += mapped.stats.dropped_puncts;
    mapped_streams.push_back(std::move(mapped.stream));
    all_masks.emplace_back(std::move(mapped.punct_mask), std::move(mapped.case_mask));
  }

  write_labeled_tsv(mapped_streams, out + ".tsv");
  write_mask_sidecar(all_masks, out + ".mask");
  std::cout << "re-attached puncts: " << totals.reattached_puncts
            << ", dropped puncts: " << totals.dropped_puncts << "\n";
  std::cout << "wrote " << out << ".tsv, " << out << ".mask\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint punctuation and capitalization restoration for word streams"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("cslm ") + cslm::kToolkitVersion +
                                        " (model format " + cslm::kModelFormatVersion + ")");

  std::string corpus, out, config_path, train_path, val_path, out_model, grid_path, out_dir;
  std::string model_path, input_path, gold_path, pred_path, mask_path, ref_path, hyp_path;
  std::size_t min_count = 1, min_len = 40, max_len = 70;
  std::uint64_t seed = 1;
  std::string chunk_policy = "overlap";
  std::string overall = "micro";

  auto* prepare = app.add_subcommand("prepare", "corpus -> labeled TSV + vocab + chunk manifest");
  prepare->add_option("--corpus", corpus, "input corpus file")->required();
  prepare->add_option("--out", out, "output path prefix")->required();
  prepare->add_option("--min-count", min_count, "vocabulary count threshold");
  prepare->add_option("--min-len", min_len, "minimum chunk length");
  prepare->add_option("--max-len", max_len, "maximum chunk length");
  prepare->add_option("--chunk-policy", chunk_policy, "overlap|truncate");
  prepare->add_option("--seed", seed, "chunking seed");

  auto* train = app.add_subcommand("train", "train a model from labeled TSVs");
  train->add_option("--config", config_path, "key = value config file")->required();
  train->add_option("--train", train_path, "training TSV")->required();
  train->add_option("--val", val_path, "validation TSV")->required();
  train->add_option("--out-model", out_model, "output model file")->required();

  auto* grid = app.add_subcommand("grid", "exhaustive hyperparameter sweep");
  grid->add_option("--config", config_path, "base config file")->required();
  grid->add_option("--grid", grid_path, "grid file (comma-separated values)")->required();
  grid->add_option("--train", train_path, "training TSV")->required();
  grid->add_option("--val", val_path, "validation TSV")->required();
  grid->add_option("--out-dir", out_dir, "output directory")->required();

  auto* predict = app.add_subcommand("predict", "label a raw lowercase word stream");
  predict->add_option("--model", model_path, "model file")->required();
  predict->add_option("--input", input_path, "raw word stream")->required();
  predict->add_option("--out", out, "output path prefix")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
  evaluate->add_option("--gold", gold_path, "gold TSV")->required();
  evaluate->add_option("--pred", pred_path, "predicted TSV")->required();
  evaluate->add_option("--mask", mask_path, "mask sidecar from align-map");
  evaluate->add_option("--out", out, "output path prefix")->required();
  evaluate->add_option("--overall", overall, "overall aggregation: micro|macro");

  auto* align_map = app.add_subcommand("align-map", "map reference labels onto ASR words");
  align_map->add_option("--ref", ref_path, "reference TSV")->required();
  align_map->add_option("--hyp", hyp_path, "hypothesis word stream")->required();
  align_map->add_option("--out", out, "output path prefix")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      return cmd_prepare(corpus, out, min_count, min_len, max_len, chunk_policy, seed);
    }
    if (train->parsed()) return cmd_train(config_path, train_path, val_path, out_model);
    if (grid->parsed()) return cmd_grid(config_path, grid_path, train_path, val_path, out_dir);
    if (predict->parsed()) return cmd_predict(model_path, input_path, out);
    if (evaluate->parsed()) return cmd_evaluate(gold_path, pred_path, mask_path, out, overall);
    if (align_map->parsed()) return cmd_align_map(ref_path, hyp_path, out);
  } catch (const cslm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
