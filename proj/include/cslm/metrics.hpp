#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cslm/errors.hpp"

namespace cslm {

// Gold x predicted counts over one task's label space, restricted to masked-in
// positions.
struct ConfusionTable {
  std::size_t num_classes = 0;
  std::int32_t null_id = 0;
  std::vector<std::size_t> counts;  // gold * num_classes + pred

  std::size_t at(std::size_t gold, std::size_t pred) const {
    return counts[gold * num_classes + pred];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline ConfusionTable confusion(const std::vector<std::int32_t>& gold,
                                const std::vector<std::int32_t>& pred,
                                const std::vector<std::uint8_t>& mask, std::size_t num_classes,
                                std::int32_t null_id) {
  if (gold.size() != pred.size() || gold.size() != mask.size()) {
    throw DataError("confusion: lengths differ (gold " + std::to_string(gold.size()) + ", pred " +
                    std::to_string(pred.size()) + ", mask " + std::to_string(mask.size()) + ")");
  }
  ConfusionTable t;
  t.num_classes = num_classes;
  t.null_id = null_id;
  t.counts.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!mask[i]) continue;
    t.counts[static_cast<std::size_t>(gold[i]) * num_classes + static_cast<std::size_t>(pred[i])]++;
  }
  return t;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf r;
  r.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

struct PrfReport {
  std::vector<Prf> per_class;  // indexed by class id; null class entry unused in overall
  Prf overall_micro;           // pooled TP/FP/FN over non-null classes
  Prf overall_macro;           // mean of per-class values over non-null classes
};

inline PrfReport prf(const ConfusionTable& t) {
  PrfReport rep;
  rep.per_class.resize(t.num_classes);
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double p_sum = 0, r_sum = 0, f_sum = 0;
  std::size_t n_nonnull = 0;
  for (std::size_t c = 0; c < t.num_classes; ++c) {
    std::size_t tp = t.at(c, c), fp = 0, fn = 0;
    for (std::size_t o = 0; o < t.num_classes; ++o) {
      if (o == c) continue;
      fp += t.at(o, c);
      fn += t.at(c, o);
    }
    rep.per_class[c] = prf_from_counts(tp, fp, fn);
    if (static_cast<std::int32_t>(c) != t.null_id) {
      tp_all += tp;
      fp_all += fp;
      fn_all += fn;
      p_sum += rep.per_class[c].precision;
      r_sum += rep.per_class[c].recall;
      f_sum += rep.per_class[c].f1;
      ++n_nonnull;
    }
  }
  // A confusion between two non-null classes counts once on the FP side of the
  // predicted class and once on the FN side of the gold class.
  rep.overall_micro = prf_from_counts(tp_all, fp_all, fn_all);
  if (n_nonnull) {
    rep.overall_macro.precision = p_sum / static_cast<double>(n_nonnull);
    rep.overall_macro.recall = r_sum / static_cast<double>(n_nonnull);
    rep.overall_macro.f1 = f_sum / static_cast<double>(n_nonnull);
  }
  return rep;
}

// Slot Error Rate: slots are gold non-null positions. A masked-in position
// contributes a substitution (both non-null, different), a deletion (gold
// non-null, predicted null) or an insertion (gold null, predicted non-null).
// SER = (S + D + I) / slots and can exceed 1. Zero slots with zero errors is
// 0; zero slots with errors is undefined (reported as infinity).
struct SerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t slots = 0;
  double ser = 0.0;
  bool defined = true;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

inline SerBreakdown ser(const std::vector<std::int32_t>& gold,
                        const std::vector<std::int32_t>& pred,
                        const std::vector<std::uint8_t>& mask, std::int32_t null_id) {
  if (gold.size() != pred.size() || gold.size() != mask.size()) {
    throw DataError("ser: lengths differ (gold " + std::to_string(gold.size()) + ", pred " +
                    std::to_string(pred.size()) + ", mask " + std::to_string(mask.size()) + ")");
  }
  SerBreakdown r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!mask[i]) continue;
    const bool g = gold[i] != null_id;
    const bool p = pred[i] != null_id;
    if (g) ++r.slots;
    if (g && p && gold[i] != pred[i]) ++r.substitutions;
    else if (g && !p) ++r.deletions;
    else if (!g && p) ++r.insertions;
  }
  if (r.slots) {
    r.ser = static_cast<double>(r.errors()) / static_cast<double>(r.slots);
  } else if (r.errors()) {
    r.ser = std::numeric_limits<double>::infinity();
    r.defined = false;
  }
  return r;
}

inline SerBreakdown merge_ser(const SerBreakdown& a, const SerBreakdown& b) {
  SerBreakdown r;
  r.substitutions = a.substitutions + b.substitutions;
  r.deletions = a.deletions + b.deletions;
  r.insertions = a.insertions + b.insertions;
  r.slots = a.slots + b.slots;
  if (r.slots) {
    r.ser = static_cast<double>(r.errors()) / static_cast<double>(r.slots);
  } else if (r.errors()) {
    r.ser = std::numeric_limits<double>::infinity();
    r.defined = false;
  }
  return r;
}

// Full evaluation of one task.
struct TaskReport {
  std::string task;
  std::vector<std::string> class_names;
  std::int32_t null_id = 0;
  ConfusionTable table;
  PrfReport prf;
  SerBreakdown ser;
};

inline TaskReport evaluate_task(const std::string& task, const std::vector<std::string>& names,
                                std::int32_t null_id, const std::vector<std::int32_t>& gold,
                                const std::vector<std::int32_t>& pred,
                                const std::vector<std::uint8_t>& mask) {
  TaskReport rep;
  rep.task = task;
  rep.class_names = names;
  rep.null_id = null_id;
  rep.table = confusion(gold, pred, mask, names.size(), null_id);
  rep.prf = prf(rep.table);
  rep.ser = ser(gold, pred, mask, null_id);
  return rep;
}

inline std::string format_ser(const SerBreakdown& s) {
  if (!s.defined) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << s.ser;
  return os.str();
}

// Aligned plain-text table: one row per non-null class with P/R/F1 (as
// percentages), then an OVERALL row carrying the chosen aggregate (micro by
// default) and SER. The key-value file always carries both aggregates.
inline void render_report(const std::vector<TaskReport>& reports, std::ostream& os,
                          bool macro_overall = false) {
  auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << v * 100.0;
    return s.str();
  };
  for (const auto& rep : reports) {
    os << "Task: " << rep.task << "   (null class: " << rep.class_names[rep.null_id]
       << "; overall is the " << (macro_overall ? "macro" : "micro")
       << " average over non-null classes)\n";
    os << "  " << std::left << std::setw(16) << "CLASS" << std::right << std::setw(8) << "P"
       << std::setw(8) << "R" << std::setw(8) << "F1" << "\n";
    for (std::size_t c = 0; c < rep.class_names.size(); ++c) {
      if (static_cast<std::int32_t>(c) == rep.null_id) continue;
      const Prf& p = rep.prf.per_class[c];
      os << "  " << std::left << std::setw(16) << rep.class_names[c] << std::right << std::setw(8)
         << pct(p.precision) << std::setw(8) << pct(p.recall) << std::setw(8) << pct(p.f1)
         << "\n";
    }
    const Prf& o = macro_overall ? rep.prf.overall_macro : rep.prf.overall_micro;
    os << "  " << std::left << std::setw(16) << "OVERALL" << std::right << std::setw(8)
       << pct(o.precision) << std::setw(8) << pct(o.recall) << std::setw(8) << pct(o.f1)
       << "   SER " << format_ser(rep.ser) << "  (S=" << rep.ser.substitutions
       << " D=" << rep.ser.deletions << " I=" << rep.ser.insertions << " slots=" << rep.ser.slots
       << ")\n\n";
  }
}

// Machine-readable flat form: `task.class.metric = value` per line.
inline void write_report_kv(const std::vector<TaskReport>& reports, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << std::setprecision(10);
  for (const auto& rep : reports) {
    for (std::size_t c = 0; c < rep.class_names.size(); ++c) {
      const Prf& p = rep.prf.per_class[c];
      const std::string key = rep.task + "." + rep.class_names[c];
      f << key << ".precision = " << p.precision << "\n";
      f << key << ".recall = " << p.recall << "\n";
      f << key << ".f1 = " << p.f1 << "\n";
    }
    const std::string key = rep.task + ".OVERALL";
    f << key << ".precision = " << rep.prf.overall_micro.precision << "\n";
    f << key << ".recall = " << rep.prf.overall_micro.recall << "\n";
    f << key << ".f1 = " << rep.prf.overall_micro.f1 << "\n";
    f << key << ".precision_macro = " << rep.prf.overall_macro.precision << "\n";
    f << key << ".recall_macro = " << rep.prf.overall_macro.recall << "\n";
    f << key << ".f1_macro = " << rep.prf.overall_macro.f1 << "\n";
    f << key << ".ser = " << (rep.ser.defined ? std::to_string(rep.ser.ser) : "undefined")
      << "\n";
    f << key << ".ser_substitutions = " << rep.ser.substitutions << "\n";
    f << key << ".ser_deletions = " << rep.ser.deletions << "\n";
    f << key << ".ser_insertions = " << rep.ser.insertions << "\n";
    f << key << ".ser_slots = " << rep.ser.slots << "\n";
  }
}

}  // namespace cslm
