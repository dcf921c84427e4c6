#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "relink/dataset.hpp"
#include "relink/index_builder.hpp"

namespace relink {

using PredictedMention = GoldMention;

struct DocumentCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ScoreReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<DocumentCounts> documents;
  // Documents with neither gold nor predicted mentions; they score F1 = 1
  // in the macro average.
  std::size_t empty_documents = 0;
};

// Exact boundaries and equal entity titles (after redirect resolution when a
// table is given).
bool strong_match(const PredictedMention& pred, const GoldMention& gold, const RedirectTable* redirects = nullptr);

// Strong-matching EL scores. Throws DuplicateSpan if a document repeats a
// predicted span.
ScoreReport score_el(std::span<const std::vector<PredictedMention>> preds, std::span<const std::vector<GoldMention>> golds,
                     const RedirectTable* redirects = nullptr);

// ED scores for predictions made on gold spans. Throws UnknownSpan for a
// prediction whose span is not a gold span.
ScoreReport score_ed(std::span<const std::vector<PredictedMention>> preds, std::span<const std::vector<GoldMention>> golds,
                     const RedirectTable* redirects = nullptr);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single sample
};

MeanSd mean_sd(std::span<const double> samples);

struct StageSeconds {
  double md = 0.0;
  double ed = 0.0;
};

struct EfficiencyReport {
  std::size_t documents = 0;
  std::vector<StageSeconds> samples;
  MeanSd md;
  MeanSd ed;
  MeanSd total;
  MeanSd words;
  MeanSd mentions;
};

// Runs `pipeline` once per document and summarizes per-stage wall-clock time.
// The callback returns the stage timings and reports the mention count.
EfficiencyReport measure_efficiency(std::span<const std::string> docs,
                                    const std::function<StageSeconds(const std::string& text, std::size_t& mentions)>& pipeline);

std::string format_score_table(const ScoreReport& report, const std::string& title);
std::string format_efficiency_table(const EfficiencyReport& report);

}  // namespace relink
