#include "relink/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <utility>

#include "relink/error.hpp"
#include "relink/text.hpp"

namespace relink {
namespace {

double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

ScoreReport score(std::span<const std::vector<PredictedMention>> preds, std::span<const std::vector<GoldMention>> golds,
                  const RedirectTable* redirects, bool gold_spans_only) {
  if (preds.size() != golds.size()) {
    throw Error(ErrorCode::InvalidArgument, "prediction and gold document counts differ (" + std::to_string(preds.size()) + " vs " +
                                                std::to_string(golds.size()) + ")");
  }
  ScoreReport report;
  report.documents.reserve(golds.size());
  double macro_sum = 0.0;
  for (std::size_t d = 0; d < golds.size(); ++d) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> gold_at;
    for (std::size_t g = 0; g < golds[d].size(); ++g) gold_at.emplace(std::make_pair(golds[d][g].start, golds[d][g].length), g);

    std::map<std::pair<std::size_t, std::size_t>, bool> seen;
    std::vector<bool> matched(golds[d].size(), false);
    DocumentCounts c;
    for (const auto& p : preds[d]) {
      auto key = std::make_pair(p.start, p.length);
      if (!seen.emplace(key, true).second) {
        throw Error(ErrorCode::DuplicateSpan, "document " + std::to_string(d) + " has two predictions for span (" +
                                                  std::to_string(p.start) + ", " + std::to_string(p.length) + ")");
      }
      auto it = gold_at.find(key);
      if (it == gold_at.end() && gold_spans_only) {
        throw Error(ErrorCode::UnknownSpan, "document " + std::to_string(d) + " has a prediction for non-gold span (" +
                                                std::to_string(p.start) + ", " + std::to_string(p.length) + ")");
      }
      if (it != gold_at.end() && !matched[it->second] && strong_match(p, golds[d][it->second], redirects)) {
        matched[it->second] = true;
        ++c.tp;
      }
    }
    c.fp = preds[d].size() - c.tp;
    c.fn = golds[d].size() - c.tp;
    if (preds[d].empty() && golds[d].empty()) {
      c.precision = c.recall = c.f1 = 1.0;
      ++report.empty_documents;
    } else {
      c.precision = ratio(c.tp, c.tp + c.fp);
      c.recall = ratio(c.tp, c.tp + c.fn);
      c.f1 = harmonic(c.precision, c.recall);
    }
    report.tp += c.tp;
    report.fp += c.fp;
    report.fn += c.fn;
    macro_sum += c.f1;
    report.documents.push_back(c);
  }
  report.micro_precision = ratio(report.tp, report.tp + report.fp);
  report.micro_recall = ratio(report.tp, report.tp + report.fn);
  report.micro_f1 = harmonic(report.micro_precision, report.micro_recall);
  report.macro_f1 = golds.empty() ? 0.0 : macro_sum / static_cast<double>(golds.size());
  return report;
}

}  // namespace

bool strong_match(const PredictedMention& pred, const GoldMention& gold, const RedirectTable* redirects) {
  if (pred.start != gold.start || pred.length != gold.length) return false;
  if (pred.entity == gold.entity) return true;
  if (!redirects) return false;
  return redirects->resolve(canonical_title(pred.entity)) == redirects->resolve(canonical_title(gold.entity));
}

ScoreReport score_el(std::span<const std::vector<PredictedMention>> preds, std::span<const std::vector<GoldMention>> golds,
                     const RedirectTable* redirects) {
  return score(preds, golds, redirects, false);
}

ScoreReport score_ed(std::span<const std::vector<PredictedMention>> preds, std::span<const std::vector<GoldMention>> golds,
                     const RedirectTable* redirects) {
  return score(preds, golds, redirects, true);
}

MeanSd mean_sd(std::span<const double> samples) {
  MeanSd out;
  if (samples.empty()) return out;
  const double n = static_cast<double>(samples.size());
  out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  if (samples.size() < 2) return out;
  double ss = 0.0;
  for (double x : samples) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / (n - 1.0));
  return out;
}

EfficiencyReport measure_efficiency(std::span<const std::string> docs,
                                    const std::function<StageSeconds(const std::string& text, std::size_t& mentions)>& pipeline) {
  EfficiencyReport report;
  report.documents = docs.size();
  std::vector<double> md;
  std::vector<double> ed;
  std::vector<double> total;
  std::vector<double> words;
  std::vector<double> mentions;
  for (const auto& text : docs) {
    std::size_t found = 0;
    StageSeconds s = pipeline(text, found);
    report.samples.push_back(s);
    md.push_back(s.md);
    ed.push_back(s.ed);
    total.push_back(s.md + s.ed);
    words.push_back(static_cast<double>(tokenize(text).size()));
    mentions.push_back(static_cast<double>(found));
  }
  report.md = mean_sd(md);
  report.ed = mean_sd(ed);
  report.total = mean_sd(total);
  report.words = mean_sd(words);
  report.mentions = mean_sd(mentions);
  return report;
}

std::string format_score_table(const ScoreReport& r, const std::string& title) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s\n"
                "  micro P %.4f  R %.4f  F1 %.4f\n"
                "  macro F1 %.4f\n"
                "  tp %zu  fp %zu  fn %zu  documents %zu (empty %zu, scored F1=1)\n",
                title.c_str(), r.micro_precision, r.micro_recall, r.micro_f1, r.macro_f1, r.tp, r.fp, r.fn, r.documents.size(),
                r.empty_documents);
  return buf;
}

std::string format_efficiency_table(const EfficiencyReport& r) {
  char buf[768];
  std::snprintf(buf, sizeof(buf),
                "Efficiency (seconds) for %zu documents, %.0f (+-%.0f) words and %.0f (+-%.0f) mentions per document\n"
                "               Time MD          Time ED          Total\n"
                "  CPU          %.4f+-%.4f  %.4f+-%.4f  %.4f+-%.4f\n",
                r.documents, r.words.mean, r.words.sd, r.mentions.mean, r.mentions.sd, r.md.mean, r.md.sd, r.ed.mean, r.ed.sd, r.total.mean,
                r.total.sd);
  return buf;
}

}  // namespace relink
