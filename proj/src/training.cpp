#include "relink/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <memory>
#include <random>

#include "relink/error.hpp"
#include "relink/text.hpp"

namespace relink {
namespace {

std::vector<Span> gold_spans(const LabeledDocument& doc) {
  std::vector<Span> spans;
  spans.reserve(doc.mentions.size());
  for (const auto& m : doc.mentions) spans.push_back(Span{m.start, m.length, std::nullopt, std::nullopt});
  return spans;
}

struct PreparedExample {
  PreparedDocument prepared;
  std::vector<std::optional<std::size_t>> gold;
  std::size_t skipped = 0;
};

PreparedExample prepare_example(const LabeledDocument& doc, const KnowledgeStore& store, const SelectionParams& selection) {
  PreparedExample ex;
  Document parsed(doc.text);
  auto spans = gold_spans(doc);
  ex.prepared = prepare_document(parsed, spans, store, selection);
  ex.gold = gold_indices(ex.prepared, doc, store);
  ex.skipped = ex.prepared.unlinkable.size();
  for (const auto& g : ex.gold) ex.skipped += g ? 0 : 1;
  return ex;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_reduced > 0.0 && lr_reduced < lr_initial)) throw Error(ErrorCode::InvalidArgument, "need 0 < lr_reduced < lr_initial");
  if (!(f1_switch > 0.0 && f1_switch < 1.0)) throw Error(ErrorCode::InvalidArgument, "need 0 < f1_switch < 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid Adam constants");
  }
}

double margin_loss(std::span<const std::vector<double>> scores, std::span<const std::optional<std::size_t>> gold, double margin,
                   std::vector<std::vector<double>>* grads) {
  if (gold.size() != scores.size()) throw Error(ErrorCode::InvalidArgument, "one gold index per mention is required");
  if (grads) {
    grads->resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) (*grads)[i].assign(scores[i].size(), 0.0);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!gold[i]) continue;
    const std::size_t g = *gold[i];
    if (g >= scores[i].size()) throw Error(ErrorCode::OutOfBounds, "gold index outside candidate list");
    for (std::size_t e = 0; e < scores[i].size(); ++e) {
      if (e == g) continue;
      const double h = margin - scores[i][g] + scores[i][e];
      if (h <= 0.0) continue;
      loss += h;
      if (grads) {
        (*grads)[i][e] += 1.0;
        (*grads)[i][g] -= 1.0;
      }
    }
  }
  return loss;
}

Adam::Adam(const EDParams& shape, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(shape), v_(shape) {
  m_.for_each_tensor([](std::string_view, std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  v_.for_each_tensor([](std::string_view, std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
}

void Adam::step(EDParams& params, const EDParams& grad, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  std::vector<std::span<double>> m;
  std::vector<std::span<double>> v;
  params.for_each_tensor([&](std::string_view, std::span<double> t) { p.push_back(t); });
  grad.for_each_tensor([&](std::string_view, std::span<const double> t) { g.push_back(t); });
  m_.for_each_tensor([&](std::string_view, std::span<double> t) { m.push_back(t); });
  v_.for_each_tensor([&](std::string_view, std::span<double> t) { v.push_back(t); });
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].size() != p[t].size()) throw Error(ErrorCode::DimensionMismatch, "gradient shape does not match parameters");
    for (std::size_t x = 0; x < p[t].size(); ++x) {
      m[t][x] = beta1_ * m[t][x] + (1.0 - beta1_) * g[t][x];
      v[t][x] = beta2_ * v[t][x] + (1.0 - beta2_) * g[t][x] * g[t][x];
      p[t][x] -= lr * (m[t][x] / c1) / (std::sqrt(v[t][x] / c2) + epsilon_);
    }
  }
}

std::vector<std::optional<std::size_t>> gold_indices(const PreparedDocument& prepared, const LabeledDocument& doc,
                                                     const KnowledgeStore& store) {
  std::vector<std::optional<std::size_t>> out;
  out.reserve(prepared.mentions.size());
  for (const MentionInput& m : prepared.mentions) {
    std::optional<std::size_t> idx;
    auto it = std::find_if(doc.mentions.begin(), doc.mentions.end(),
                           [&](const GoldMention& g) { return g.start == m.span.start && g.length == m.span.length; });
    if (it != doc.mentions.end()) {
      if (auto id = store.entity_id(it->entity)) {
        for (std::size_t a = 0; a < m.candidates.size(); ++a) {
          if (m.candidates[a].entity == *id) idx = a;
        }
      }
    }
    out.push_back(idx);
  }
  return out;
}

std::vector<std::vector<PredictedMention>> predict_gold_spans(std::span<const LabeledDocument> docs, const KnowledgeStore& store,
                                                              const EDModel& model, const SelectionParams& selection) {
  std::vector<std::vector<PredictedMention>> preds(docs.size());
  std::vector<std::exception_ptr> errors(docs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t d = 0; d < docs.size(); ++d) {
    try {
      Document parsed(docs[d].text);
      auto spans = gold_spans(docs[d]);
      for (const Annotation& a : disambiguate_document(parsed, spans, store, model, selection)) {
        preds[d].push_back(PredictedMention{a.start, a.length, a.entity});
      }
    } catch (...) {
      errors[d] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return preds;
}

TrainResult train(std::span<const LabeledDocument> train_docs, std::span<const LabeledDocument> val_docs, const KnowledgeStore& store,
                  const EDHyperParams& hyper, const TrainConfig& config, const SelectionParams& selection,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  hyper.validate();
  selection.validate();
  if (train_docs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training documents");
  if (hyper.dim != store.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "model dim " + std::to_string(hyper.dim) + " does not match store dim " + std::to_string(store.dim()));
  }

  TrainResult result;
  result.model.hyper = hyper;
  result.model.params = EDParams::initialize(hyper, config.seed);
  if (config.epochs == 0) return result;

  std::vector<PreparedExample> examples;
  examples.reserve(train_docs.size());
  std::size_t skipped = 0;
  for (const auto& doc : train_docs) {
    examples.push_back(prepare_example(doc, store, selection));
    skipped += examples.back().skipped;
  }
  std::vector<std::vector<GoldMention>> val_gold;
  for (const auto& doc : val_docs) val_gold.push_back(doc.mentions);

  EDModel current = result.model;
  EDModel best = current;
  double best_f1 = -1.0;
  Adam adam(current.params, config.beta1, config.beta2, config.epsilon);
  double lr = config.lr_initial;
  bool switched = false;
  std::size_t since_best = 0;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.skipped_mentions = skipped;
    for (std::size_t idx : order) {
      const PreparedExample& ex = examples[idx];
      if (ex.prepared.mentions.empty()) continue;
      DocumentForward fwd = forward_document(ex.prepared, current, true);
      std::vector<std::vector<double>> score_grads;
      const double loss = margin_loss(fwd.scores, ex.gold, hyper.margin, &score_grads);
      rec.train_loss += loss;
      if (loss == 0.0) continue;
      EDParams grad = EDParams::zeros(hyper);
      backward_document(ex.prepared, fwd, score_grads, current, grad);
      adam.step(current.params, grad, lr);
      ++rec.steps;
    }
    if (!current.params.all_finite()) throw Error(ErrorCode::NonFinite, "parameters became non-finite in epoch " + std::to_string(epoch));

    bool improved = false;
    if (!val_docs.empty()) {
      auto preds = predict_gold_spans(val_docs, store, current, selection);
      rec.val_micro_f1 = score_ed(preds, val_gold).micro_f1;
      improved = rec.val_micro_f1 > best_f1;
    } else {
      improved = true;
    }
    if (improved) {
      best_f1 = rec.val_micro_f1;
      best = current;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (!switched && !val_docs.empty() && rec.val_micro_f1 >= config.f1_switch) {
      switched = true;
      rec.lr_switched = true;
      result.switch_epoch = epoch;
      lr = config.lr_reduced;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.patience && since_best >= *config.patience) break;
  }

  // Platt scaling on per-candidate scores of the held-out set (training set
  // when no validation documents are given).
  std::span<const LabeledDocument> calib_docs = val_docs.empty() ? train_docs : val_docs;
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& doc : calib_docs) {
    PreparedExample ex = prepare_example(doc, store, selection);
    if (ex.prepared.mentions.empty()) continue;
    DocumentForward fwd = forward_document(ex.prepared, best);
    for (std::size_t i = 0; i < ex.gold.size(); ++i) {
      if (!ex.gold[i]) continue;
      for (std::size_t a = 0; a < fwd.scores[i].size(); ++a) {
        scores.push_back(fwd.scores[i][a]);
        labels.push_back(a == *ex.gold[i]);
      }
    }
  }
  try {
    std::unique_ptr<bool[]> flags(new bool[labels.size()]);
    for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = labels[i];
    best.params.calibration = fit_calibration(scores, std::span<const bool>(flags.get(), labels.size()));
    result.calibrated = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateCalibration) throw;
  }
  result.model = std::move(best);
  return result;
}

}  // namespace relink
