#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "relink/candidates.hpp"
#include "relink/dataset.hpp"
#include "relink/ed_model.hpp"
#include "relink/evaluation.hpp"
#include "relink/store.hpp"

namespace relink {

struct TrainConfig {
  double lr_initial = 1e-3;
  double lr_reduced = 1e-4;
  double f1_switch = 0.88;  // validation F1 that triggers the permanent lr drop
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  // Stop after this many epochs without a validation improvement.
  std::optional<std::size_t> patience;

  // Throws InvalidArgument unless 0 < lr_reduced < lr_initial and 0 < f1_switch < 1.
  void validate() const;
};

// Hinge loss sum_i sum_{e != gold_i} max(0, margin - g_i(gold_i) + g_i(e)).
// Mentions without a gold index contribute nothing. When `grads` is given it
// receives dLoss/dScores with the same shape as `scores`.
double margin_loss(std::span<const std::vector<double>> scores, std::span<const std::optional<std::size_t>> gold, double margin,
                   std::vector<std::vector<double>>* grads = nullptr);

class Adam {
 public:
  Adam(const EDParams& shape, double beta1, double beta2, double epsilon);

  // One update with bias-corrected moments.
  void step(EDParams& params, const EDParams& grad, double lr);
  std::size_t steps() const { return steps_; }

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  std::size_t steps_ = 0;
  EDParams m_;
  EDParams v_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_micro_f1 = 0.0;
  double lr = 0.0;                  // rate used during this epoch
  bool lr_switched = false;         // the drop fired at the end of this epoch
  std::size_t steps = 0;            // optimizer steps taken
  std::size_t skipped_mentions = 0; // gold entity absent from the candidate set
};

struct TrainResult {
  EDModel model;  // best-validation parameters, calibrated
  std::vector<EpochRecord> history;
  std::optional<std::size_t> switch_epoch;
  std::optional<std::size_t> best_epoch;
  bool calibrated = false;
};

// Gold candidate index per prepared mention (nullopt when the gold entity is
// not among the candidates).
std::vector<std::optional<std::size_t>> gold_indices(const PreparedDocument& prepared, const LabeledDocument& doc,
                                                     const KnowledgeStore& store);

// Predictions on the gold spans of each document, for ED scoring.
std::vector<std::vector<PredictedMention>> predict_gold_spans(std::span<const LabeledDocument> docs, const KnowledgeStore& store,
                                                              const EDModel& model, const SelectionParams& selection = {});

TrainResult train(std::span<const LabeledDocument> train_docs, std::span<const LabeledDocument> val_docs, const KnowledgeStore& store,
                  const EDHyperParams& hyper, const TrainConfig& config, const SelectionParams& selection = {},
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace relink
