#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relink/candidates.hpp"
#include "relink/mention.hpp"
#include "relink/store.hpp"
#include "relink/text.hpp"

namespace relink {

struct EDHyperParams {
  std::size_t relations = 3;        // K latent relations
  std::size_t dim = 300;            // embedding dim d
  double margin = 0.9;              // hinge margin gamma
  std::size_t lbp_iterations = 10;  // T
  double lbp_damping = 0.5;         // delta in [0, 1)
  std::size_t attention_keep = 25;  // R context words kept by attention
  std::size_t scorer_hidden = 100;  // H

  void validate() const;
};

// Platt scaling: sigma(slope * score + intercept).
struct Calibration {
  double slope = 1.0;
  double intercept = 0.0;

  double apply(double score) const;
};

// All learned tensors. Diagonal matrices are stored as vectors; dense
// matrices are row-major.
struct EDParams {
  std::size_t dim = 0;
  std::size_t relations = 0;
  std::size_t hidden = 0;

  std::vector<double> attention_diag;  // d, attention bilinear form
  std::vector<double> local_diag;      // d, local bilinear form
  std::vector<double> relation_diag;   // K x d, R_k
  std::vector<double> pair_diag;       // K x d, D_k
  std::vector<double> encoder_weight;  // d x 2d
  std::vector<double> encoder_bias;    // d
  std::vector<double> hidden_weight;   // H x 2, input [max-marginal, log prior]
  std::vector<double> hidden_bias;     // H
  std::vector<double> output_weight;   // H
  std::vector<double> output_bias;     // 1
  Calibration calibration;

  static EDParams zeros(const EDHyperParams& hyper);
  // R_k = 1, D_k = 0, A = B = 1, dense layers uniform in +-1/sqrt(fan_in).
  static EDParams initialize(const EDHyperParams& hyper, std::uint64_t seed);

  // Visits the trainable tensors in declaration order as (name, values).
  template <typename F>
  void for_each_tensor(F&& f) {
    f(std::string_view("attention_diag"), std::span<double>(attention_diag));
    f(std::string_view("local_diag"), std::span<double>(local_diag));
    f(std::string_view("relation_diag"), std::span<double>(relation_diag));
    f(std::string_view("pair_diag"), std::span<double>(pair_diag));
    f(std::string_view("encoder_weight"), std::span<double>(encoder_weight));
    f(std::string_view("encoder_bias"), std::span<double>(encoder_bias));
    f(std::string_view("hidden_weight"), std::span<double>(hidden_weight));
    f(std::string_view("hidden_bias"), std::span<double>(hidden_bias));
    f(std::string_view("output_weight"), std::span<double>(output_weight));
    f(std::string_view("output_bias"), std::span<double>(output_bias));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<EDParams*>(this)->for_each_tensor(
        [&](std::string_view name, std::span<double> v) { f(name, std::span<const double>(v.data(), v.size())); });
  }

  bool all_finite() const;
};

struct EDModel {
  EDHyperParams hyper;
  EDParams params;
};

// Binary model file: "RELMODEL", version, hyperparameters, then every tensor
// in declaration order as little-endian float32, then the calibration pair.
void save_model(std::ostream& out, const EDModel& model);
void save_model(const std::filesystem::path& path, const EDModel& model);
EDModel load_model(std::istream& in);
EDModel load_model(const std::filesystem::path& path);

// Per-mention inputs to the model, gathered once from the store.
struct MentionInput {
  Span span;
  std::vector<Candidate> candidates;        // non-empty
  std::vector<double> candidate_vectors;    // |C| x d
  std::vector<double> log_priors;           // |C|
  std::vector<double> context_vectors;      // L x d, in-vocabulary window words
  std::vector<double> mention_mean;         // d
  std::vector<double> context_mean;         // d

  std::size_t size() const { return candidates.size(); }
  std::size_t context_size(std::size_t dim) const { return dim ? context_vectors.size() / dim : 0; }
  std::span<const double> candidate(std::size_t a, std::size_t dim) const { return {candidate_vectors.data() + a * dim, dim}; }
  std::span<const double> context(std::size_t w, std::size_t dim) const { return {context_vectors.data() + w * dim, dim}; }
};

struct PreparedDocument {
  std::size_t dim = 0;
  std::vector<MentionInput> mentions;  // only mentions with candidates, in span order
  std::vector<Span> unlinkable;        // spans whose surface has no candidates
};

PreparedDocument prepare_document(const Document& doc, std::span<const Span> spans, const KnowledgeStore& store,
                                  const SelectionParams& selection);

// f(m, c) = tanh(W [mention_mean; context_mean] + b).
std::vector<double> mention_encode(std::span<const double> mention_mean, std::span<const double> context_mean, const EDParams& params);
std::vector<double> mention_encode(const Document& doc, const CandidateSet& set, const KnowledgeStore& store, const EDParams& params);

struct LocalScores {
  std::vector<double> psi;          // per candidate
  std::vector<std::size_t> kept;    // context word indices, attention order
  std::vector<double> beta;         // softmax weights of kept words
  std::vector<std::size_t> best;    // per kept word, the argmax candidate
  std::vector<double> mix;          // d, sum_w beta(w) w
};

// u(w) = max_e e^T diag(A) w; keep the top-R words; beta = softmax(u);
// psi(e) = e^T diag(B) sum_w beta(w) w.
LocalScores local_psi(const MentionInput& mention, const EDParams& params, std::size_t attention_keep);

// alpha[i][j][k], softmax over j != i of f_i^T diag(D_k) f_j / sqrt(d).
class PairwiseAlpha {
 public:
  PairwiseAlpha() = default;
  PairwiseAlpha(std::size_t n, std::size_t relations) : n_(n), k_(relations), values_(n * n * relations, 0.0) {}
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return values_[(i * n_ + j) * k_ + k]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values_[(i * n_ + j) * k_ + k]; }
  std::span<const double> row(std::size_t i, std::size_t j) const { return {values_.data() + (i * n_ + j) * k_, k_}; }
  std::size_t mentions() const { return n_; }
  std::size_t relations() const { return k_; }

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<double> values_;
};

PairwiseAlpha pairwise_alpha(std::span<const std::vector<double>> f_vecs, const EDParams& params);

// sum_k alpha_k e_i^T diag(R_k) e_j
double pairwise_phi(std::span<const double> e_i, std::span<const double> e_j, std::span<const double> alpha_ij, const EDParams& params);

// Ordered-pair score tables for LBP: table(i, j)[a * |C_j| + b] is the total
// pairwise score of choosing candidate a for mention i and b for mention j.
class PairTables {
 public:
  PairTables() = default;
  explicit PairTables(std::vector<std::size_t> sizes);
  std::size_t mentions() const { return sizes_.size(); }
  std::size_t size(std::size_t i) const { return sizes_[i]; }
  std::span<double> table(std::size_t i, std::size_t j) { return tables_[i * sizes_.size() + j]; }
  std::span<const double> table(std::size_t i, std::size_t j) const { return tables_[i * sizes_.size() + j]; }
  double operator()(std::size_t i, std::size_t j, std::size_t a, std::size_t b) const { return table(i, j)[a * sizes_[j] + b]; }
  void set(std::size_t i, std::size_t j, std::size_t a, std::size_t b, double v) { table(i, j)[a * sizes_[j] + b] = v; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<double>> tables_;
};

// Messages and argmax choices for every iteration, kept for backprop.
struct LbpTrace {
  std::vector<std::size_t> offsets;             // (i*n + j) -> offset into a flat message buffer
  std::vector<std::vector<double>> messages;    // iteration 0..T
  std::vector<std::vector<std::uint32_t>> arg;  // iteration 1..T (index t-1), best a for each b
  std::vector<std::vector<std::uint32_t>> top;  // iteration 1..T, best b per pair
};

struct LbpResult {
  std::vector<std::vector<double>> max_marginals;
  LbpTrace trace;  // empty unless requested
};

// Log-domain max-product LBP over the fully connected mention graph.
// Messages are normalized to max 0 every round and damped from the second
// round on. Throws NonFinite on non-finite inputs.
LbpResult lbp_infer(std::span<const std::vector<double>> psi, const PairTables& pair, const EDHyperParams& hyper, bool keep_trace = false);

// Joint objective sum_i psi_i(e_i) + sum_{i != j} phi_ij(e_i, e_j), where
// the pair tables already hold phi_ij + phi_ji.
double joint_objective(std::span<const std::vector<double>> psi, const PairTables& pair, std::span<const std::size_t> assignment);

// g = W2 relu(W1 [max_marginal, log prior] + b1) + b2
double final_score(double max_marginal, double prior, const EDParams& params);

// Fits sigma(a s + b) by maximum likelihood (Newton steps on standardized
// scores). Throws DegenerateCalibration when fewer
// than two examples or only one class is given.
Calibration fit_calibration(std::span<const double> scores, std::span<const bool> labels);

// Everything computed on one document's forward pass.
struct DocumentForward {
  std::vector<LocalScores> local;
  std::vector<std::vector<double>> f;          // mention encodings (n >= 2 only)
  PairwiseAlpha alpha;
  std::vector<std::vector<double>> gram;       // per relation, N x N over all candidates
  std::vector<std::size_t> candidate_offset;   // mention -> first global candidate index
  PairTables pair;
  LbpResult lbp;
  std::vector<std::vector<double>> shifted;    // max-marginals shifted to max 0
  std::vector<std::vector<double>> hidden;     // per mention, |C| x H pre-activations
  std::vector<std::vector<double>> scores;     // final scores g
};

DocumentForward forward_document(const PreparedDocument& doc, const EDModel& model, bool keep_trace = false);

// Accumulates dLoss/dParams into `grad` given dLoss/dScores.
void backward_document(const PreparedDocument& doc, const DocumentForward& fwd, std::span<const std::vector<double>> score_grads,
                       const EDModel& model, EDParams& grad);

struct Annotation {
  std::size_t start = 0;
  std::size_t length = 0;
  std::string surface;
  std::string entity;
  EntityId entity_id = 0;
  double score = 0.0;          // raw final score
  double ed_confidence = 0.0;  // calibrated
  std::optional<double> md_confidence;
  std::optional<std::string> tag;
};

// Index of the best candidate per mention; ties go to the lower EntityId.
std::vector<std::size_t> decide(const PreparedDocument& doc, const DocumentForward& fwd);

std::vector<Annotation> annotate(const Document& doc, const PreparedDocument& prepared, const DocumentForward& fwd,
                                 const KnowledgeStore& store, const EDModel& model);

// Candidate selection, local and pairwise scoring, LBP and the final scorer
// for the given spans. Mentions without candidates are omitted.
std::vector<Annotation> disambiguate_document(const Document& doc, std::span<const Span> spans, const KnowledgeStore& store,
                                              const EDModel& model, const SelectionParams& selection = {});

}  // namespace relink
