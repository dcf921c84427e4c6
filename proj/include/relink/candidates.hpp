#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relink/mention.hpp"
#include "relink/store.hpp"
#include "relink/text.hpp"

namespace relink {

struct SelectionParams {
  std::size_t k1 = 4;          // kept by prior
  std::size_t k2 = 3;          // added by context similarity
  std::size_t k = 30;          // prior entries scored for context similarity
  std::size_t n_context = 50;  // context window in words

  // Throws InvalidArgument unless k1 >= 1, k >= k1 + k2 and n_context >= 1.
  void validate() const;
};

struct Candidate {
  EntityId entity;
  double prior;
};

struct CandidateSet {
  Span span;
  std::vector<Candidate> candidates;      // top-k1 by prior, then top-k2 by context
  std::vector<std::size_t> mention_tokens;  // token indices covered by the span
  std::vector<std::size_t> context_tokens;  // window token indices, document order
};

// Word embedding for a token: exact match first, then its lowercase form.
std::optional<std::span<const float>> lookup_word(const KnowledgeStore& store, std::string_view token);

// Token indices of the n_context/2 tokens left of the span and the
// n_context - n_context/2 tokens right of it, clipped at document edges.
std::vector<std::size_t> extract_context(const Document& doc, const Span& span, std::size_t n_context);

// Sum of the in-vocabulary word vectors of the given tokens (zero if none).
std::vector<double> context_vector_sum(const Document& doc, std::span<const std::size_t> tokens, const KnowledgeStore& store);

// e^T sum_{w in context} w; 0 when no context word has an embedding.
double context_score(EntityId entity, const Document& doc, std::span<const std::size_t> context_tokens, const KnowledgeStore& store);

// Empty candidate list for unknown surfaces.
CandidateSet select_candidates(const Document& doc, const Span& span, const KnowledgeStore& store, const SelectionParams& params = {});

}  // namespace relink
