#include "relink/candidates.hpp"

#include <algorithm>
#include <numeric>

#include "relink/error.hpp"
#include "relink/kernels.hpp"

namespace relink {

void SelectionParams::validate() const {
  if (k1 < 1 || k < k1 + k2 || n_context < 1) {
    throw Error(ErrorCode::InvalidArgument, "selection params require k1 >= 1, k >= k1 + k2, n_context >= 1");
  }
}

std::optional<std::span<const float>> lookup_word(const KnowledgeStore& store, std::string_view token) {
  if (auto v = store.word_vector(token)) return v;
  std::string lower = to_lower(token);
  if (lower != token) return store.word_vector(lower);
  return std::nullopt;
}

std::vector<std::size_t> extract_context(const Document& doc, const Span& span, std::size_t n_context) {
  auto [first, last] = doc.token_range(span.start, span.length);
  const std::size_t left = n_context / 2;
  const std::size_t right = n_context - left;
  std::vector<std::size_t> out;
  out.reserve(n_context);
  for (std::size_t i = first > left ? first - left : 0; i < first; ++i) out.push_back(i);
  for (std::size_t i = last; i < doc.tokens().size() && i < last + right; ++i) out.push_back(i);
  return out;
}

std::vector<double> context_vector_sum(const Document& doc, std::span<const std::size_t> tokens, const KnowledgeStore& store) {
  std::vector<std::span<const float>> rows;
  rows.reserve(tokens.size());
  for (std::size_t t : tokens) {
    if (auto v = lookup_word(store, doc.tokens()[t].text)) rows.push_back(*v);
  }
  std::vector<double> sum(store.dim(), 0.0);
  kernels::parallel::accumulate_rows(rows, sum);
  return sum;
}

double context_score(EntityId entity, const Document& doc, std::span<const std::size_t> context_tokens, const KnowledgeStore& store) {
  auto e = store.entity_vector(entity);
  if (!e) return 0.0;
  std::vector<double> sum = context_vector_sum(doc, context_tokens, store);
  double score = 0.0;
  std::span<const float> rows[] = {*e};
  kernels::serial::dot_rows(rows, sum, std::span<double>(&score, 1));
  return score;
}

CandidateSet select_candidates(const Document& doc, const Span& span, const KnowledgeStore& store, const SelectionParams& params) {
  CandidateSet set;
  set.span = span;
  auto [first, last] = doc.token_range(span.start, span.length);
  set.mention_tokens.resize(last - first);
  std::iota(set.mention_tokens.begin(), set.mention_tokens.end(), first);
  set.context_tokens = extract_context(doc, span, params.n_context);

  auto entries = store.lookup_prior(doc.substring(span.start, span.length));
  if (entries.empty()) return set;
  auto top = entries.first(std::min(entries.size(), params.k));

  const std::size_t by_prior = std::min(params.k1, top.size());
  for (std::size_t i = 0; i < by_prior; ++i) set.candidates.push_back({top[i].entity, top[i].prior});
  if (top.size() <= params.k1 || params.k2 == 0) return set;

  auto rest = top.subspan(params.k1);
  std::vector<std::span<const float>> rows;
  rows.reserve(rest.size());
  for (const PriorEntry& e : rest) rows.push_back(*store.entity_vector(e.entity));
  std::vector<double> scores(rest.size());
  kernels::parallel::dot_rows(rows, context_vector_sum(doc, set.context_tokens, store), scores);

  std::vector<std::size_t> order(rest.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : rest[a].entity < rest[b].entity;
  });
  for (std::size_t i = 0; i < std::min(params.k2, order.size()); ++i) {
    set.candidates.push_back({rest[order[i]].entity, rest[order[i]].prior});
  }
  return set;
}

}  // namespace relink
