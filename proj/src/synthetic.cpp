#include "relink/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "relink/error.hpp"

namespace relink {
namespace {

using Vec = std::vector<double>;

Vec random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  for (auto& x : v) x = normal(rng);
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<float> normalized_sum(std::initializer_list<std::pair<const Vec*, double>> parts, std::size_t dim) {
  Vec v(dim, 0.0);
  for (const auto& [p, w] : parts) {
    for (std::size_t c = 0; c < dim; ++c) v[c] += w * (*p)[c];
  }
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  std::vector<float> out(dim);
  for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(v[c] / norm);
  return out;
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Appends a space-separated token and returns its start offset.
std::size_t append_token(std::string& text, const std::string& token) {
  if (!text.empty()) text += ' ';
  std::size_t start = text.size();
  text += token;
  return start;
}

}  // namespace

void SyntheticSizes::validate() const {
  if (entities == 0 || entities > 100) throw Error(ErrorCode::InvalidArgument, "synthetic corpus needs 1..100 entities");
  if (vocab > 1000) throw Error(ErrorCode::InvalidArgument, "synthetic vocabulary is capped at 1000 words");
  if (train_docs + val_docs > 500) throw Error(ErrorCode::InvalidArgument, "synthetic corpus is capped at 500 documents");
  if (vocab < 6 * entities) throw Error(ErrorCode::InvalidArgument, "vocabulary must hold six topic words per entity");
  if (clusters < 2 || clusters > entities) throw Error(ErrorCode::InvalidArgument, "need 2..entities clusters");
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dim must be positive");
  if (surfaces == 0) throw Error(ErrorCode::InvalidArgument, "need at least one surface");
}

SyntheticCorpus make_synthetic_corpus(std::uint64_t seed, const SyntheticSizes& sizes) {
  sizes.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = sizes.dim;
  SyntheticCorpus corpus;

  std::vector<Vec> centers;
  for (std::size_t k = 0; k < sizes.clusters; ++k) centers.push_back(random_unit(rng, d));

  std::vector<std::string> titles;
  std::vector<std::size_t> cluster_of(sizes.entities);
  std::vector<std::vector<std::size_t>> members(sizes.clusters);
  std::vector<std::vector<std::string>> topic_words(sizes.entities);
  corpus.embeddings.words.dim = d;
  corpus.embeddings.entities.dim = d;
  std::size_t next_word = 0;
  for (std::size_t e = 0; e < sizes.entities; ++e) {
    titles.push_back(numbered("Entity_", e, 2));
    cluster_of[e] = e % sizes.clusters;
    members[cluster_of[e]].push_back(e);
    corpus.entity_cluster[titles[e]] = cluster_of[e];
    Vec topic = random_unit(rng, d);
    const Vec& center = centers[cluster_of[e]];
    corpus.embeddings.entities.add(titles[e], normalized_sum({{&center, 1.0}, {&topic, 0.5}}, d));
    for (int w = 0; w < 6; ++w) {
      Vec jitter = random_unit(rng, d);
      std::string word = numbered("w", next_word++, 4);
      corpus.embeddings.words.add(word, normalized_sum({{&center, 1.0}, {&topic, 0.5}, {&jitter, 0.3}}, d));
      corpus.topic_word_cluster[word] = cluster_of[e];
      topic_words[e].push_back(word);
    }
  }
  std::vector<std::string> noise_words;
  while (next_word < sizes.vocab) {
    Vec v = random_unit(rng, d);
    std::string word = numbered("w", next_word++, 4);
    corpus.embeddings.words.add(word, normalized_sum({{&v, 1.0}}, d));
    noise_words.push_back(word);
  }

  // Surfaces shared by entities of distinct clusters; uncovered entities are
  // preferred so every entity ends up with at least one surface.
  std::vector<bool> covered(sizes.entities, false);
  std::size_t uncovered = sizes.entities;
  const std::size_t max_share = std::min<std::size_t>(5, sizes.clusters);
  std::vector<std::vector<std::size_t>> surface_members;
  std::vector<std::vector<std::size_t>> cluster_surfaces(sizes.clusters);
  for (std::size_t s = 0; s < sizes.surfaces || uncovered > 0; ++s) {
    std::vector<std::size_t> clusters(sizes.clusters);
    std::iota(clusters.begin(), clusters.end(), 0);
    std::shuffle(clusters.begin(), clusters.end(), rng);
    if (uncovered > 0) {
      // Lead with the cluster of the first uncovered entity.
      std::size_t first = static_cast<std::size_t>(std::find(covered.begin(), covered.end(), false) - covered.begin());
      std::iter_swap(clusters.begin(), std::find(clusters.begin(), clusters.end(), cluster_of[first]));
    }
    const std::size_t share = uniform(rng, 2, max_share);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < share; ++c) {
      const auto& pool = members[clusters[c]];
      std::vector<std::size_t> fresh;
      for (std::size_t e : pool) {
        if (!covered[e]) fresh.push_back(e);
      }
      const auto& from = fresh.empty() ? pool : fresh;
      std::size_t e = from[uniform(rng, 0, from.size() - 1)];
      if (!covered[e]) {
        covered[e] = true;
        --uncovered;
      }
      chosen.push_back(e);
    }
    const std::string surface = numbered("mention", s, 2);
    for (std::size_t e : chosen) {
      corpus.counts.add(surface, titles[e], uniform(rng, 1, 100));
      corpus.surface_entities[surface].push_back(titles[e]);
      cluster_surfaces[cluster_of[e]].push_back(surface_members.size());
    }
    surface_members.push_back(chosen);
  }

  std::vector<std::string> surface_names;
  for (std::size_t s = 0; s < surface_members.size(); ++s) surface_names.push_back(numbered("mention", s, 2));

  auto make_doc = [&](std::size_t index) {
    LabeledDocument doc;
    doc.id = numbered("doc", index, 4);
    const std::size_t k = uniform(rng, 0, sizes.clusters - 1);
    const std::size_t n = uniform(rng, 2, 8);
    for (std::size_t m = 0; m < n; ++m) {
      const std::size_t s = cluster_surfaces[k][uniform(rng, 0, cluster_surfaces[k].size() - 1)];
      std::size_t gold = 0;
      for (std::size_t e : surface_members[s]) {
        if (cluster_of[e] == k) gold = e;
      }
      const auto& words = topic_words[gold];
      for (int w = 0; w < 3; ++w) append_token(doc.text, words[uniform(rng, 0, words.size() - 1)]);
      const std::size_t start = append_token(doc.text, surface_names[s]);
      doc.mentions.push_back(GoldMention{start, surface_names[s].size(), titles[gold]});
      for (int w = 0; w < 2; ++w) append_token(doc.text, words[uniform(rng, 0, words.size() - 1)]);
      if (!noise_words.empty()) {
        const std::size_t noise = uniform(rng, 1, 3);
        for (std::size_t w = 0; w < noise; ++w) append_token(doc.text, noise_words[uniform(rng, 0, noise_words.size() - 1)]);
      }
    }
    return doc;
  };
  for (std::size_t i = 0; i < sizes.train_docs; ++i) corpus.train.push_back(make_doc(i));
  for (std::size_t i = 0; i < sizes.val_docs; ++i) corpus.val.push_back(make_doc(sizes.train_docs + i));

  corpus.priors = combine_priors(compute_wiki_prior(corpus.counts), UniformDict{});
  BuildReport report;
  corpus.store_bytes = build_store_bytes(corpus.embeddings, corpus.priors, report);
  return corpus;
}

EfficiencyFixture make_efficiency_fixture(std::uint64_t seed, const EfficiencySizes& sizes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = sizes.dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  EmbeddingPair emb;
  emb.words.dim = d;
  emb.entities.dim = d;
  std::vector<float> row(d);
  auto fill = [&]() {
    for (auto& x : row) x = static_cast<float>(normal(rng) * scale);
  };
  std::vector<std::string> vocab;
  for (std::size_t w = 0; w < sizes.vocab; ++w) {
    vocab.push_back(numbered("v", w, 5));
    fill();
    emb.words.add(vocab.back(), row);
  }
  std::vector<std::string> titles;
  for (std::size_t e = 0; e < sizes.entities; ++e) {
    titles.push_back(numbered("Item_", e, 5));
    fill();
    emb.entities.add(titles.back(), row);
  }
  AnchorCounts counts;
  std::vector<std::string> surfaces;
  for (std::size_t s = 0; s < sizes.surfaces; ++s) {
    surfaces.push_back(numbered("s", s, 5));
    const std::size_t width = uniform(rng, 0, 4) == 0 ? uniform(rng, 8, 60) : uniform(rng, 1, 7);
    std::set<std::size_t> picked;
    while (picked.size() < width) picked.insert(uniform(rng, 0, sizes.entities - 1));
    for (std::size_t e : picked) counts.add(surfaces.back(), titles[e], uniform(rng, 1, 200));
  }
  BuildReport report;
  EfficiencyFixture fx;
  fx.store_bytes = build_store_bytes(std::move(emb), combine_priors(compute_wiki_prior(counts), UniformDict{}), report);

  // Standardized draws, so the batch hits the target mean and sd exactly
  // before rounding and clamping.
  auto standardize = [](std::vector<double> z) {
    if (z.size() < 2) return std::vector<double>(z.size(), 0.0);
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(z.size());
    double ss = 0.0;
    for (double x : z) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(z.size() - 1));
    for (auto& x : z) x = sd > 0.0 ? (x - mean) / sd : 0.0;
    return z;
  };
  auto draw = [&]() {
    std::vector<double> z(sizes.documents);
    for (auto& x : z) x = normal(rng);
    return z;
  };
  // Word counts are floored, so their spread comes from a right-skewed gamma
  // whose mean and sd above the floor match the target.
  std::vector<double> word_z(sizes.documents);
  {
    const double excess = std::max(sizes.words_mean - static_cast<double>(sizes.min_words), 1.0);
    const double shape = (excess / sizes.words_sd) * (excess / sizes.words_sd);
    std::gamma_distribution<double> gamma(shape, sizes.words_sd * sizes.words_sd / excess);
    for (auto& x : word_z) x = gamma(rng);
    word_z = standardize(std::move(word_z));
  }
  // Longer documents tend to have more mentions.
  constexpr double kCorrelation = 0.8;
  std::vector<double> mention_z = draw();
  for (std::size_t i = 0; i < mention_z.size(); ++i) {
    mention_z[i] = kCorrelation * word_z[i] + std::sqrt(1.0 - kCorrelation * kCorrelation) * mention_z[i];
  }
  mention_z = standardize(std::move(mention_z));

  for (std::size_t doc = 0; doc < sizes.documents; ++doc) {
    auto words = static_cast<std::size_t>(std::max(static_cast<double>(sizes.min_words), std::round(sizes.words_mean + sizes.words_sd * word_z[doc])));
    auto mentions = static_cast<std::size_t>(std::clamp(std::round(sizes.mentions_mean + sizes.mentions_sd * mention_z[doc]), 1.0,
                                                        static_cast<double>(words / 4)));
    std::vector<bool> is_mention(words, false);
    std::vector<std::size_t> slots(words);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    for (std::size_t m = 0; m < mentions; ++m) is_mention[slots[m]] = true;
    std::string text;
    for (std::size_t w = 0; w < words; ++w) {
      const auto& pool = is_mention[w] ? surfaces : vocab;
      append_token(text, pool[uniform(rng, 0, pool.size() - 1)]);
    }
    fx.documents.push_back(std::move(text));
    fx.planted_mentions.push_back(mentions);
  }
  return fx;
}

}  // namespace relink
