#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relink/dataset.hpp"
#include "relink/index_builder.hpp"
#include "relink/store.hpp"

namespace relink {

struct SyntheticSizes {
  std::size_t entities = 50;
  std::size_t vocab = 500;
  std::size_t train_docs = 200;
  std::size_t val_docs = 50;
  std::size_t dim = 32;
  std::size_t clusters = 10;
  std::size_t surfaces = 30;

  // Throws InvalidArgument outside E <= 100, V <= 1000, N <= 500 or when the
  // vocabulary cannot hold six topic words per entity.
  void validate() const;
};

// Toy corpus with planted structure: every entity belongs to a topic cluster,
// each surface is shared by entities of distinct clusters, and a document
// draws all its mentions and topic words from a single cluster, so the gold
// entity of a mention is the unique candidate in the document's cluster.
struct SyntheticCorpus {
  std::vector<LabeledDocument> train;
  std::vector<LabeledDocument> val;
  EmbeddingPair embeddings;
  AnchorCounts counts;
  TitledPriors priors;
  std::vector<std::byte> store_bytes;

  // Planted ground truth.
  std::map<std::string, std::size_t> entity_cluster;     // title -> cluster
  std::map<std::string, std::size_t> topic_word_cluster;  // word -> cluster
  std::map<std::string, std::vector<std::string>> surface_entities;
};

SyntheticCorpus make_synthetic_corpus(std::uint64_t seed, const SyntheticSizes& sizes = {});

struct EfficiencySizes {
  std::size_t documents = 50;
  double words_mean = 323.0;
  double words_sd = 105.0;
  std::size_t min_words = 201;  // benchmark documents have more than 200 words
  double mentions_mean = 42.0;
  double mentions_sd = 19.0;
  std::size_t dim = 300;
  std::size_t entities = 4000;
  std::size_t vocab = 5000;
  std::size_t surfaces = 1500;
};

// Documents and a store shaped like a realistic benchmark workload. Word and
// mention counts are normal with the given moments over the batch. Some
// surfaces have far more than seven entities so candidate selection is
// exercised at full width.
struct EfficiencyFixture {
  std::vector<std::string> documents;
  std::vector<std::size_t> planted_mentions;
  std::vector<std::byte> store_bytes;
};

EfficiencyFixture make_efficiency_fixture(std::uint64_t seed, const EfficiencySizes& sizes = {});

}  // namespace relink
