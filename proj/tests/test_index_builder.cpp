#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "relink/error.hpp"
#include "relink/index_builder.hpp"
#include "test_support.hpp"

using namespace relink;
using relink::testing::TempDir;

TEST(WikiPrior, CountsToConditionalProbability) {
  AnchorCounts counts;
  counts.add("belgrade", "Belgrade", 8);
  counts.add("belgrade", "Belgrade_Fortress", 2);
  WikiPrior p = compute_wiki_prior(counts);
  EXPECT_EQ(p["belgrade"]["Belgrade"], 0.8);
  EXPECT_EQ(p["belgrade"]["Belgrade_Fortress"], 0.2);
}

TEST(WikiPrior, SumsToOnePerSurface) {
  std::mt19937_64 rng(4);
  AnchorCounts counts;
  for (int s = 0; s < 200; ++s) {
    for (int e = 0; e < 1 + static_cast<int>(rng() % 9); ++e) {
      counts.add("s" + std::to_string(s), "E" + std::to_string(rng() % 50), 1 + rng() % 1000);
    }
  }
  for (const auto& [surface, row] : compute_wiki_prior(counts)) {
    double sum = 0.0;
    for (const auto& [title, p] : row) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-9) << surface;
  }
}

TEST(CombinePriors, AddsUniformDictionaryMassAndCaps) {
  WikiPrior wiki;
  wiki["belgrade"]["Belgrade"] = 0.8;
  wiki["belgrade"]["Belgrade_Fortress"] = 0.2;
  UniformDict dict;
  dict["belgrade"] = {"Belgrade", "Belgrade_(band)"};
  dict["novi sad"] = {"Novi_Sad"};
  TitledPriors out = combine_priors(wiki, dict);
  ASSERT_EQ(out["belgrade"].size(), 3u);
  EXPECT_EQ(out["belgrade"][0], std::make_pair(std::string("Belgrade"), 1.0));  // 0.8 + 0.5 capped
  EXPECT_EQ(out["belgrade"][1], std::make_pair(std::string("Belgrade_(band)"), 0.5));
  EXPECT_EQ(out["belgrade"][2], std::make_pair(std::string("Belgrade_Fortress"), 0.2));
  EXPECT_EQ(out["novi sad"][0].second, 1.0);
}

TEST(CombinePriors, TruncatesAfterSorting) {
  WikiPrior wiki;
  for (int e = 0; e < 10; ++e) wiki["x"]["E" + std::to_string(e)] = (e + 1) / 55.0;
  TitledPriors out = combine_priors(wiki, {}, 3);
  ASSERT_EQ(out["x"].size(), 3u);
  EXPECT_EQ(out["x"][0].first, "E9");
  EXPECT_EQ(out["x"][2].first, "E7");
}

TEST(Redirects, ChainsCollapseAndCyclesAreReported) {
  std::istringstream in("Beograd\tBelgrade City\nBelgrade City\tBelgrade\nA\tB\nB\tA\n");
  RedirectTable t = read_redirects(in, "r.tsv");
  EXPECT_EQ(t.resolve("Beograd"), "Belgrade");
  EXPECT_EQ(t.resolve("Belgrade_City"), "Belgrade");
  EXPECT_EQ(t.resolve("Belgrade"), "Belgrade");
  EXPECT_EQ(t.cycles().size(), 2u);
  EXPECT_EQ(t.resolve("A"), "A");
}

TEST(Wikitext, ExtractsAnchorsAndResolvesRedirects) {
  RedirectTable redirects;
  redirects.add("Beograd", "Belgrade");
  redirects.close();
  std::istringstream in(
      "The capital [[Beograd|Belgrade]] hosted [[KK Crvena zvezda|Red Star]] and [[Belgrade]].\n"
      "[[File:Map.png|thumb]] [[Category:Cities]] [[broken link\n]] [[unterminated");
  AnchorCounts counts;
  parse_wikitext(in, redirects, counts);
  EXPECT_EQ(counts.counts.at({"belgrade", "Belgrade"}), 2u);
  EXPECT_EQ(counts.counts.at({"red star", "KK_Crvena_zvezda"}), 1u);
  EXPECT_EQ(counts.counts.size(), 2u);
  EXPECT_EQ(counts.warnings, 2u);
}

TEST(AnchorTsv, MalformedLinesNameTheLine) {
  std::istringstream in("belgrade\tBelgrade\t3\nbelgrade\tBelgrade\tzero\n");
  AnchorCounts counts;
  try {
    parse_anchor_tsv(in, "a.tsv", RedirectTable{}, counts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_NE(std::string(e.what()).find("a.tsv:2"), std::string::npos);
  }
}

TEST(AnchorCorpora, MergeIsOrderIndependent) {
  TempDir dir;
  std::ofstream(dir / "a.tsv") << "x\tA\t3\ny\tB\t1\n";
  std::ofstream(dir / "b.txt") << "[[A|x]] [[C|y]] [[A|x]]";
  std::ofstream(dir / "c.tsv") << "x\tC\t5\n";
  auto forward = parse_anchor_corpora({dir / "a.tsv", dir / "b.txt", dir / "c.tsv"}, RedirectTable{});
  auto backward = parse_anchor_corpora({dir / "c.tsv", dir / "b.txt", dir / "a.tsv"}, RedirectTable{});
  EXPECT_EQ(forward.counts, backward.counts);
  EXPECT_EQ(forward.counts.at({"x", "A"}), 5u);
}

TEST(AnchorCorpora, MissingFileIsReported) {
  try {
    parse_anchor_corpora({"/nonexistent/anchors.tsv"}, RedirectTable{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}

TEST(BuildStore, DropsEntitiesWithoutEmbeddings) {
  EmbeddingPair emb;
  emb.words.dim = emb.entities.dim = 2;
  emb.words.add("belgrade", std::vector<float>{1, 0});
  emb.entities.add("Belgrade", std::vector<float>{0, 1});
  TitledPriors priors;
  priors["belgrade"] = {{"Belgrade", 0.8}, {"Belgrade_Fortress", 0.2}};
  priors["ghost"] = {{"Ghost", 1.0}};
  BuildReport report;
  KnowledgeStore store = KnowledgeStore::from_bytes(build_store_bytes(emb, priors, report));
  EXPECT_EQ(report.dropped_entities, 2u);
  EXPECT_EQ(report.dropped_entries, 2u);
  EXPECT_EQ(report.surfaces, 1u);
  ASSERT_EQ(store.lookup_prior("belgrade").size(), 1u);
  EXPECT_EQ(store.lookup_prior("belgrade")[0].prior, 0.8);
  EXPECT_TRUE(store.lookup_prior("ghost").empty());
}

TEST(BuildStore, EmptyResultIsAnError) {
  EmbeddingPair emb;
  emb.words.dim = emb.entities.dim = 2;
  TitledPriors priors;
  priors["ghost"] = {{"Ghost", 1.0}};
  BuildReport report;
  try {
    build_store_bytes(emb, priors, report);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyStore);
  }
}
