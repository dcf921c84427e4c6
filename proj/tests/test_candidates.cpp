#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "relink/candidates.hpp"
#include "relink/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace relink;

using relink::testing::candidate_fixture;
using relink::testing::candidate_oracle;

TEST(Candidates, MatchBruteForceOracle) {
  auto f = candidate_fixture(17, 12);
  std::mt19937_64 rng(3);
  SelectionParams params;
  for (int trial = 0; trial < 1000; ++trial) {
    auto m = relink::testing::plant_mention(rng, f);
    Document doc(m.text);
    Span span{m.start, m.surface.size(), std::nullopt, std::nullopt};
    CandidateSet set = select_candidates(doc, span, f.store, params);
    auto want = candidate_oracle(doc, m.token, m.token + 1, m.surface, f.store, params);
    ASSERT_EQ(set.candidates.size(), want.size()) << "trial " << trial;
    ASSERT_LE(set.candidates.size(), 7u);
    for (std::size_t k = 0; k < want.size(); ++k) {
      EXPECT_EQ(set.candidates[k].entity, want[k].entity) << "trial " << trial << " slot " << k;
      EXPECT_EQ(set.candidates[k].prior, want[k].prior);
    }
  }
}

TEST(Candidates, UnknownSurfaceHasNoCandidates) {
  auto f = candidate_fixture(2, 4);
  Document doc("nothing to see here");
  EXPECT_TRUE(select_candidates(doc, Span{0, 7, {}, {}}, f.store).candidates.empty());
}

TEST(Candidates, FewEntriesAreAllKept) {
  relink::testing::ToyStore s(2);
  s.entity("A", {1, 0}).entity("B", {0, 1});
  s.prior("x", "A", 0.3).prior("x", "B", 0.7);
  KnowledgeStore store = s.build();
  auto set = select_candidates(Document("x y"), Span{0, 1, {}, {}}, store);
  ASSERT_EQ(set.candidates.size(), 2u);
  EXPECT_EQ(store.entity_title(set.candidates[0].entity), "B");
}

TEST(Candidates, ContextWindowSplitsAroundMention) {
  std::string text;
  for (int i = 0; i < 20; ++i) text += "t" + std::to_string(i) + " ";
  Document doc(text);
  // Mention is token 10 ("t10" starts at 3*10 - 10 + ...); locate it.
  const Token& mention = doc.tokens()[10];
  auto ctx = extract_context(doc, Span{mention.start, mention.length, {}, {}}, 6);
  EXPECT_EQ(ctx, (std::vector<std::size_t>{7, 8, 9, 11, 12, 13}));
  auto odd = extract_context(doc, Span{mention.start, mention.length, {}, {}}, 5);
  EXPECT_EQ(odd, (std::vector<std::size_t>{8, 9, 11, 12, 13}));
  auto edge = extract_context(doc, Span{0, 2, {}, {}}, 6);
  EXPECT_EQ(edge, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Candidates, WordLookupFallsBackToLowercase) {
  relink::testing::ToyStore s(1);
  s.word("paris", {2.0f}).word("Texas", {3.0f}).entity("P", {1.0f}).prior("paris", "P", 1.0);
  KnowledgeStore store = s.build();
  EXPECT_EQ((*lookup_word(store, "Paris"))[0], 2.0f);
  EXPECT_EQ((*lookup_word(store, "Texas"))[0], 3.0f);
  EXPECT_FALSE(lookup_word(store, "texas").has_value());
}

TEST(Candidates, ParamsAreValidated) {
  EXPECT_THROW((SelectionParams{0, 3, 30, 50}.validate()), Error);
  EXPECT_THROW((SelectionParams{4, 3, 5, 50}.validate()), Error);
  EXPECT_NO_THROW(SelectionParams{}.validate());
}
