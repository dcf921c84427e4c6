#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "relink/error.hpp"
#include "relink/synthetic.hpp"
#include "relink/text.hpp"
#include "relink/training.hpp"
#include "test_support.hpp"

using namespace relink;

namespace {

double naive_hinge(const std::vector<std::vector<double>>& scores, const std::vector<std::optional<std::size_t>>& gold, double margin) {
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!gold[i]) continue;
    for (std::size_t e = 0; e < scores[i].size(); ++e) {
      if (e != *gold[i]) loss += std::max(0.0, margin - scores[i][*gold[i]] + scores[i][e]);
    }
  }
  return loss;
}

std::vector<double> flatten(const EDParams& p) {
  std::vector<double> out;
  p.for_each_tensor([&](std::string_view, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); });
  return out;
}

}  // namespace

TEST(MarginLoss, HingeCases) {
  std::vector<std::vector<double>> scores = {{2.0, 0.5}};
  std::vector<std::optional<std::size_t>> gold = {0};
  EXPECT_DOUBLE_EQ(margin_loss(scores, gold, 0.9), 0.0);
  scores = {{1.0, 1.0}};
  EXPECT_DOUBLE_EQ(margin_loss(scores, gold, 0.9), 0.9);
}

TEST(MarginLoss, MatchesNaiveSumAndFiniteDifferences) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> scores;
    std::vector<std::optional<std::size_t>> gold;
    for (std::size_t i = 0; i < 1 + rng() % 5; ++i) {
      std::vector<double> s(1 + rng() % 6);
      for (auto& x : s) x = normal(rng);
      gold.push_back(rng() % 4 == 0 ? std::nullopt : std::optional<std::size_t>(rng() % s.size()));
      scores.push_back(std::move(s));
    }
    std::vector<std::vector<double>> grads;
    const double loss = margin_loss(scores, gold, 0.9, &grads);
    EXPECT_NEAR(loss, naive_hinge(scores, gold, 0.9), 1e-12);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      for (std::size_t a = 0; a < scores[i].size(); ++a) {
        auto up = scores;
        auto down = scores;
        up[i][a] += 1e-6;
        down[i][a] -= 1e-6;
        const double numeric = (naive_hinge(up, gold, 0.9) - naive_hinge(down, gold, 0.9)) / 2e-6;
        EXPECT_NEAR(grads[i][a], numeric, 1e-4);
      }
    }
  }
}

TEST(Adam, MatchesReferenceUpdate) {
  EDHyperParams h;
  h.dim = 2;
  h.relations = 1;
  h.scorer_hidden = 1;
  EDParams p = EDParams::initialize(h, 3);
  EDParams g = EDParams::zeros(h);
  g.local_diag = {0.5, -2.0};
  const auto before = flatten(p);
  Adam adam(p, 0.9, 0.999, 1e-8);
  adam.step(p, g, 0.01);
  // First bias-corrected step moves each coordinate by lr * sign(g).
  EXPECT_NEAR(p.local_diag[0], before[2] - 0.01, 1e-9);
  EXPECT_NEAR(p.local_diag[1], before[3] + 0.01, 1e-9);
  EXPECT_EQ(p.attention_diag[0], before[0]);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  EDHyperParams h;
  h.dim = 4;
  EDParams p = EDParams::initialize(h, 5);
  const auto before = flatten(p);
  Adam adam(p, 0.9, 0.999, 1e-8);
  adam.step(p, EDParams::zeros(h), 1e-3);
  EXPECT_EQ(flatten(p), before);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr_reduced = 1e-2;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.f1_switch = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Synthetic, CorpusIsReproducibleAndWellFormed) {
  SyntheticCorpus a = make_synthetic_corpus(7);
  SyntheticCorpus b = make_synthetic_corpus(7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.store_bytes, b.store_bytes);
  EXPECT_EQ(a.train.size(), 200u);
  EXPECT_EQ(a.val.size(), 50u);
  for (const auto& [surface, list] : a.priors) {
    double sum = 0.0;
    for (const auto& [title, p] : list) {
      EXPECT_GT(p, 0.0);
      EXPECT_LE(p, 1.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9) << surface;
  }
  for (const auto& doc : a.train) {
    EXPECT_GE(doc.mentions.size(), 2u);
    EXPECT_LE(doc.mentions.size(), 8u);
  }
  SyntheticSizes bad;
  bad.entities = 101;
  EXPECT_THROW(make_synthetic_corpus(1, bad), Error);
}

TEST(Synthetic, PlantedStructureDeterminesGold) {
  // Majority topic cluster of the document picks the gold entity among the
  // surface's candidates.
  SyntheticCorpus c = make_synthetic_corpus(11);
  std::size_t right = 0;
  std::size_t total = 0;
  for (const auto& doc : c.val) {
    std::map<std::size_t, int> votes;
    for (const auto& tok : tokenize(doc.text)) {
      auto it = c.topic_word_cluster.find(tok.text);
      if (it != c.topic_word_cluster.end()) ++votes[it->second];
    }
    std::size_t cluster = 0;
    int best = -1;
    for (auto [k, v] : votes) {
      if (v > best) {
        best = v;
        cluster = k;
      }
    }
    Document parsed(doc.text);
    for (const auto& m : doc.mentions) {
      const std::string surface = normalize_surface(parsed.substring(m.start, m.length));
      std::string guess;
      for (const auto& e : c.surface_entities.at(surface)) {
        if (c.entity_cluster.at(e) == cluster) guess = e;
      }
      right += guess == m.entity ? 1 : 0;
      ++total;
    }
  }
  EXPECT_EQ(right, total);
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  SyntheticCorpus c = make_synthetic_corpus(2);
  KnowledgeStore store = KnowledgeStore::from_bytes(c.store_bytes);
  EDHyperParams h;
  h.dim = store.dim();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 4;
  TrainResult r = train(c.train, c.val, store, h, cfg);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(flatten(r.model.params), flatten(EDParams::initialize(h, 4)));
}

TEST(Train, RejectsEmptyInputAndWrongDim) {
  SyntheticCorpus c = make_synthetic_corpus(2);
  KnowledgeStore store = KnowledgeStore::from_bytes(c.store_bytes);
  EDHyperParams h;
  h.dim = store.dim();
  try {
    train({}, c.val, store, h, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTrainingSet);
  }
  h.dim = store.dim() + 1;
  try {
    train(c.train, c.val, store, h, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Train, LearnsSyntheticCorpusDeterministically) {
  SyntheticCorpus c = make_synthetic_corpus(1);
  KnowledgeStore store = KnowledgeStore::from_bytes(c.store_bytes);
  EDHyperParams h;
  h.dim = store.dim();
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 1;
  std::size_t callbacks = 0;
  TrainResult r = train(c.train, c.val, store, h, cfg, {}, [&](const EpochRecord&) { ++callbacks; });
  ASSERT_EQ(r.history.size(), 6u);
  EXPECT_EQ(callbacks, 6u);
  ASSERT_TRUE(r.best_epoch.has_value());
  EXPECT_GE(r.history[*r.best_epoch - 1].val_micro_f1, 0.95);
  ASSERT_TRUE(r.switch_epoch.has_value());
  EXPECT_TRUE(r.history[*r.switch_epoch - 1].lr_switched);
  for (const auto& e : r.history) EXPECT_EQ(e.lr, e.epoch <= *r.switch_epoch ? cfg.lr_initial : cfg.lr_reduced);
  EXPECT_TRUE(r.calibrated);

  auto preds = predict_gold_spans(c.val, store, r.model);
  std::vector<std::vector<GoldMention>> golds;
  for (const auto& d : c.val) golds.push_back(d.mentions);
  EXPECT_GE(score_ed(preds, golds).micro_f1, 0.95);

  TrainResult again = train(c.train, c.val, store, h, cfg);
  EXPECT_EQ(flatten(again.model.params), flatten(r.model.params));
  for (std::size_t i = 0; i < r.history.size(); ++i) EXPECT_EQ(again.history[i].train_loss, r.history[i].train_loss);
}

TEST(Train, PatienceStopsEarly) {
  SyntheticCorpus c = make_synthetic_corpus(1);
  KnowledgeStore store = KnowledgeStore::from_bytes(c.store_bytes);
  EDHyperParams h;
  h.dim = store.dim();
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.patience = 2;
  TrainResult r = train(c.train, c.val, store, h, cfg);
  EXPECT_LT(r.history.size(), 30u);
}

TEST(Synthetic, EfficiencyFixtureMatchesProfile) {
  EfficiencyFixture fx = make_efficiency_fixture(8);
  ASSERT_EQ(fx.documents.size(), 50u);
  KnowledgeStore store = KnowledgeStore::from_bytes(fx.store_bytes);
  EXPECT_EQ(store.dim(), 300u);
  std::vector<double> words, mentions;
  for (std::size_t i = 0; i < fx.documents.size(); ++i) {
    words.push_back(static_cast<double>(tokenize(fx.documents[i]).size()));
    EXPECT_GT(words.back(), 200.0);
    mentions.push_back(static_cast<double>(fx.planted_mentions[i]));
  }
  MeanSd w = mean_sd(words);
  MeanSd m = mean_sd(mentions);
  EXPECT_NEAR(w.mean, 323.0, 3.0);
  EXPECT_NEAR(w.sd, 105.0, 10.0);
  EXPECT_NEAR(m.mean, 42.0, 2.0);
  EXPECT_NEAR(m.sd, 19.0, 4.0);
  std::size_t wide = 0;
  for (std::size_t s = 0; s < store.surface_count(); ++s) wide += store.entries_at(s).size() > 7 ? 1 : 0;
  EXPECT_GT(wide, 0u);
}
