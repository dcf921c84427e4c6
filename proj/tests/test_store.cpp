#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "relink/error.hpp"
#include "relink/store.hpp"
#include "test_support.hpp"

using namespace relink;
using relink::testing::TempDir;

namespace {

StoreContents random_contents(std::uint64_t seed, std::size_t words, std::size_t entities, std::size_t surfaces, std::size_t dim) {
  std::mt19937_64 rng(seed);
  StoreContents c;
  c.words.dim = dim;
  c.entities.dim = dim;
  for (std::size_t i = 0; i < words; ++i) c.words.add("tok" + std::to_string(i), relink::testing::random_vector(rng, dim));
  for (std::size_t i = 0; i < entities; ++i) c.entities.add("Entity_" + std::to_string(i), relink::testing::random_vector(rng, dim));
  std::uniform_int_distribution<std::size_t> pick(0, entities - 1);
  std::uniform_int_distribution<std::size_t> width(1, 12);
  std::uniform_real_distribution<double> prob(1e-6, 1.0);
  for (std::size_t s = 0; s < surfaces; ++s) {
    auto& list = c.priors["surface " + std::to_string(s)];
    std::vector<std::size_t> used;
    for (std::size_t k = width(rng); k > 0; --k) {
      std::size_t e = pick(rng);
      if (std::find(used.begin(), used.end(), e) != used.end()) continue;
      used.push_back(e);
      list.emplace_back("Entity_" + std::to_string(e), prob(rng));
    }
  }
  return c;
}

std::vector<PriorEntry> expected_entries(const KnowledgeStore& store, const std::vector<std::pair<std::string, double>>& list) {
  std::vector<PriorEntry> out;
  for (const auto& [title, p] : list) out.push_back(PriorEntry{*store.entity_id(title), 0, p});
  std::sort(out.begin(), out.end(), [](const PriorEntry& a, const PriorEntry& b) {
    return a.prior != b.prior ? a.prior > b.prior : a.entity < b.entity;
  });
  if (out.size() > kMaxCandidatesStored) out.resize(kMaxCandidatesStored);
  return out;
}

void expect_same_contents(const KnowledgeStore& store, const StoreContents& c) {
  ASSERT_EQ(store.word_count(), c.words.size());
  ASSERT_EQ(store.entity_count(), c.entities.size());
  for (std::size_t i = 0; i < c.words.size(); ++i) {
    auto v = store.word_vector(c.words.tokens[i]);
    ASSERT_TRUE(v.has_value()) << c.words.tokens[i];
    ASSERT_EQ(std::memcmp(v->data(), c.words.row(i).data(), c.words.dim * sizeof(float)), 0);
  }
  for (std::size_t i = 0; i < c.entities.size(); ++i) {
    auto id = store.entity_id(c.entities.tokens[i]);
    ASSERT_TRUE(id.has_value());
    EXPECT_EQ(store.entity_title(*id), c.entities.tokens[i]);
    auto v = store.entity_vector(*id);
    ASSERT_EQ(std::memcmp(v->data(), c.entities.row(i).data(), c.entities.dim * sizeof(float)), 0);
  }
  for (const auto& [surface, list] : c.priors) {
    auto got = store.lookup_prior(surface);
    auto want = expected_entries(store, list);
    ASSERT_EQ(got.size(), want.size()) << surface;
    for (std::size_t k = 0; k < want.size(); ++k) {
      EXPECT_EQ(got[k].entity, want[k].entity);
      EXPECT_EQ(got[k].prior, want[k].prior);  // exact
    }
  }
}

}  // namespace

TEST(Store, RoundTripThousandTokenFixture) {
  TempDir dir;
  StoreContents c = random_contents(11, 1000, 300, 400, 16);
  write_store(dir / "s.rel", c);
  for (LoadMode mode : {LoadMode::OnDemand, LoadMode::Preload}) {
    KnowledgeStore store = KnowledgeStore::open(dir / "s.rel", mode);
    EXPECT_EQ(store.version(), kStoreVersion);
    EXPECT_EQ(store.dim(), 16u);
    EXPECT_EQ(store.surface_count(), 400u);
    expect_same_contents(store, c);
  }
}

TEST(Store, LookupNormalizesSurface) {
  StoreContents c = random_contents(3, 10, 10, 5, 4);
  KnowledgeStore store = KnowledgeStore::from_bytes(serialize_store(c));
  EXPECT_FALSE(store.lookup_prior("  SURFACE   1 ").empty());
  EXPECT_TRUE(store.lookup_prior("no such surface").empty());
  EXPECT_FALSE(store.word_vector("unknown").has_value());
  EXPECT_FALSE(store.entity_vector(static_cast<EntityId>(c.entities.size())).has_value());
}

TEST(Store, CaseSensitiveStoreKeepsCase) {
  relink::testing::ToyStore s(2);
  s.entity("Apple_Inc", {1, 0}).entity("Apple", {0, 1});
  s.prior("Apple", "Apple_Inc", 1.0).prior("apple", "Apple", 1.0);
  s.contents.case_sensitive = true;
  KnowledgeStore store = s.build();
  EXPECT_TRUE(store.case_sensitive());
  EXPECT_EQ(store.entity_title(store.lookup_prior("Apple")[0].entity), "Apple_Inc");
  EXPECT_EQ(store.entity_title(store.lookup_prior("apple")[0].entity), "Apple");
}

TEST(Store, EntriesAreTruncatedToOneHundred) {
  relink::testing::ToyStore s(1);
  for (int e = 0; e < 150; ++e) {
    s.entity("E" + std::to_string(e), {static_cast<float>(e)});
    s.prior("x", "E" + std::to_string(e), (e + 1) / 200.0);
  }
  KnowledgeStore store = s.build();
  auto entries = store.lookup_prior("x");
  ASSERT_EQ(entries.size(), kMaxCandidatesStored);
  EXPECT_DOUBLE_EQ(entries.front().prior, 150 / 200.0);
  for (std::size_t k = 1; k < entries.size(); ++k) EXPECT_GE(entries[k - 1].prior, entries[k].prior);
}

TEST(Store, OutputIndependentOfInputOrder) {
  StoreContents a = random_contents(5, 200, 50, 60, 8);
  StoreContents b;
  b.words.dim = b.entities.dim = 8;
  std::mt19937_64 rng(99);
  auto permuted = [&](const EmbeddingTable& t, EmbeddingTable& out) {
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) out.add(t.tokens[i], t.row(i));
  };
  permuted(a.words, b.words);
  permuted(a.entities, b.entities);
  for (auto [surface, list] : a.priors) {
    std::shuffle(list.begin(), list.end(), rng);
    b.priors[surface] = list;
  }
  EXPECT_EQ(serialize_store(a), serialize_store(b));
}

TEST(Store, RejectsPriorWithoutEmbedding) {
  relink::testing::ToyStore s(2);
  s.entity("A", {1, 0}).prior("a", "Missing", 0.5);
  EXPECT_THROW(s.build(), Error);
}

TEST(Store, RejectsPriorOutsideUnitInterval) {
  relink::testing::ToyStore s(2);
  s.entity("A", {1, 0}).prior("a", "A", 1.5);
  EXPECT_THROW(s.build(), Error);
  relink::testing::ToyStore z(2);
  z.entity("A", {1, 0}).prior("a", "A", 0.0);
  EXPECT_THROW(z.build(), Error);
}

TEST(Store, CorruptFilesAreRejected) {
  StoreContents c = random_contents(8, 20, 10, 10, 4);
  auto good = serialize_store(c);
  auto expect_corrupt = [](std::vector<std::byte> bytes) {
    try {
      KnowledgeStore::from_bytes(std::move(bytes));
      ADD_FAILURE() << "corrupt store accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptStore);
    }
  };
  auto bad_magic = good;
  bad_magic[0] = std::byte{'X'};
  expect_corrupt(bad_magic);
  auto bad_version = good;
  bad_version[8] = std::byte{9};
  expect_corrupt(bad_version);
  for (std::size_t cut : {std::size_t{0}, std::size_t{64}, std::size_t{127}, good.size() / 2, good.size() - 8}) {
    expect_corrupt(std::vector<std::byte>(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut)));
  }
  // A section offset pointing past the end of the file.
  auto bad_offset = good;
  std::uint64_t huge = good.size() * 4;
  std::memcpy(bad_offset.data() + 80, &huge, sizeof(huge));
  expect_corrupt(bad_offset);
}

TEST(Store, RandomHeaderDamageNeverCrashes) {
  StoreContents c = random_contents(9, 20, 10, 10, 4);
  auto good = serialize_store(c);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    auto bytes = good;
    std::size_t pos = std::uniform_int_distribution<std::size_t>(0, 127)(rng);
    bytes[pos] = static_cast<std::byte>(rng() & 0xff);
    try {
      KnowledgeStore s = KnowledgeStore::from_bytes(std::move(bytes));
      for (std::size_t i = 0; i < s.surface_count(); ++i) (void)s.entries_at(i);
    } catch (const Error&) {
    }
  }
}

TEST(Store, MissingFile) {
  try {
    KnowledgeStore::open("/nonexistent/store.rel");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}

TEST(VectorText, ParsesTokensWithSpaces) {
  std::istringstream in("2 3\nnew york 0.5 1 -2\nENTITY/New_York 1e-3 0 3.25\n");
  EmbeddingTable t = read_vector_text(in, "v.txt");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.tokens[0], "new york");
  EXPECT_EQ(t.row(0)[2], -2.0f);
  EmbeddingPair p = split_embeddings(std::move(t));
  EXPECT_EQ(p.words.size(), 1u);
  ASSERT_EQ(p.entities.size(), 1u);
  EXPECT_EQ(p.entities.tokens[0], "New_York");
}

TEST(VectorText, ReportsLineNumbers) {
  std::istringstream in("2 2\na 1 2\nb 1 x\n");
  try {
    read_vector_text(in, "v.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(VectorText, RejectsDuplicates) {
  std::istringstream in("2 1\na 1\na 2\n");
  try {
    read_vector_text(in, "v.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateToken);
  }
}

TEST(VectorText, DimensionMismatchAcrossFiles) {
  TempDir dir;
  std::ofstream(dir / "w.vec") << "1 2\nword 1 2\n";
  std::ofstream(dir / "e.vec") << "1 3\nENTITY/X 1 2 3\n";
  try {
    ingest_embeddings(dir / "w.vec", dir / "e.vec");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Store, OnDemandOpenTouchesFewPages) {
  // ~110 MB of word vectors; only a handful of rows are read.
  TempDir dir;
  const std::size_t dim = 300;
  const std::size_t words = 92000;
  {
    StoreContents c;
    c.words.dim = c.entities.dim = dim;
    c.words.tokens.reserve(words);
    c.words.values.resize(words * dim);
    for (std::size_t i = 0; i < words; ++i) {
      c.words.tokens.push_back("w" + std::to_string(i));
      for (std::size_t k = 0; k < dim; ++k) c.words.values[i * dim + k] = static_cast<float>((i + k) % 97) / 97.0f;
    }
    c.entities.add("E", std::vector<float>(dim, 1.0f));
    c.priors["e"].emplace_back("E", 1.0);
    write_store(dir / "big.rel", c);
  }
  const std::size_t file_size = std::filesystem::file_size(dir / "big.rel");
  ASSERT_GE(file_size, 100u << 20);
  // Start cold: a freshly written file sits in the page cache and fault-around
  // would map cached neighbours of every touched page.
  relink::testing::drop_page_cache(dir / "big.rel");
  const std::size_t before = relink::testing::resident_bytes();
  KnowledgeStore store = KnowledgeStore::open(dir / "big.rel", LoadMode::OnDemand);
  double sink = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    auto v = store.word_vector("w" + std::to_string((i * 7919) % words));
    ASSERT_TRUE(v.has_value());
    sink += (*v)[0];
  }
  const std::size_t after = relink::testing::resident_bytes();
  EXPECT_GT(sink, 0.0);
  const std::size_t growth = after > before ? after - before : 0;
  RecordProperty("resident_growth", std::to_string(growth));
  EXPECT_LT(growth, file_size / 10) << "resident growth " << growth << " of " << file_size;
}
