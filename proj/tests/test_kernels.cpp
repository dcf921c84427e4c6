#include <gtest/gtest.h>

#include <omp.h>

#include <cstring>
#include <random>

#include "relink/kernels.hpp"
#include "relink/pipeline.hpp"
#include "relink/synthetic.hpp"
#include "test_support.hpp"

using namespace relink;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct RowFixture {
  std::vector<std::vector<float>> storage;
  std::vector<std::span<const float>> rows;
};

RowFixture make_rows(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  RowFixture f;
  for (std::size_t r = 0; r < n; ++r) f.storage.push_back(relink::testing::random_vector(rng, d));
  for (const auto& s : f.storage) f.rows.emplace_back(s);
  return f;
}

class KernelThreads : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

}  // namespace

TEST_P(KernelThreads, AccumulateRowsBitwiseEqual) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {3u, 300u, 2000u}) {
    RowFixture f = make_rows(rng, n, 300);
    std::vector<double> s(300, 0.25), p(300, 0.25);
    kernels::serial::accumulate_rows(f.rows, s);
    kernels::parallel::accumulate_rows(f.rows, p);
    EXPECT_TRUE(bitwise_equal(s, p)) << n;
  }
}

TEST_P(KernelThreads, DotRowsBitwiseEqual) {
  std::mt19937_64 rng(2);
  for (std::size_t n : {5u, 400u, 4000u}) {
    RowFixture f = make_rows(rng, n, 300);
    std::vector<double> v(300);
    std::normal_distribution<double> normal;
    for (auto& x : v) x = normal(rng);
    std::vector<double> s(n), p(n);
    kernels::serial::dot_rows(f.rows, v, s);
    kernels::parallel::dot_rows(f.rows, v, p);
    EXPECT_TRUE(bitwise_equal(s, p)) << n;
  }
}

TEST_P(KernelThreads, BilinearDiagBitwiseEqual) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (auto [n, m, d] : {std::tuple{2u, 3u, 4u}, std::tuple{60u, 70u, 300u}}) {
    std::vector<double> a(n * d), b(m * d), w(d);
    for (auto& x : a) x = normal(rng);
    for (auto& x : b) x = normal(rng);
    for (auto& x : w) x = normal(rng);
    std::vector<double> s(n * m), p(n * m);
    kernels::serial::bilinear_diag(a, n, b, m, w, 0.5, s);
    kernels::parallel::bilinear_diag(a, n, b, m, w, 0.5, p);
    EXPECT_TRUE(bitwise_equal(s, p));
    // Direct formula.
    double want = 0.0;
    for (std::size_t c = 0; c < d; ++c) want += a[c] * w[c] * b[(m - 1) * d + c];
    EXPECT_DOUBLE_EQ(s[m - 1], want * 0.5);
  }
}

TEST_P(KernelThreads, BatchLinkingMatchesSerial) {
  EfficiencySizes sizes;
  sizes.documents = 12;
  sizes.dim = 16;
  sizes.entities = 400;
  sizes.vocab = 800;
  sizes.surfaces = 200;
  EfficiencyFixture fx = make_efficiency_fixture(5, sizes);
  KnowledgeStore store = KnowledgeStore::from_bytes(fx.store_bytes);
  EDModel model = relink::testing::random_model(16, 2, 8, 3, 9);
  Linker linker(store, model);
  auto serial = linker.link_batch_serial(fx.documents);
  auto parallel = linker.link_batch(fx.documents);
  ASSERT_EQ(serial.size(), parallel.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < serial.size(); ++i) {
    ASSERT_EQ(serial[i].annotations.size(), parallel[i].annotations.size());
    for (std::size_t k = 0; k < serial[i].annotations.size(); ++k) {
      const auto& x = serial[i].annotations[k];
      const auto& y = parallel[i].annotations[k];
      EXPECT_EQ(x.start, y.start);
      EXPECT_EQ(x.entity, y.entity);
      EXPECT_EQ(std::memcmp(&x.score, &y.score, sizeof(double)), 0);
    }
    total += serial[i].annotations.size();
  }
  EXPECT_GT(total, 0u);
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelThreads, ::testing::Values(1, 4));
