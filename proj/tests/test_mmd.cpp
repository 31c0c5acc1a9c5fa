#include <gtest/gtest.h>

#include <random>

#include "lime_shift/mmd.hpp"
#include "oracles.hpp"

using namespace lime_shift;

namespace {

SampleSet gaussian(std::mt19937_64& rng, std::size_t m, std::size_t dim, double shift = 0.0,
                   std::size_t shifted_coords = 0) {
  std::normal_distribution<double> g(0.0, 1.0);
  SampleSet out;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> d(dim);
    for (std::size_t k = 0; k < dim; ++k) d[k] = g(rng) + (k < shifted_coords ? shift : 0.0);
    out.push_back(SparseVector::from_dense(d));
  }
  return out;
}

oracle::DenseSet dense(const SampleSet& s) {
  oracle::DenseSet out;
  for (const auto& v : s) out.push_back(v.to_dense());
  return out;
}

}  // namespace

TEST(MmdBiased, IdenticalSamplesGiveZero) {
  std::mt19937_64 rng(1);
  auto x = gaussian(rng, 10, 3);
  EXPECT_EQ(mmd_biased(x, x, KernelSpec::rbf(0.5)), 0.0);
  EXPECT_EQ(mmd_biased(x, x, KernelSpec::cosine()), 0.0);
}

TEST(MmdBiased, OrthogonalSingletonsGiveSqrtTwo) {
  SampleSet x = {SparseVector::from_dense(std::vector<double>{1.0, 0.0})};
  SampleSet y = {SparseVector::from_dense(std::vector<double>{0.0, 1.0})};
  EXPECT_NEAR(mmd_biased(x, y, KernelSpec::cosine()), 1.4142136, 1e-7);
}

TEST(MmdBiased, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(8);
  auto x = gaussian(rng, 8, 4);
  auto y = gaussian(rng, 8, 4, 0.5, 2);
  const double expected =
      oracle::mmd_biased(dense(x), dense(y), [](const auto& a, const auto& b) { return oracle::rbf(a, b, 0.5); });
  EXPECT_NEAR(mmd_biased(x, y, KernelSpec::rbf(0.5)), expected, 1e-10);
}

TEST(MmdBiased, OracleEquivalenceProperty) {
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<std::size_t> msize(1, 20), dsize(1, 10);
  for (int t = 0; t < 120; ++t) {
    const std::size_t m = msize(rng), d = dsize(rng);
    auto x = gaussian(rng, m, d);
    auto y = gaussian(rng, m, d, 0.7, d / 2);
    const double got_rbf = mmd_biased(x, y, KernelSpec::rbf(0.4));
    const double got_cos = mmd_biased(x, y, KernelSpec::cosine());
    ASSERT_NEAR(got_rbf, oracle::mmd_biased(dense(x), dense(y), [](const auto& a, const auto& b) {
                  return oracle::rbf(a, b, 0.4);
                }),
                1e-10);
    ASSERT_NEAR(got_cos, oracle::mmd_biased(dense(x), dense(y), oracle::cosine), 1e-10);
    ASSERT_NEAR(got_rbf, mmd_biased(y, x, KernelSpec::rbf(0.4)), 1e-12);
    ASSERT_LE(got_cos, 2.0 + 1e-9);
    ASSERT_LE(got_rbf, 2.0 + 1e-9);
  }
}

TEST(MmdBiased, UnequalSizesAreRejected) {
  std::mt19937_64 rng(2);
  auto x = gaussian(rng, 5, 2);
  auto y = gaussian(rng, 6, 2);
  EXPECT_THROW(mmd_biased(x, y, KernelSpec::cosine()), ContractViolation);
}

TEST(MmdThreshold, ClosedFormValues) {
  EXPECT_NEAR(mmd_threshold(200, 0.05, 1.0), 0.3447747, 1e-6);
  EXPECT_NEAR(mmd_threshold(50, 0.05, 1.0), 0.6895494, 1e-6);
  EXPECT_NEAR(mmd_threshold(4 * 37, 0.1, 1.0), 0.5 * mmd_threshold(37, 0.1, 1.0), 1e-12);
}

TEST(MmdThreshold, StrictlyDecreasingInSampleSize) {
  double prev = mmd_threshold(1, 0.05, 1.0);
  for (std::size_t m = 2; m <= 1000; ++m) {
    const double t = mmd_threshold(m, 0.05, 1.0);
    ASSERT_LT(t, prev) << m;
    prev = t;
  }
}

TEST(MmdThreshold, StrictlyDecreasingInAlpha) {
  EXPECT_GT(mmd_threshold(50, 0.01, 1.0), mmd_threshold(50, 0.05, 1.0));
  EXPECT_GT(mmd_threshold(50, 0.05, 1.0), mmd_threshold(50, 0.5, 1.0));
}

TEST(MmdThreshold, RejectsBadAlpha) {
  EXPECT_THROW(mmd_threshold(10, 0.0, 1.0), ContractViolation);
  EXPECT_THROW(mmd_threshold(10, 1.0, 1.0), ContractViolation);
  EXPECT_THROW(mmd_threshold(0, 0.05, 1.0), ContractViolation);
}

TEST(TwoSampleTest, IdenticalSamplesNeverReject) {
  std::mt19937_64 rng(3);
  auto x = gaussian(rng, 30, 4);
  auto r = two_sample_test(x, x, KernelSpec::rbf(0.2), 0.05);
  EXPECT_FALSE(r.reject);
  EXPECT_EQ(r.mmd_b, 0.0);
}

TEST(TwoSampleTest, FarApartClustersReject) {
  SampleSet x(100, SparseVector::from_dense(std::vector<double>{0.0}));
  SampleSet y(100, SparseVector::from_dense(std::vector<double>{10.0}));
  auto r = two_sample_test(x, y, KernelSpec::rbf(1.0), 0.05);
  EXPECT_NEAR(r.mmd_b, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(r.threshold, 0.4876, 1e-4);
  EXPECT_TRUE(r.reject);
  EXPECT_NEAR(r.scaled_stat, 100.0 * r.mmd_b * r.mmd_b, 1e-12);
  EXPECT_EQ(r.m, 100u);
}

TEST(TwoSampleTest, SameDistributionRarelyRejects) {
  int rejects = 0;
  for (int rep = 0; rep < 200; ++rep) {
    std::mt19937_64 rng(1000 + rep);
    auto x = gaussian(rng, 100, 20);
    auto y = gaussian(rng, 100, 20);
    rejects += two_sample_test_resolving(x, y, KernelSpec::rbf_median_heuristic(), 0.05).reject ? 1 : 0;
  }
  EXPECT_LE(rejects, 10);
}
