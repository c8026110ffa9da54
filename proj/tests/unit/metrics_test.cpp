#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fnegraph/metrics.hpp"
#include "oracles.hpp"

using namespace fnegraph;
using namespace fnegraph::metrics;

namespace {

ContingencyTable table(std::vector<std::vector<std::int64_t>> rows) {
  Matrix<std::int64_t> m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return make_table(std::move(m));
}

// Reference values computed independently with scikit-learn
// (mutual_info_score, normalized_mutual_info_score, adjusted_mutual_info_score
// with average_method="arithmetic") and frozen here.
constexpr double kMi31_04 = 0.38039566584857787;
constexpr double kNmi31_04 = 0.5615896365639194;
constexpr double kAmi31_04 = 0.5000871464055463;
constexpr double kEmi31_04 = 0.0833325884657441;
constexpr double kColEntropy31_04 = 0.6615632381579821;

}  // namespace

TEST(Contingency, PositionalLabels) {
  const std::vector<int> p = {1, 1, 0, 0, 0};
  const std::vector<std::string> t = {"a", "b", "a", "a", "b"};
  const auto c = build_contingency(p, t);
  EXPECT_EQ(c.counts, Matrix<std::int64_t>(2, 2, std::vector<std::int64_t>{2, 1, 1, 1}));
  EXPECT_EQ(c.total, 5);
}

TEST(Contingency, LengthMismatch) {
  try {
    build_contingency(std::vector<int>{1, 2}, std::vector<int>{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Contingency, UnknownImage) {
  const std::vector<std::pair<std::string, std::int64_t>> p = {{"a", 0}, {"zz", 1}};
  const std::map<std::string, std::string> truth = {{"a", "x"}, {"b", "y"}};
  try {
    build_contingency(std::span<const std::pair<std::string, std::int64_t>>(p), truth);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownImage);
  }
}

TEST(Entropy, Values) {
  const std::vector<std::int64_t> sums = {1, 3};
  EXPECT_NEAR(entropy(sums, 4), 0.5623351446188083, 1e-12);
  const std::vector<std::int64_t> one = {7};
  EXPECT_EQ(entropy(one, 7), 0.0);
}

TEST(Scores, ReferenceTable) {
  const auto t = table({{3, 1}, {0, 4}});
  EXPECT_NEAR(row_entropy(t), std::log(2.0), 1e-12);
  EXPECT_NEAR(col_entropy(t), kColEntropy31_04, 1e-12);
  EXPECT_NEAR(mutual_information(t), kMi31_04, 1e-12);
  EXPECT_NEAR(nmi(t), kNmi31_04, 1e-12);
  EXPECT_NEAR(expected_mutual_information(t), kEmi31_04, 1e-12);
  EXPECT_NEAR(ami(t), kAmi31_04, 1e-12);
}

TEST(Scores, IdenticalPartitions) {
  const auto t = table({{1, 0}, {0, 1}});
  EXPECT_NEAR(mutual_information(t), std::log(2.0), 1e-12);
  EXPECT_NEAR(expected_mutual_information(t), std::log(2.0), 1e-12);
  EXPECT_EQ(nmi(t), 1.0);
  EXPECT_EQ(ami(t), 1.0);

  const auto big = table({{5, 0, 0}, {0, 3, 0}, {0, 0, 4}});
  EXPECT_EQ(nmi(big), 1.0);
  EXPECT_EQ(ami(big), 1.0);
}

TEST(Scores, DegenerateConventions) {
  const auto both_single = table({{6}});
  EXPECT_EQ(nmi(both_single), 1.0);
  EXPECT_EQ(ami(both_single), 1.0);

  // One cluster against two classes: no information.
  const auto one_cluster = table({{3, 3}});
  EXPECT_EQ(nmi(one_cluster), 0.0);
  EXPECT_EQ(ami(one_cluster), 0.0);
  EXPECT_EQ(ami(transpose(one_cluster)), 0.0);
}

TEST(Scores, IndependentBalancedTable) {
  const auto t = table({{2, 2}, {2, 2}});
  EXPECT_NEAR(mutual_information(t), 0.0, 1e-15);
  EXPECT_NEAR(nmi(t), 0.0, 1e-15);
  EXPECT_LT(ami(t), 0.0);
}

TEST(ExpectedMutualInformation, MatchesExhaustivePermutations) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 7;  // up to 8
    std::vector<int> u(n), v(n);
    for (auto& x : u) x = static_cast<int>(rng() % 3);
    for (auto& x : v) x = static_cast<int>(rng() % 4);
    const auto t = build_contingency(u, v);
    EXPECT_NEAR(expected_mutual_information(t), oracle::exhaustive_expected_mi(u, v), 1e-9)
        << "n = " << n;
    EXPECT_NEAR(mutual_information(t), oracle::mutual_information(u, v), 1e-12);
  }
}

TEST(Scores, SymmetricAndLabelInvariant) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng() % 40;
    std::vector<int> u(n), v(n), u_renamed(n);
    for (auto& x : u) x = static_cast<int>(rng() % 4);
    for (auto& x : v) x = static_cast<int>(rng() % 3);
    for (std::size_t k = 0; k < n; ++k) u_renamed[k] = 100 - 7 * u[k];
    const auto t = build_contingency(u, v);
    EXPECT_NEAR(nmi(t), nmi(transpose(t)), 1e-12);
    EXPECT_NEAR(ami(t), ami(transpose(t)), 1e-12);
    const auto r = build_contingency(u_renamed, v);
    EXPECT_NEAR(nmi(t), nmi(r), 1e-12);
    EXPECT_NEAR(ami(t), ami(r), 1e-12);
    EXPECT_GE(nmi(t), 0.0);
    EXPECT_LE(nmi(t), 1.0);
    EXPECT_LE(ami(t), 1.0 + 1e-12);
  }
}

TEST(Scores, RandomLabelingsAreChanceCorrected) {
  std::mt19937 rng(99);
  double ami_sum = 0.0, nmi_sum = 0.0;
  const int runs = 50;
  for (int r = 0; r < runs; ++r) {
    std::vector<int> u(200), v(200);
    for (auto& x : u) x = static_cast<int>(rng() % 10);
    for (auto& x : v) x = static_cast<int>(rng() % 10);
    const auto t = build_contingency(u, v);
    ami_sum += ami(t);
    nmi_sum += nmi(t);
  }
  EXPECT_NEAR(ami_sum / runs, 0.0, 0.02);
  EXPECT_GT(nmi_sum / runs, 0.05);
}

TEST(LogFactorials, SmallValues) {
  const auto lf = log_factorials(5);
  EXPECT_EQ(lf[0], 0.0);
  EXPECT_EQ(lf[1], 0.0);
  EXPECT_NEAR(lf[5], std::log(120.0), 1e-12);
}

TEST(Contingency, HandExamples) {
  const std::vector<std::string> truth = {"a", "a", "b", "b"};
  EXPECT_EQ(build_contingency(std::vector<int>{0, 0, 1, 1}, truth).counts,
            Matrix<std::int64_t>(2, 2, std::vector<std::int64_t>{2, 0, 0, 2}));
  EXPECT_EQ(build_contingency(std::vector<int>{0, 1, 0, 1}, truth).counts,
            Matrix<std::int64_t>(2, 2, std::vector<std::int64_t>{1, 1, 1, 1}));
}

TEST(Entropy, SingleAndUniform) {
  const std::vector<std::int64_t> single = {4};
  const std::vector<std::int64_t> halves = {2, 2};
  EXPECT_EQ(entropy(single, 4), 0.0);
  EXPECT_NEAR(entropy(halves, 4), std::log(2.0), 1e-15);
}

TEST(Scores, DiagonalAndUniformTables) {
  EXPECT_NEAR(mutual_information(table({{2, 0}, {0, 2}})), std::log(2.0), 1e-15);
  EXPECT_NEAR(mutual_information(table({{1, 1}, {1, 1}})), 0.0, 1e-15);
}

TEST(ExpectedMutualInformation, SingleCellTableIsZero) {
  EXPECT_NEAR(expected_mutual_information(table({{9}})), 0.0, 1e-15);
}

TEST(Scores, AmiOfBalancedRandomPartitionsNearZero) {
  std::mt19937 rng(314);
  double sum = 0.0;
  for (int s = 0; s < 100; ++s) {
    std::vector<int> u(200), v(200);
    for (std::size_t k = 0; k < 200; ++k) {
      u[k] = static_cast<int>(k % 4);
      v[k] = static_cast<int>(k % 4);
    }
    std::shuffle(v.begin(), v.end(), rng);
    sum += ami(build_contingency(u, v));
  }
  EXPECT_LT(std::abs(sum / 100.0), 0.05);
}

TEST(Scores, AmiMatchesDefinitionWithExhaustiveExpectation) {
  const auto [u, v] = oracle::labels_from_table({{3, 1}, {0, 4}});
  const double emi = oracle::exhaustive_expected_mi(u, v);
  const double mi = oracle::mutual_information(u, v);
  const auto t = table({{3, 1}, {0, 4}});
  const double mean_h = 0.5 * (row_entropy(t) + col_entropy(t));
  EXPECT_NEAR(ami(t), (mi - emi) / (mean_h - emi), 1e-9);
}
