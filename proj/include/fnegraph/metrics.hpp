#pragma once

// Clustering agreement scores: mutual information, NMI (arithmetic-mean
// normalization) and AMI under the permutation model. Natural logarithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fnegraph/error.hpp"
#include "fnegraph/matrix.hpp"

namespace fnegraph::metrics {

/// Rows are predicted clusters, columns true classes.
struct ContingencyTable {
  Matrix<std::int64_t> counts;
  std::vector<std::int64_t> row_sums;
  std::vector<std::int64_t> col_sums;
  std::int64_t total = 0;
};

inline ContingencyTable make_table(Matrix<std::int64_t> counts) {
  ContingencyTable t;
  t.row_sums.assign(counts.rows(), 0);
  t.col_sums.assign(counts.cols(), 0);
  for (std::size_t i = 0; i < counts.rows(); ++i) {
    for (std::size_t j = 0; j < counts.cols(); ++j) {
      const auto n = counts(i, j);
      if (n < 0) throw Error(ErrorCode::SchemaError, "negative contingency count");
      t.row_sums[i] += n;
      t.col_sums[j] += n;
      t.total += n;
    }
  }
  t.counts = std::move(counts);
  return t;
}

inline ContingencyTable transpose(const ContingencyTable& t) {
  Matrix<std::int64_t> m(t.counts.cols(), t.counts.rows());
  for (std::size_t i = 0; i < t.counts.rows(); ++i) {
    for (std::size_t j = 0; j < t.counts.cols(); ++j) m(j, i) = t.counts(i, j);
  }
  return make_table(std::move(m));
}

/// Positional pairing: predicted[k] and truth[k] describe the same item.
/// Rows and columns follow the sorted order of the distinct labels.
template <typename P, typename T>
ContingencyTable build_contingency(std::span<const P> predicted, std::span<const T> truth) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(truth.size()) + " truth labels");
  }
  if (predicted.empty()) throw Error(ErrorCode::LengthMismatch, "no labels to score");
  std::map<P, std::size_t> rows;
  std::map<T, std::size_t> cols;
  for (const auto& p : predicted) rows.emplace(p, 0);
  for (const auto& t : truth) cols.emplace(t, 0);
  std::size_t k = 0;
  for (auto& [label, index] : rows) index = k++;
  k = 0;
  for (auto& [label, index] : cols) index = k++;

  Matrix<std::int64_t> counts(rows.size(), cols.size());
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    ++counts(rows[predicted[n]], cols[truth[n]]);
  }
  return make_table(std::move(counts));
}

template <typename P, typename T>
ContingencyTable build_contingency(const std::vector<P>& predicted, const std::vector<T>& truth) {
  return build_contingency(std::span<const P>(predicted), std::span<const T>(truth));
}

/// Pairing by image id. Every predicted id must have a truth label; truth
/// entries without a prediction are not scored.
inline ContingencyTable build_contingency(
    std::span<const std::pair<std::string, std::int64_t>> predicted,
    const std::map<std::string, std::string>& truth) {
  std::vector<std::int64_t> p;
  std::vector<std::string> t;
  p.reserve(predicted.size());
  t.reserve(predicted.size());
  for (const auto& [id, label] : predicted) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw Error(ErrorCode::UnknownImage, "no class label for '" + id + "'");
    p.push_back(label);
    t.push_back(it->second);
  }
  return build_contingency(p, t);
}

inline double entropy(std::span<const std::int64_t> sums, std::int64_t total) {
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto s : sums) {
    if (s <= 0) continue;
    const double p = static_cast<double>(s) / n;
    h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

inline double row_entropy(const ContingencyTable& t) { return entropy(t.row_sums, t.total); }
inline double col_entropy(const ContingencyTable& t) { return entropy(t.col_sums, t.total); }

inline double mutual_information(const ContingencyTable& t) {
  const double n = static_cast<double>(t.total);
  const double log_n = std::log(n);
  double mi = 0.0;
  for (std::size_t i = 0; i < t.counts.rows(); ++i) {
    for (std::size_t j = 0; j < t.counts.cols(); ++j) {
      const auto nij = t.counts(i, j);
      if (nij == 0) continue;
      const double c = static_cast<double>(nij);
      mi += c / n *
            (std::log(c) + log_n - std::log(static_cast<double>(t.row_sums[i])) -
             std::log(static_cast<double>(t.col_sums[j])));
    }
  }
  return std::max(mi, 0.0);
}

/// True when clusters and classes correspond one to one (every non-empty row
/// and column holds a single nonzero cell). MI equals both entropies then.
inline bool is_one_to_one(const ContingencyTable& t) {
  std::vector<int> per_col(t.counts.cols(), 0);
  for (std::size_t i = 0; i < t.counts.rows(); ++i) {
    int per_row = 0;
    for (std::size_t j = 0; j < t.counts.cols(); ++j) {
      if (t.counts(i, j) == 0) continue;
      ++per_row;
      ++per_col[j];
    }
    if (per_row > 1) return false;
  }
  return std::all_of(per_col.begin(), per_col.end(), [](int c) { return c <= 1; });
}

inline double nmi(const ContingencyTable& t) {
  if (is_one_to_one(t)) return 1.0;
  const double hr = row_entropy(t);
  const double hc = col_entropy(t);
  if (hr == 0.0 || hc == 0.0) return 0.0;  // one side is a single block
  const double mi = mutual_information(t);
  return std::clamp(2.0 * mi / (hr + hc), 0.0, 1.0);
}

/// ln(k!) for k = 0..n.
inline std::vector<double> log_factorials(std::int64_t n) {
  std::vector<double> lf(static_cast<std::size_t>(n) + 1, 0.0);
  for (std::int64_t k = 2; k <= n; ++k) {
    lf[k] = lf[k - 1] + std::log(static_cast<double>(k));
  }
  return lf;
}

/// E[MI] over all tables with the same marginals (hypergeometric model).
inline double expected_mutual_information(const ContingencyTable& t) {
  const std::int64_t n = t.total;
  const double nd = static_cast<double>(n);
  const auto lf = log_factorials(n);
  double emi = 0.0;
  for (const auto a : t.row_sums) {
    if (a == 0) continue;
    for (const auto b : t.col_sums) {
      if (b == 0) continue;
      const double fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
      const double log_ab = std::log(static_cast<double>(a)) + std::log(static_cast<double>(b));
      for (std::int64_t k = std::max<std::int64_t>(1, a + b - n); k <= std::min(a, b); ++k) {
        const double kd = static_cast<double>(k);
        const double term = kd / nd * (std::log(nd) + std::log(kd) - log_ab);
        const double log_p = fixed - lf[k] - lf[a - k] - lf[b - k] - lf[n - a - b + k];
        emi += term * std::exp(log_p);
      }
    }
  }
  return emi;
}

inline double ami(const ContingencyTable& t) {
  if (is_one_to_one(t)) return 1.0;
  const double hr = row_entropy(t);
  const double hc = col_entropy(t);
  if (hr == 0.0 || hc == 0.0) return 0.0;  // MI and E[MI] both vanish
  const double mi = mutual_information(t);
  const double emi = expected_mutual_information(t);
  const double mean_h = 0.5 * (hr + hc);
  const double numerator = mi - emi;
  double denominator = mean_h - emi;
  constexpr double eps = 1e-12;
  if (std::abs(denominator) <= eps * std::max(1.0, mean_h)) {
    if (std::abs(numerator) <= eps * std::max(1.0, mean_h)) return 1.0;
    denominator = denominator < 0.0 ? -eps : eps;
  }
  return numerator / denominator;
}

struct Scores {
  double nmi = 0.0;
  double ami = 0.0;
};

inline Scores score(const ContingencyTable& t) { return {nmi(t), ami(t)}; }

}  // namespace fnegraph::metrics
