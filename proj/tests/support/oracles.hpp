#pragma once

// Independent reference implementations used only by the tests. None of
// these call into the code paths they are compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "fnegraph/tensor_io.hpp"

namespace oracle {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static int counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("fnegraph-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++) + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string name(char kind, std::size_t index) {
  return std::string(1, kind) + ":" + std::to_string(index);
}

inline std::string edge(const std::string& a, const std::string& b) {
  return a < b ? a + " " + b : b + " " + a;
}

/// Image-feature edges by a direct scan of a row-major ternary matrix.
inline std::set<std::string> scan_image_feature(const std::vector<int>& cells, std::size_t rows,
                                                std::size_t cols) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const int v = cells[i * cols + j];
      if (v == 1) out.insert(edge(name('i', i), name('p', j)));
      if (v == -1) out.insert(edge(name('i', i), name('n', j)));
    }
  }
  return out;
}

/// Feature-feature edges straight from the threshold rule: for each output
/// neuron, mean and population deviation of its receptive-field-summed
/// incoming weights, strict comparison against mean +/- k * deviation.
inline std::set<std::string> brute_force_feature_edges(const fnegraph::io::LayerWeights& w,
                                                       double k, std::size_t in_offset,
                                                       std::size_t out_offset) {
  std::set<std::string> out;
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    std::vector<long double> row(w.in_channels, 0.0L);
    for (std::size_t i = 0; i < w.in_channels; ++i) {
      for (std::size_t rh = 0; rh < w.field_height; ++rh) {
        for (std::size_t rw = 0; rw < w.field_width; ++rw) {
          row[i] += w.at(o, i, rh, rw);
        }
      }
    }
    long double mu = 0.0L;
    for (auto v : row) mu += v;
    mu /= static_cast<long double>(row.size());
    long double var = 0.0L;
    for (auto v : row) var += (v - mu) * (v - mu);
    const long double sigma = std::sqrt(var / static_cast<long double>(row.size()));
    if (sigma == 0.0L) continue;
    const std::size_t f_out = out_offset + o;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::size_t f_in = in_offset + i;
      if (row[i] > mu + sigma * k) {
        out.insert(edge(name('p', f_in), name('p', f_out)));
        out.insert(edge(name('n', f_in), name('n', f_out)));
      } else if (row[i] < mu - sigma * k) {
        out.insert(edge(name('p', f_in), name('n', f_out)));
        out.insert(edge(name('n', f_in), name('p', f_out)));
      }
    }
  }
  return out;
}

/// Mutual information of two labelings, straight from the joint counts.
inline double mutual_information(const std::vector<int>& u, const std::vector<int>& v) {
  const double n = static_cast<double>(u.size());
  std::map<int, double> pu, pv;
  std::map<std::pair<int, int>, double> puv;
  for (std::size_t k = 0; k < u.size(); ++k) {
    pu[u[k]] += 1;
    pv[v[k]] += 1;
    puv[{u[k], v[k]}] += 1;
  }
  double mi = 0.0;
  for (const auto& [key, c] : puv) {
    mi += c / n * std::log(c * n / (pu[key.first] * pv[key.second]));
  }
  return mi;
}

/// E[MI] by averaging over every permutation of `v` (all N! of them).
inline double exhaustive_expected_mi(const std::vector<int>& u, std::vector<int> v) {
  std::vector<std::size_t> perm(v.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double total = 0.0;
  std::size_t count = 0;
  std::vector<int> shuffled(v.size());
  do {
    for (std::size_t k = 0; k < perm.size(); ++k) shuffled[k] = v[perm[k]];
    total += mutual_information(u, shuffled);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total / static_cast<double>(count);
}

/// Expands a contingency table into two label vectors.
inline std::pair<std::vector<int>, std::vector<int>> labels_from_table(
    const std::vector<std::vector<int>>& table) {
  std::pair<std::vector<int>, std::vector<int>> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      for (int c = 0; c < table[i][j]; ++c) {
        out.first.push_back(static_cast<int>(i));
        out.second.push_back(static_cast<int>(j));
      }
    }
  }
  return out;
}

}  // namespace oracle
