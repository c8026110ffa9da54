#pragma once

// Embedding graph: image vertices, a positive and a negative vertex per
// feature, image-feature edges from the ternary embedding and
// feature-feature edges from outlier weights between consecutive layers.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fnegraph/error.hpp"
#include "fnegraph/fne.hpp"
#include "fnegraph/matrix.hpp"
#include "fnegraph/tensor_io.hpp"

namespace fnegraph::graph {

enum class VertexKind : std::uint8_t { Image = 0, FeaturePos = 1, FeatureNeg = 2 };

struct VertexId {
  VertexKind kind = VertexKind::Image;
  std::uint32_t index = 0;

  bool is_image() const { return kind == VertexKind::Image; }
  std::uint64_t key() const {
    return (std::uint64_t{static_cast<std::uint8_t>(kind)} << 32) | index;
  }
  friend auto operator<=>(const VertexId& a, const VertexId& b) { return a.key() <=> b.key(); }
  friend bool operator==(const VertexId&, const VertexId&) = default;
};

inline VertexId image_vertex(std::uint32_t i) { return {VertexKind::Image, i}; }
inline VertexId positive_vertex(std::uint32_t f) { return {VertexKind::FeaturePos, f}; }
inline VertexId negative_vertex(std::uint32_t f) { return {VertexKind::FeatureNeg, f}; }

/// Text form used by the edge list: i:<n>, p:<n>, n:<n>.
inline std::string vertex_name(VertexId v) {
  static constexpr char prefix[] = {'i', 'p', 'n'};
  return std::string(1, prefix[static_cast<int>(v.kind)]) + ":" + std::to_string(v.index);
}

inline std::optional<VertexId> parse_vertex(std::string_view text) {
  if (text.size() < 3 || text[1] != ':') return std::nullopt;
  VertexId v;
  switch (text[0]) {
    case 'i': v.kind = VertexKind::Image; break;
    case 'p': v.kind = VertexKind::FeaturePos; break;
    case 'n': v.kind = VertexKind::FeatureNeg; break;
    default: return std::nullopt;
  }
  const char* first = text.data() + 2;
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v.index);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return v;
}

/// Undirected edge, stored with a < b.
struct Edge {
  VertexId a;
  VertexId b;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge make_edge(VertexId u, VertexId v) { return u < v ? Edge{u, v} : Edge{v, u}; }

struct GraphBuildConfig {
  double k = 1.5;

  void validate() const {
    if (!(k >= 0.0) || !std::isfinite(k)) {
      throw Error(ErrorCode::InvalidConfig, "k must be a finite value >= 0");
    }
  }
};

enum class Sign : std::int8_t { Negative = -1, Positive = 1 };

/// Outlier weight between input feature `in_feature` and output feature
/// `out_feature` (global column indices once offsets are applied).
struct Correlation {
  std::uint32_t in_feature = 0;
  std::uint32_t out_feature = 0;
  Sign sign = Sign::Positive;
  friend auto operator<=>(const Correlation&, const Correlation&) = default;
};

// ---------------------------------------------------------------------------
// Image-feature edges

inline std::vector<Edge> build_image_feature_edges(const Matrix<std::int8_t>& embedding) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < embedding.rows(); ++i) {
    const auto row = embedding.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto img = image_vertex(static_cast<std::uint32_t>(i));
      const auto f = static_cast<std::uint32_t>(j);
      if (row[j] > 0) {
        edges.push_back({img, positive_vertex(f)});
      } else if (row[j] < 0) {
        edges.push_back({img, negative_vertex(f)});
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

inline std::vector<Edge> build_image_feature_edges(const fne::TernaryEmbedding& embedding) {
  return build_image_feature_edges(embedding.values);
}

// ---------------------------------------------------------------------------
// Feature-feature edges

/// Sums each kernel over its receptive field; fully-connected weights pass
/// through as (out, in).
inline Matrix<double> reduce_receptive_field(const io::LayerWeights& w) {
  Matrix<double> out(w.out_channels, w.in_channels);
  const std::size_t field = std::size_t{w.field_height} * w.field_width;
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    for (std::size_t i = 0; i < w.in_channels; ++i) {
      const float* kernel = w.values.data() + (o * w.in_channels + i) * field;
      double sum = 0.0;
      for (std::size_t r = 0; r < field; ++r) sum += kernel[r];
      out(o, i) = sum;
    }
  }
  return out;
}

/// Per output row: mean and population std over the row's inputs, then every
/// entry strictly above mean + k*std is a positive correlation and every entry
/// strictly below mean - k*std a negative one. Constant rows yield nothing.
inline std::vector<Correlation> feature_correlations(const Matrix<double>& reduced,
                                                     const GraphBuildConfig& config,
                                                     std::uint32_t in_offset = 0,
                                                     std::uint32_t out_offset = 0) {
  config.validate();
  const std::size_t n_in = reduced.cols();
  if (n_in < 2) {
    throw Error(ErrorCode::DegenerateLayer,
                "feature correlations need at least 2 input channels, got " +
                    std::to_string(n_in));
  }
  std::vector<Correlation> out;
  for (std::size_t o = 0; o < reduced.rows(); ++o) {
    const auto row = reduced.row(o);
    if (std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; })) {
      continue;
    }
    double sum = 0.0;
    for (double v : row) sum += v;
    const double mean = sum / static_cast<double>(n_in);
    double sq = 0.0;
    for (double v : row) sq += (v - mean) * (v - mean);
    const double sigma = std::sqrt(sq / static_cast<double>(n_in));
    const double upper = mean + sigma * config.k;
    const double lower = mean - sigma * config.k;
    for (std::size_t i = 0; i < n_in; ++i) {
      const auto in = static_cast<std::uint32_t>(in_offset + i);
      const auto outf = static_cast<std::uint32_t>(out_offset + o);
      if (row[i] > upper) {
        out.push_back({in, outf, Sign::Positive});
      } else if (row[i] < lower) {
        out.push_back({in, outf, Sign::Negative});
      }
    }
  }
  return out;
}

/// Positive: (f_l+, f_l+1+) and (f_l-, f_l+1-). Negative: the two cross-sign
/// pairs. Sorted and deduplicated.
inline std::vector<Edge> build_feature_feature_edges(std::span<const Correlation> correlations) {
  std::vector<Edge> edges;
  edges.reserve(2 * correlations.size());
  for (const auto& c : correlations) {
    if (c.sign == Sign::Positive) {
      edges.push_back(make_edge(positive_vertex(c.in_feature), positive_vertex(c.out_feature)));
      edges.push_back(make_edge(negative_vertex(c.in_feature), negative_vertex(c.out_feature)));
    } else {
      edges.push_back(make_edge(positive_vertex(c.in_feature), negative_vertex(c.out_feature)));
      edges.push_back(make_edge(negative_vertex(c.in_feature), positive_vertex(c.out_feature)));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Correlations for every consecutive layer pair of the manifest, with
/// global feature indices.
inline std::vector<Correlation> manifest_correlations(const io::DatasetManifest& manifest,
                                                      const GraphBuildConfig& config) {
  std::vector<Correlation> all;
  const auto offsets = manifest.layer_offsets();
  for (std::size_t p = 0; p < manifest.weight_files.size(); ++p) {
    const auto weights =
        io::read_weights(manifest.weight_path(p), manifest.layers[p], manifest.layers[p + 1]);
    auto found = feature_correlations(reduce_receptive_field(weights), config,
                                      static_cast<std::uint32_t>(offsets[p]),
                                      static_cast<std::uint32_t>(offsets[p + 1]));
    all.insert(all.end(), found.begin(), found.end());
  }
  return all;
}

// ---------------------------------------------------------------------------
// Graph

/// Immutable undirected graph over the non-isolated vertices. Vertices are
/// numbered densely in (kind, index) order; adjacency is CSR with sorted rows.
class EmbeddingGraph {
 public:
  using Dense = std::uint32_t;

  EmbeddingGraph() = default;

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t image_vertex_count() const { return image_vertices_; }
  std::size_t image_feature_edge_count() const { return image_feature_edges_; }
  std::size_t feature_feature_edge_count() const { return edges_.size() - image_feature_edges_; }

  /// Declared universe sizes (including vertices dropped as isolated).
  std::size_t image_universe() const { return n_images_; }
  std::size_t feature_universe() const { return n_features_; }

  std::span<const VertexId> vertices() const { return vertices_; }
  std::span<const Edge> edges() const { return edges_; }
  VertexId vertex(Dense d) const { return vertices_[d]; }

  std::span<const Dense> neighbors(Dense d) const {
    return {neighbors_.data() + offsets_[d], offsets_[d + 1] - offsets_[d]};
  }
  std::size_t degree(Dense d) const { return offsets_[d + 1] - offsets_[d]; }

  std::optional<Dense> find(VertexId v) const {
    auto it = std::lower_bound(vertices_.begin(), vertices_.end(), v);
    if (it == vertices_.end() || *it != v) return std::nullopt;
    return static_cast<Dense>(it - vertices_.begin());
  }

  friend EmbeddingGraph assemble_graph(std::vector<Edge> image_feature,
                                       std::vector<Edge> feature_feature,
                                       std::size_t n_images, std::size_t n_features);

 private:
  std::size_t n_images_ = 0;
  std::size_t n_features_ = 0;
  std::size_t image_vertices_ = 0;
  std::size_t image_feature_edges_ = 0;
  std::vector<VertexId> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<Dense> neighbors_;
};

/// E = E_if U E_ff over V = every vertex with at least one edge.
inline EmbeddingGraph assemble_graph(std::vector<Edge> image_feature,
                                     std::vector<Edge> feature_feature,
                                     std::size_t n_images, std::size_t n_features) {
  auto check = [&](VertexId v) {
    const std::size_t limit = v.is_image() ? n_images : n_features;
    if (v.index >= limit) {
      throw Error(ErrorCode::ShapeMismatch,
                  "edge endpoint " + vertex_name(v) + " out of range (limit " +
                      std::to_string(limit) + ")");
    }
  };
  std::vector<Edge> edges;
  edges.reserve(image_feature.size() + feature_feature.size());
  for (auto* set : {&image_feature, &feature_feature}) {
    for (const Edge& e : *set) {
      check(e.a);
      check(e.b);
      if (e.a == e.b) {
        throw Error(ErrorCode::SchemaError, "self-loop on " + vertex_name(e.a));
      }
      if (e.a.is_image() && e.b.is_image()) {
        throw Error(ErrorCode::SchemaError,
                    "image-image edge " + vertex_name(e.a) + " " + vertex_name(e.b));
      }
      edges.push_back(make_edge(e.a, e.b));
    }
  }
  image_feature.clear();
  feature_feature.clear();
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (edges.empty()) throw Error(ErrorCode::EmptyGraph, "graph has no edges");

  EmbeddingGraph g;
  g.n_images_ = n_images;
  g.n_features_ = n_features;

  g.vertices_.reserve(2 * edges.size());
  for (const Edge& e : edges) {
    g.vertices_.push_back(e.a);
    g.vertices_.push_back(e.b);
  }
  std::sort(g.vertices_.begin(), g.vertices_.end());
  g.vertices_.erase(std::unique(g.vertices_.begin(), g.vertices_.end()), g.vertices_.end());
  g.vertices_.shrink_to_fit();
  g.image_vertices_ = static_cast<std::size_t>(
      std::count_if(g.vertices_.begin(), g.vertices_.end(),
                    [](VertexId v) { return v.is_image(); }));

  std::vector<std::pair<EmbeddingGraph::Dense, EmbeddingGraph::Dense>> dense;
  dense.reserve(edges.size());
  for (const Edge& e : edges) {
    dense.emplace_back(*g.find(e.a), *g.find(e.b));
    g.image_feature_edges_ += e.a.is_image() || e.b.is_image();
  }

  const std::size_t n = g.vertices_.size();
  g.offsets_.assign(n + 1, 0);
  for (auto [u, v] : dense) {
    ++g.offsets_[u + 1];
    ++g.offsets_[v + 1];
  }
  for (std::size_t d = 0; d < n; ++d) g.offsets_[d + 1] += g.offsets_[d];
  g.neighbors_.resize(g.offsets_[n]);
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (auto [u, v] : dense) {
    g.neighbors_[cursor[u]++] = v;
    g.neighbors_[cursor[v]++] = u;
  }
  for (std::size_t d = 0; d < n; ++d) {
    std::sort(g.neighbors_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[d]),
              g.neighbors_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[d + 1]));
  }
  g.edges_ = std::move(edges);
  return g;
}

inline EmbeddingGraph build_graph(const fne::TernaryEmbedding& embedding,
                                  std::span<const Correlation> correlations) {
  return assemble_graph(build_image_feature_edges(embedding),
                        build_feature_feature_edges(correlations), embedding.image_count(),
                        embedding.feature_count());
}

// ---------------------------------------------------------------------------
// Edge list text format: "<vertex> <vertex>\n", endpoints in (kind, index)
// order, lines sorted lexicographically.

inline std::vector<std::string> edge_list_lines(const EmbeddingGraph& g) {
  std::vector<std::string> lines;
  lines.reserve(g.edge_count());
  for (const Edge& e : g.edges()) lines.push_back(vertex_name(e.a) + " " + vertex_name(e.b));
  std::sort(lines.begin(), lines.end());
  return lines;
}

inline void write_edge_list(std::ostream& out, const EmbeddingGraph& g) {
  for (const auto& line : edge_list_lines(g)) out << line << '\n';
}

inline void write_edge_list(const io::fs::path& path, const EmbeddingGraph& g) {
  if (path.has_parent_path()) io::fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_edge_list(out, g);
}

/// Universe sizes default to one past the largest index seen.
inline EmbeddingGraph read_edge_list(std::istream& in, const std::string& origin,
                                     std::optional<std::size_t> n_images = std::nullopt,
                                     std::optional<std::size_t> n_features = std::nullopt) {
  std::vector<Edge> image_feature;
  std::vector<Edge> feature_feature;
  std::size_t max_image = 0;
  std::size_t max_feature = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream tokens(line);
    std::string a, b, extra;
    tokens >> a >> b;
    const auto u = parse_vertex(a);
    const auto v = parse_vertex(b);
    if (!u || !v || (tokens >> extra)) {
      throw Error(ErrorCode::SchemaError,
                  origin + ":" + std::to_string(line_no) + ": malformed edge '" + line + "'");
    }
    for (VertexId x : {*u, *v}) {
      auto& m = x.is_image() ? max_image : max_feature;
      m = std::max<std::size_t>(m, std::size_t{x.index} + 1);
    }
    (u->is_image() || v->is_image() ? image_feature : feature_feature)
        .push_back(make_edge(*u, *v));
  }
  return assemble_graph(std::move(image_feature), std::move(feature_feature),
                        n_images.value_or(max_image), n_features.value_or(max_feature));
}

inline EmbeddingGraph read_edge_list(const io::fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "edge list " + path.string());
  return read_edge_list(in, path.string());
}

}  // namespace fnegraph::graph
