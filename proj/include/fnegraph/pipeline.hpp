#pragma once

// End-to-end run: ingest -> embed -> build-graph -> cluster -> score.
//
// Each stage's output is stored under <output_dir>/cache/ keyed by a hash of
// its inputs and its own configuration, so changing k only recomputes the
// graph and everything after it. The latest result of every stage is also
// copied to a stable name in <output_dir>.

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fnegraph/error.hpp"
#include "fnegraph/fluidc.hpp"
#include "fnegraph/fne.hpp"
#include "fnegraph/graph.hpp"
#include "fnegraph/metrics.hpp"
#include "fnegraph/tensor_io.hpp"

namespace fnegraph::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum class Stage { Ingest, Embed, BuildGraph, Cluster, Score };

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Embed: return "embed";
    case Stage::BuildGraph: return "build-graph";
    case Stage::Cluster: return "cluster";
    case Stage::Score: return "score";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : {Stage::Ingest, Stage::Embed, Stage::BuildGraph, Stage::Cluster, Stage::Score}) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

struct PipelineConfig {
  fs::path manifest_path;
  fne::FneConfig thresholds;
  graph::GraphBuildConfig graph;
  std::size_t n_communities = 0;  // 0: number of classes in the manifest
  std::uint64_t seed = 0;
  std::size_t max_sweeps = 100;
  fs::path output_dir = "fnegraph-out";
  std::optional<Stage> stage;  // run only this stage, reusing cached inputs
};

/// Reads the JSON config file form; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "manifest_path") c.manifest_path = value.get<std::string>();
      else if (key == "threshold_neg") c.thresholds.threshold_neg = value.get<double>();
      else if (key == "threshold_pos") c.thresholds.threshold_pos = value.get<double>();
      else if (key == "k") c.graph.k = value.get<double>();
      else if (key == "n_communities") c.n_communities = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "max_sweeps") c.max_sweeps = value.get<std::size_t>();
      else if (key == "output_dir") c.output_dir = value.get<std::string>();
      else if (key == "stage") {
        const auto s = parse_stage(value.get<std::string>());
        if (!s) throw Error(ErrorCode::SchemaError, "config: unknown stage " + value.dump());
        c.stage = s;
      } else {
        throw Error(ErrorCode::SchemaError, "config: unknown field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("config: ") + e.what());
  }
  return c;
}

/// 64-bit FNV-1a, used for cache keys.
class Hasher {
 public:
  Hasher& update(std::span<const unsigned char> bytes) {
    for (unsigned char b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Hasher& update(std::string_view s) {
    update(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
    return update(std::uint64_t{s.size()});
  }
  Hasher& update(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    return update(std::span<const unsigned char>(b, 8));
  }
  Hasher& update(double v) { return update(std::bit_cast<std::uint64_t>(v)); }
  Hasher& update_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    char buf[1 << 16];
    std::uint64_t total = 0;
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      const auto got = static_cast<std::size_t>(in.gcount());
      update(std::span(reinterpret_cast<const unsigned char*>(buf), got));
      total += got;
    }
    return update(total);
  }

  std::uint64_t value() const { return state_; }
  std::string hex() const {
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(state_));
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
  bool cached = false;
};

struct RunReport {
  std::string dataset_name;
  std::size_t n_images = 0;
  std::size_t n_features = 0;
  std::size_t n_vertices = 0;
  std::size_t n_edges = 0;
  std::size_t n_image_feature_edges = 0;
  std::size_t n_feature_feature_edges = 0;
  std::size_t n_communities = 0;
  std::size_t sweeps = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  double nmi = 0.0;
  double ami = 0.0;
  std::vector<StageTiming> timings;

  /// Timings are left out so the file is reproducible byte for byte.
  ojson to_json() const {
    return ojson{{"dataset_name", dataset_name},
                 {"n_images", n_images},
                 {"n_features", n_features},
                 {"n_vertices", n_vertices},
                 {"n_edges", n_edges},
                 {"n_image_feature_edges", n_image_feature_edges},
                 {"n_feature_feature_edges", n_feature_feature_edges},
                 {"n_communities", n_communities},
                 {"sweeps", sweeps},
                 {"converged", converged},
                 {"seed", seed},
                 {"nmi", nmi},
                 {"ami", ami}};
  }
};

// ---------------------------------------------------------------------------
// Artifact helpers

inline void write_text(const fs::path& path, const std::string& text) {
  io::detail::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()),
                                         text.size()));
}

inline ojson read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
}

/// Community file: image id -> community (null when unreached), plus run metadata.
inline ojson communities_to_json(const fluidc::CommunityAssignment& a,
                                 std::span<const std::string> image_ids,
                                 std::size_t max_sweeps) {
  ojson assignment = ojson::object();
  for (const auto& [image, community] : a.image_projection) {
    assignment[image_ids[image]] =
        community == fluidc::kNoCommunity ? ojson(nullptr) : ojson(community);
  }
  return ojson{{"seed", a.seed},
               {"n_communities", a.n_communities},
               {"max_sweeps", max_sweeps},
               {"sweeps", a.sweeps},
               {"converged", a.converged},
               {"assignment", std::move(assignment)}};
}

/// (image id, cluster label) pairs; unreached images become singletons.
inline std::vector<std::pair<std::string, std::int64_t>> predicted_labels(const ojson& communities) {
  std::vector<std::pair<std::string, std::int64_t>> out;
  auto next = communities.at("n_communities").get<std::int64_t>();
  for (const auto& [id, c] : communities.at("assignment").items()) {
    out.emplace_back(id, c.is_null() ? next++ : c.get<std::int64_t>());
  }
  return out;
}

inline ojson metrics_to_json(const metrics::Scores& s, std::size_t n_images,
                             std::size_t n_communities, std::size_t n_classes,
                             std::uint64_t seed) {
  return ojson{{"nmi", s.nmi},
               {"ami", s.ami},
               {"n_images", n_images},
               {"n_communities", n_communities},
               {"n_classes", n_classes},
               {"seed", seed}};
}

/// Clusters an externally built edge list; image ids are spelled i:<index>.
inline ojson cluster_edge_list(const fs::path& edges, const fluidc::FluidConfig& config) {
  const auto g = graph::read_edge_list(edges);
  const auto a = fluidc::run(g, config);
  std::vector<std::string> names(g.image_universe());
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = "i:" + std::to_string(i);
  return communities_to_json(a, names, config.max_sweeps);
}

// ---------------------------------------------------------------------------
// Runner

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config) : config_(std::move(config)) {}

  RunReport run() {
    report_ = {};
    ingest();
    if (!config_.stage || *config_.stage == Stage::Embed) embed(config_.stage.has_value());
    if (!config_.stage || *config_.stage == Stage::BuildGraph) {
      build_graph(config_.stage.has_value());
    }
    if (!config_.stage || *config_.stage == Stage::Cluster) cluster(config_.stage.has_value());
    if (!config_.stage || *config_.stage == Stage::Score) score(config_.stage.has_value());
    if (!config_.stage) write_text(config_.output_dir / "report.json", report_.to_json().dump(2) + "\n");
    return report_;
  }

  fs::path cache_path(std::string_view stem, std::string_view ext) const {
    return config_.output_dir / "cache" / (std::string(stem) + std::string(ext));
  }

 private:
  template <typename F>
  void timed(Stage stage, bool& cached, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(std::string(stage_name(stage)), e);
    } catch (const std::exception& e) {
      throw StageError(std::string(stage_name(stage)), Error(ErrorCode::IoError, e.what()));
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    report_.timings.push_back({std::string(stage_name(stage)), dt.count(), cached});
  }

  void require_cached(const fs::path& p, Stage upstream) const {
    if (!fs::is_regular_file(p)) {
      throw Error(ErrorCode::MissingFile,
                  p.string() + " not cached; run '" + std::string(stage_name(upstream)) +
                      "' with this configuration first");
    }
  }

  static void publish(const fs::path& from, const fs::path& to) {
    fs::copy_file(from, to, fs::copy_options::overwrite_existing);
  }

  void ingest() {
    bool cached = false;
    timed(Stage::Ingest, cached, [&] {
      manifest_ = io::read_manifest(config_.manifest_path);
      config_.thresholds.validate();
      config_.graph.validate();
      report_.dataset_name = manifest_.dataset_name;
      report_.n_images = manifest_.images.size();
      report_.n_features = manifest_.feature_count();
      n_communities_ = config_.n_communities ? config_.n_communities : manifest_.class_count();
      report_.n_communities = n_communities_;
      report_.seed = config_.seed;

      const std::string manifest_text = io::manifest_to_json(manifest_).dump();
      Hasher activations;
      activations.update(manifest_text);
      for (const auto& image : manifest_.images) {
        for (const auto& layer : manifest_.layers) {
          activations.update_file(manifest_.activation_path(image, layer));
        }
      }
      Hasher weights;
      weights.update(manifest_text);
      for (std::size_t p = 0; p < manifest_.weight_files.size(); ++p) {
        weights.update_file(manifest_.weight_path(p));
      }
      embed_key_ = Hasher(activations)
                       .update(std::string_view("embed"))
                       .update(config_.thresholds.threshold_neg)
                       .update(config_.thresholds.threshold_pos)
                       .hex();
      graph_key_ = Hasher()
                       .update(std::string_view("graph"))
                       .update(embed_key_)
                       .update(weights.value())
                       .update(config_.graph.k)
                       .hex();
      cluster_key_ = Hasher()
                         .update(std::string_view("cluster"))
                         .update(graph_key_)
                         .update(std::uint64_t{n_communities_})
                         .update(config_.seed)
                         .update(std::uint64_t{config_.max_sweeps})
                         .hex();
      score_key_ = Hasher()
                       .update(std::string_view("score"))
                       .update(cluster_key_)
                       .update(manifest_text)
                       .hex();
      fs::create_directories(config_.output_dir / "cache");
    });
  }

  void embed(bool force) {
    const auto tensor = cache_path("embed-" + embed_key_, ".egt");
    const auto sidecar = cache_path("embed-" + embed_key_, ".json");
    bool cached = !force && fs::is_regular_file(tensor) && fs::is_regular_file(sidecar);
    timed(Stage::Embed, cached, [&] {
      if (!cached) {
        fne::write_embedding(tensor, sidecar,
                             fne::full_network_embedding(manifest_, config_.thresholds));
      }
      publish(tensor, config_.output_dir / "embedding.egt");
      publish(sidecar, config_.output_dir / "embedding.json");
    });
  }

  void build_graph(bool force) {
    const auto edges = cache_path("graph-" + graph_key_, ".edges");
    const auto meta = cache_path("graph-" + graph_key_, ".json");
    bool cached = !force && fs::is_regular_file(edges) && fs::is_regular_file(meta);
    timed(Stage::BuildGraph, cached, [&] {
      if (!cached) {
        const auto tensor = cache_path("embed-" + embed_key_, ".egt");
        const auto sidecar = cache_path("embed-" + embed_key_, ".json");
        require_cached(tensor, Stage::Embed);
        const auto embedding = fne::read_embedding(tensor, sidecar);
        const auto correlations = graph::manifest_correlations(manifest_, config_.graph);
        const auto g = graph::build_graph(embedding, correlations);
        graph::write_edge_list(edges, g);
        write_text(meta, ojson{{"n_images", g.image_universe()},
                               {"n_features", g.feature_universe()},
                               {"n_vertices", g.vertex_count()},
                               {"n_edges", g.edge_count()},
                               {"n_image_feature_edges", g.image_feature_edge_count()},
                               {"n_feature_feature_edges", g.feature_feature_edge_count()}}
                                 .dump(2) + "\n");
      }
      const auto m = read_json_file(meta);
      report_.n_vertices = m.at("n_vertices").get<std::size_t>();
      report_.n_edges = m.at("n_edges").get<std::size_t>();
      report_.n_image_feature_edges = m.at("n_image_feature_edges").get<std::size_t>();
      report_.n_feature_feature_edges = m.at("n_feature_feature_edges").get<std::size_t>();
      publish(edges, config_.output_dir / "graph.edges");
    });
  }

  void cluster(bool force) {
    const auto out = cache_path("communities-" + cluster_key_, ".json");
    bool cached = !force && fs::is_regular_file(out);
    timed(Stage::Cluster, cached, [&] {
      if (!cached) {
        const auto edges = cache_path("graph-" + graph_key_, ".edges");
        const auto meta = cache_path("graph-" + graph_key_, ".json");
        const auto sidecar = cache_path("embed-" + embed_key_, ".json");
        require_cached(edges, Stage::BuildGraph);
        require_cached(sidecar, Stage::Embed);
        const auto m = read_json_file(meta);
        std::ifstream in(edges);
        const auto g = graph::read_edge_list(in, edges.string(),
                                             m.at("n_images").get<std::size_t>(),
                                             m.at("n_features").get<std::size_t>());
        const auto labels = read_json_file(sidecar);
        const auto image_ids = labels.at("image_ids").get<std::vector<std::string>>();
        fluidc::FluidConfig fc{n_communities_, config_.seed, config_.max_sweeps};
        const auto a = fluidc::run(g, fc);
        write_text(out, communities_to_json(a, image_ids, config_.max_sweeps).dump(2) + "\n");
      }
      const auto c = read_json_file(out);
      report_.sweeps = c.at("sweeps").get<std::size_t>();
      report_.converged = c.at("converged").get<bool>();
      publish(out, config_.output_dir / "communities.json");
    });
  }

  void score(bool force) {
    const auto out = cache_path("metrics-" + score_key_, ".json");
    bool cached = !force && fs::is_regular_file(out);
    timed(Stage::Score, cached, [&] {
      if (!cached) {
        const auto communities_path = cache_path("communities-" + cluster_key_, ".json");
        require_cached(communities_path, Stage::Cluster);
        const auto communities = read_json_file(communities_path);
        std::map<std::string, std::string> truth;
        for (const auto& image : manifest_.images) truth[image.image_id] = image.class_label;
        const auto predicted = predicted_labels(communities);
        const auto table = metrics::build_contingency(
            std::span<const std::pair<std::string, std::int64_t>>(predicted), truth);
        write_text(out, metrics_to_json(metrics::score(table), predicted.size(), n_communities_,
                                        manifest_.class_count(), config_.seed)
                                .dump(2) + "\n");
      }
      const auto m = read_json_file(out);
      report_.nmi = m.at("nmi").get<double>();
      report_.ami = m.at("ami").get<double>();
      publish(out, config_.output_dir / "metrics.json");
    });
  }

  PipelineConfig config_;
  io::DatasetManifest manifest_;
  std::size_t n_communities_ = 0;
  std::string embed_key_, graph_key_, cluster_key_, score_key_;
  RunReport report_;
};

inline RunReport run_pipeline(const PipelineConfig& config) { return Pipeline(config).run(); }

}  // namespace fnegraph::pipeline
