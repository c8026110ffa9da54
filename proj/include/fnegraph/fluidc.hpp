#pragma once

// Fluid Communities restricted to image-seeded communities.
//
// Each community c has density 1/|c|. A vertex scores every community by the
// summed density of its members inside the vertex's closed neighbourhood and
// joins a best-scoring one, keeping its own community on ties. Two extra rules
// apply: communities are seeded on image vertices, and a move that would leave
// a community empty or without an image vertex is refused.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fnegraph/error.hpp"
#include "fnegraph/graph.hpp"

namespace fnegraph::fluidc {

using graph::EmbeddingGraph;
using Dense = EmbeddingGraph::Dense;
using CommunityId = std::int32_t;
using Rng = std::mt19937_64;

inline constexpr CommunityId kNoCommunity = -1;

struct FluidConfig {
  std::size_t n_communities = 1;
  std::uint64_t seed = 0;
  std::size_t max_sweeps = 100;

  void validate(const EmbeddingGraph& g) const {
    if (n_communities == 0) {
      throw Error(ErrorCode::InvalidConfig, "n_communities must be positive");
    }
    if (max_sweeps == 0) throw Error(ErrorCode::InvalidConfig, "max_sweeps must be positive");
    if (n_communities > g.image_vertex_count()) {
      throw Error(ErrorCode::TooManyCommunities,
                  std::to_string(n_communities) + " communities requested but the graph has " +
                      std::to_string(g.image_vertex_count()) + " image vertices");
    }
  }
};

struct CommunityState {
  std::vector<CommunityId> assignment;  // per dense vertex
  std::vector<std::size_t> community_size;
  std::vector<std::size_t> community_image_count;
  std::vector<double> density;

  std::size_t community_count() const { return community_size.size(); }
};

struct CommunityAssignment {
  std::vector<CommunityId> vertex_community;  // per dense vertex, kNoCommunity if unreached
  /// (image row index, community) for every image vertex in the graph, by index.
  std::vector<std::pair<std::uint32_t, CommunityId>> image_projection;
  std::size_t n_communities = 0;
  std::size_t sweeps = 0;
  bool converged = false;
  std::uint64_t seed = 0;
};

/// Called with the state after initialization (sweeps = 0) and after every sweep.
using SweepObserver = std::function<void(const CommunityState&, std::size_t sweeps)>;

/// Connected component label of every dense vertex.
inline std::vector<std::uint32_t> connected_components(const EmbeddingGraph& g) {
  constexpr auto unseen = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> label(g.vertex_count(), unseen);
  std::vector<Dense> stack;
  std::uint32_t next = 0;
  for (Dense s = 0; s < g.vertex_count(); ++s) {
    if (label[s] != unseen) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const Dense u = stack.back();
      stack.pop_back();
      for (Dense v : g.neighbors(u)) {
        if (label[v] == unseen) {
          label[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return label;
}

/// Seeds n_communities singleton communities on distinct image vertices.
/// When there are at least as many communities as image-bearing components,
/// every such component first receives one seed drawn uniformly from its
/// images; the remaining seeds are drawn uniformly from the unused images.
inline CommunityState init_communities(const EmbeddingGraph& g, const FluidConfig& config,
                                       Rng& rng) {
  config.validate(g);

  const auto component = connected_components(g);
  std::vector<std::vector<Dense>> images_by_component;
  std::vector<Dense> images;
  for (Dense d = 0; d < g.vertex_count(); ++d) {
    if (!g.vertex(d).is_image()) continue;
    images.push_back(d);
    if (component[d] >= images_by_component.size()) {
      images_by_component.resize(component[d] + 1);
    }
    images_by_component[component[d]].push_back(d);
  }
  std::erase_if(images_by_component, [](const auto& c) { return c.empty(); });

  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };

  std::vector<Dense> seeds;
  std::vector<Dense> pool;
  if (config.n_communities >= images_by_component.size()) {
    for (const auto& members : images_by_component) {
      const Dense chosen = members[pick(members.size())];
      seeds.push_back(chosen);
      for (Dense d : members) {
        if (d != chosen) pool.push_back(d);
      }
    }
    std::sort(pool.begin(), pool.end());
  } else {
    pool = images;
  }
  // Partial Fisher-Yates over the pool.
  for (std::size_t k = 0; seeds.size() < config.n_communities; ++k) {
    const std::size_t j = k + pick(pool.size() - k);
    std::swap(pool[k], pool[j]);
    seeds.push_back(pool[k]);
  }

  CommunityState state;
  state.assignment.assign(g.vertex_count(), kNoCommunity);
  state.community_size.assign(config.n_communities, 1);
  state.community_image_count.assign(config.n_communities, 1);
  state.density.assign(config.n_communities, 1.0);
  for (std::size_t c = 0; c < seeds.size(); ++c) {
    state.assignment[seeds[c]] = static_cast<CommunityId>(c);
  }
  return state;
}

namespace detail {

/// Scratch space reused across the vertices of a sweep.
struct Tally {
  std::vector<std::size_t> members;  // closed-neighbourhood members per community
  std::vector<CommunityId> touched;

  explicit Tally(std::size_t n) : members(n, 0) {}

  void add(CommunityId c) {
    if (c == kNoCommunity) return;
    if (members[c]++ == 0) touched.push_back(c);
  }
  void clear() {
    for (auto c : touched) members[c] = 0;
    touched.clear();
  }
};

}  // namespace detail

/// One asynchronous pass over all vertices in a seeded random order.
/// Returns whether any vertex changed community.
inline bool sweep(const EmbeddingGraph& g, CommunityState& state, Rng& rng) {
  std::vector<Dense> order(g.vertex_count());
  std::iota(order.begin(), order.end(), Dense{0});
  std::shuffle(order.begin(), order.end(), rng);

  detail::Tally tally(state.community_count());
  std::vector<CommunityId> best;
  bool changed = false;

  for (Dense v : order) {
    const CommunityId current = state.assignment[v];
    tally.add(current);
    for (Dense u : g.neighbors(v)) tally.add(state.assignment[u]);
    if (tally.touched.empty()) continue;

    // Score of c is members[c] / size[c]; compared exactly by cross-multiplying.
    best.clear();
    for (CommunityId c : tally.touched) {
      if (best.empty()) {
        best.push_back(c);
        continue;
      }
      const auto lhs = tally.members[c] * state.community_size[best.front()];
      const auto rhs = tally.members[best.front()] * state.community_size[c];
      if (lhs > rhs) {
        best.assign(1, c);
      } else if (lhs == rhs) {
        best.push_back(c);
      }
    }
    tally.clear();

    if (std::find(best.begin(), best.end(), current) != best.end()) continue;

    const bool is_image = g.vertex(v).is_image();
    if (current != kNoCommunity &&
        (state.community_size[current] == 1 ||
         (is_image && state.community_image_count[current] == 1))) {
      continue;  // would empty the community or strip its last image
    }

    std::sort(best.begin(), best.end());
    const CommunityId target =
        best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];

    if (current != kNoCommunity) {
      --state.community_size[current];
      state.community_image_count[current] -= is_image;
      state.density[current] = 1.0 / static_cast<double>(state.community_size[current]);
    }
    ++state.community_size[target];
    state.community_image_count[target] += is_image;
    state.density[target] = 1.0 / static_cast<double>(state.community_size[target]);
    state.assignment[v] = target;
    changed = true;
  }
  return changed;
}

/// Recomputes the bookkeeping from the assignment and reports the first
/// violated invariant, if any.
inline std::optional<std::string> check_invariants(const EmbeddingGraph& g,
                                                   const CommunityState& state,
                                                   std::size_t n_communities) {
  if (state.community_count() != n_communities) {
    return "community count " + std::to_string(state.community_count()) + " != " +
           std::to_string(n_communities);
  }
  std::vector<std::size_t> size(n_communities, 0);
  std::vector<std::size_t> images(n_communities, 0);
  for (Dense d = 0; d < state.assignment.size(); ++d) {
    const CommunityId c = state.assignment[d];
    if (c == kNoCommunity) continue;
    if (c < 0 || static_cast<std::size_t>(c) >= n_communities) return "bad community id";
    ++size[c];
    images[c] += g.vertex(d).is_image();
  }
  for (std::size_t c = 0; c < n_communities; ++c) {
    const std::string tag = "community " + std::to_string(c);
    if (size[c] == 0) return tag + " is empty";
    if (images[c] == 0) return tag + " has no image vertex";
    if (size[c] != state.community_size[c]) return tag + " size bookkeeping is stale";
    if (images[c] != state.community_image_count[c]) return tag + " image count is stale";
    if (state.density[c] != 1.0 / static_cast<double>(size[c])) return tag + " density != 1/size";
  }
  return std::nullopt;
}

/// Sweeps until nothing moves or max_sweeps is reached. Deterministic in
/// (graph, config).
inline CommunityAssignment run(const EmbeddingGraph& g, const FluidConfig& config,
                               const SweepObserver& observer = {}) {
  Rng rng(config.seed);
  CommunityState state = init_communities(g, config, rng);
  if (observer) observer(state, 0);

  CommunityAssignment result;
  result.n_communities = config.n_communities;
  result.seed = config.seed;
  while (result.sweeps < config.max_sweeps) {
    const bool changed = sweep(g, state, rng);
    ++result.sweeps;
    if (observer) observer(state, result.sweeps);
    if (!changed) {
      result.converged = true;
      break;
    }
  }

  for (Dense d = 0; d < g.vertex_count(); ++d) {
    if (g.vertex(d).is_image()) {
      result.image_projection.emplace_back(g.vertex(d).index, state.assignment[d]);
    }
  }
  result.vertex_community = std::move(state.assignment);
  return result;
}

/// Cluster label per projected image for scoring: unreached images become
/// singleton clusters numbered after the real communities.
inline std::vector<std::int64_t> scoring_labels(const CommunityAssignment& a) {
  std::vector<std::int64_t> labels;
  labels.reserve(a.image_projection.size());
  auto next = static_cast<std::int64_t>(a.n_communities);
  for (const auto& [image, community] : a.image_projection) {
    labels.push_back(community == kNoCommunity ? next++ : community);
  }
  return labels;
}

}  // namespace fnegraph::fluidc
