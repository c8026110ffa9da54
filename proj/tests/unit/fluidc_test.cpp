#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fnegraph/fixtures.hpp"
#include "fnegraph/fluidc.hpp"
#include "fnegraph/metrics.hpp"

using namespace fnegraph;
using namespace fnegraph::graph;
using namespace fnegraph::fluidc;

namespace {

/// Two images joined through a path of positive feature vertices.
EmbeddingGraph path_graph() {
  return assemble_graph({make_edge(image_vertex(0), positive_vertex(0)),
                         make_edge(image_vertex(1), positive_vertex(2))},
                        {make_edge(positive_vertex(0), positive_vertex(1)),
                         make_edge(positive_vertex(1), positive_vertex(2))},
                        2, 3);
}

/// Images 0..3 each joined to every feature of their own clique of 4 features.
EmbeddingGraph two_cliques() {
  std::vector<Edge> if_edges, ff_edges;
  for (std::uint32_t c = 0; c < 2; ++c) {
    for (std::uint32_t i = 0; i < 2; ++i) {
      for (std::uint32_t f = 0; f < 4; ++f) {
        if_edges.push_back(make_edge(image_vertex(2 * c + i), positive_vertex(4 * c + f)));
      }
    }
    for (std::uint32_t a = 0; a < 4; ++a) {
      for (std::uint32_t b = a + 1; b < 4; ++b) {
        ff_edges.push_back(make_edge(positive_vertex(4 * c + a), positive_vertex(4 * c + b)));
      }
    }
  }
  // A single bridge between the cliques.
  ff_edges.push_back(make_edge(positive_vertex(3), positive_vertex(4)));
  return assemble_graph(if_edges, ff_edges, 4, 8);
}

std::map<std::uint32_t, CommunityId> projection(const CommunityAssignment& a) {
  return {a.image_projection.begin(), a.image_projection.end()};
}

}  // namespace

TEST(InitCommunities, SeedsDistinctImages) {
  const auto g = two_cliques();
  Rng rng(0);
  const auto s = init_communities(g, FluidConfig{3, 0, 100}, rng);
  std::set<CommunityId> seen;
  for (Dense d = 0; d < g.vertex_count(); ++d) {
    if (s.assignment[d] == kNoCommunity) continue;
    EXPECT_TRUE(g.vertex(d).is_image());
    seen.insert(s.assignment[d]);
  }
  EXPECT_EQ(seen, (std::set<CommunityId>{0, 1, 2}));
  EXPECT_EQ(s.density, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(check_invariants(g, s, 3), std::nullopt);
}

TEST(InitCommunities, TooManyCommunities) {
  const auto g = path_graph();
  Rng rng(0);
  try {
    init_communities(g, FluidConfig{3, 0, 100}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyCommunities);
  }
}

TEST(InitCommunities, CoversEveryImageComponentWhenPossible) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto planted = fixtures::planted_partition_graph(20, 4, 1.0, 0.0, seed);
    const auto comp = connected_components(planted.graph);
    Rng rng(seed);
    const auto s = init_communities(planted.graph, FluidConfig{4, seed, 100}, rng);
    std::set<std::uint32_t> covered;
    for (Dense d = 0; d < planted.graph.vertex_count(); ++d) {
      if (s.assignment[d] != kNoCommunity) covered.insert(comp[d]);
    }
    EXPECT_EQ(covered.size(), 4u);
  }
}

TEST(Run, PathGraphSplitsBetweenImages) {
  const auto g = path_graph();
  const auto a = run(g, FluidConfig{2, 1, 100});
  EXPECT_TRUE(a.converged);
  const auto p = projection(a);
  EXPECT_NE(p.at(0), p.at(1));
  for (auto c : a.vertex_community) EXPECT_NE(c, kNoCommunity);
}

TEST(Run, ImageHubStarConvergesInTwoSweeps) {
  std::vector<Edge> edges;
  for (std::uint32_t f = 0; f < 4; ++f) edges.push_back(make_edge(image_vertex(0), positive_vertex(f)));
  const auto g = assemble_graph(edges, {}, 1, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<bool> all_in;
    const auto a = run(g, FluidConfig{1, seed, 100}, [&](const CommunityState& s, std::size_t) {
      all_in.push_back(std::all_of(s.assignment.begin(), s.assignment.end(),
                                   [](CommunityId c) { return c == 0; }));
    });
    EXPECT_TRUE(a.converged);
    EXPECT_LE(a.sweeps, 2u);
    ASSERT_GE(all_in.size(), 2u);
    EXPECT_TRUE(all_in[1]);  // absorbed during the first sweep
    for (auto c : a.vertex_community) EXPECT_EQ(c, 0);
  }
}

TEST(Run, FeatureHubStarAbsorbsAllImages) {
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < 6; ++i) edges.push_back(make_edge(image_vertex(i), positive_vertex(0)));
  const auto g = assemble_graph(edges, {}, 6, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = run(g, FluidConfig{1, seed, 100});
    EXPECT_TRUE(a.converged);
    EXPECT_LE(a.sweeps, 3u);
    for (auto c : a.vertex_community) EXPECT_EQ(c, 0);
  }
}

TEST(Run, DisjointComponentsGetOwnCommunities) {
  const auto planted = fixtures::planted_partition_graph(12, 3, 1.0, 0.0, 5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = run(planted.graph, FluidConfig{3, seed, 100});
    const auto labels = scoring_labels(a);
    std::vector<std::int64_t> truth;
    for (const auto& [image, c] : a.image_projection) truth.push_back(planted.labels[image]);
    EXPECT_EQ(metrics::nmi(metrics::build_contingency(labels, truth)), 1.0);
  }
}

TEST(Run, TwoCliquesSeparate) {
  const auto g = two_cliques();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = projection(run(g, FluidConfig{2, seed, 100}));
    EXPECT_EQ(p.at(0), p.at(1));
    EXPECT_EQ(p.at(2), p.at(3));
    EXPECT_NE(p.at(0), p.at(2));
  }
}

TEST(Run, DeterministicForSeed) {
  const auto planted = fixtures::planted_partition_graph(40, 4, 0.6, 0.1, 2);
  const auto a = run(planted.graph, FluidConfig{4, 77, 100});
  const auto b = run(planted.graph, FluidConfig{4, 77, 100});
  EXPECT_EQ(a.vertex_community, b.vertex_community);
  EXPECT_EQ(a.sweeps, b.sweeps);
}

TEST(Run, InvariantsHoldAfterEverySweep) {
  const auto planted = fixtures::planted_partition_graph(30, 3, 0.5, 0.2, 8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::size_t calls = 0;
    const auto a = run(planted.graph, FluidConfig{5, seed, 100},
                       [&](const CommunityState& s, std::size_t sweeps) {
                         EXPECT_EQ(sweeps, calls++);
                         EXPECT_EQ(check_invariants(planted.graph, s, 5), std::nullopt);
                       });
    EXPECT_EQ(calls, a.sweeps + 1);
    EXPECT_LE(a.sweeps, 100u);
  }
}

TEST(Run, CommunitiesStayInsideSeedComponent) {
  const auto planted = fixtures::planted_partition_graph(16, 2, 1.0, 0.0, 3);
  const auto comp = connected_components(planted.graph);
  const auto a = run(planted.graph, FluidConfig{2, 4, 100});
  std::map<CommunityId, std::set<std::uint32_t>> spans;
  for (Dense d = 0; d < planted.graph.vertex_count(); ++d) {
    if (a.vertex_community[d] != kNoCommunity) spans[a.vertex_community[d]].insert(comp[d]);
  }
  for (const auto& [c, s] : spans) EXPECT_EQ(s.size(), 1u) << "community " << c;
}

TEST(Run, SweepCapIsRespected) {
  const auto planted = fixtures::planted_partition_graph(40, 4, 0.5, 0.3, 1);
  const auto a = run(planted.graph, FluidConfig{4, 0, 1});
  EXPECT_EQ(a.sweeps, 1u);
}

TEST(ScoringLabels, UnreachedImagesAreSingletons) {
  CommunityAssignment a;
  a.n_communities = 2;
  a.image_projection = {{0, 0}, {1, kNoCommunity}, {2, 1}, {3, kNoCommunity}};
  EXPECT_EQ(scoring_labels(a), (std::vector<std::int64_t>{0, 2, 1, 3}));
}

TEST(InitCommunities, OneCommunityPerImageWhenCountsMatch) {
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < 5; ++i) edges.push_back(make_edge(image_vertex(i), positive_vertex(i % 2)));
  const auto g = assemble_graph(edges, {}, 5, 2);
  Rng rng(4);
  const auto s = init_communities(g, FluidConfig{5, 4, 100}, rng);
  std::set<CommunityId> seen;
  for (Dense d = 0; d < g.vertex_count(); ++d) {
    if (g.vertex(d).is_image()) seen.insert(s.assignment[d]);
  }
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_FALSE(seen.count(kNoCommunity));

  Rng again(4);
  EXPECT_THROW(init_communities(g, FluidConfig{6, 4, 100}, again), Error);

  const auto a = run(g, FluidConfig{5, 4, 100});
  std::set<CommunityId> projected;
  for (const auto& [image, c] : a.image_projection) projected.insert(c);
  EXPECT_EQ(projected.size(), 5u);
}

TEST(InitCommunities, SameSeedSameSeedVertices) {
  const auto planted = fixtures::planted_partition_graph(30, 3, 0.6, 0.2, 4);
  Rng a(21), b(21);
  EXPECT_EQ(init_communities(planted.graph, FluidConfig{2, 21, 100}, a).assignment,
            init_communities(planted.graph, FluidConfig{2, 21, 100}, b).assignment);
}

TEST(Sweep, SharedFeatureJoinsOneSideAndBothSurvive) {
  const auto g = assemble_graph({make_edge(image_vertex(0), positive_vertex(0)),
                                 make_edge(image_vertex(1), positive_vertex(0))},
                                {}, 2, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto s = init_communities(g, FluidConfig{2, seed, 100}, rng);
    sweep(g, s, rng);
    EXPECT_NE(s.assignment[*g.find(positive_vertex(0))], kNoCommunity);
    EXPECT_EQ(check_invariants(g, s, 2), std::nullopt);
    EXPECT_NE(s.assignment[*g.find(image_vertex(0))], s.assignment[*g.find(image_vertex(1))]);
  }
}
