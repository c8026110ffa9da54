// Builds a planted-partition embedding graph, clusters it and scores the result.
//
//   planted_demo [n_images] [n_classes] [p_in] [p_out] [seed]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "fnegraph/fnegraph.hpp"

int main(int argc, char** argv) {
  const std::size_t n_images = argc > 1 ? std::stoul(argv[1]) : 100;
  const std::size_t n_classes = argc > 2 ? std::stoul(argv[2]) : 4;
  const double p_in = argc > 3 ? std::stod(argv[3]) : 0.9;
  const double p_out = argc > 4 ? std::stod(argv[4]) : 0.05;
  const std::uint64_t seed = argc > 5 ? std::stoull(argv[5]) : 0;

  using namespace fnegraph;
  try {
    const auto planted = fixtures::planted_partition_graph(n_images, n_classes, p_in, p_out, seed);
    const auto& g = planted.graph;
    std::printf("graph: %zu vertices (%zu images), %zu edges\n", g.vertex_count(),
                g.image_vertex_count(), g.edge_count());

    const auto a = fluidc::run(g, fluidc::FluidConfig{n_classes, seed, 100});
    std::vector<std::int64_t> truth;
    for (const auto& [image, community] : a.image_projection) {
      truth.push_back(planted.labels[image]);
    }
    const auto table = metrics::build_contingency(fluidc::scoring_labels(a), truth);
    const auto s = metrics::score(table);
    std::printf("fluidc: %zu sweeps (%s)\n", a.sweeps, a.converged ? "converged" : "capped");
    std::printf("NMI = %.4f  AMI = %.4f\n", s.nmi, s.ami);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
