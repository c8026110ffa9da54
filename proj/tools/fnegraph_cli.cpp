// fnegraph command-line interface.
//
//   fnegraph generate    --output_dir DIR [--n_images N --n_classes C ...]
//   fnegraph run         --manifest_path M --output_dir DIR [--stage S]
//   fnegraph embed | build-graph | cluster | score   (single stage, same flags)
//   fnegraph cluster     --edges FILE --out FILE --n_communities N

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fnegraph/fnegraph.hpp"

namespace {

using fnegraph::pipeline::PipelineConfig;
using fnegraph::pipeline::Stage;

struct PipelineFlags {
  std::string config_file;
  std::string manifest_path;
  double threshold_neg = 0;
  double threshold_pos = 0;
  double k = 0;
  std::size_t n_communities = 0;
  std::uint64_t seed = 0;
  std::size_t max_sweeps = 0;
  std::string output_dir;
  std::string stage;

  struct Options {
    CLI::Option* manifest_path;
    CLI::Option* threshold_neg;
    CLI::Option* threshold_pos;
    CLI::Option* k;
    CLI::Option* n_communities;
    CLI::Option* seed;
    CLI::Option* max_sweeps;
    CLI::Option* output_dir;
    CLI::Option* stage = nullptr;
  } opt{};

  void attach(CLI::App* app, bool with_stage) {
    app->add_option("--config", config_file, "JSON config file; flags override it")
        ->check(CLI::ExistingFile);
    opt.manifest_path =
        app->add_option("--manifest_path,--manifest-path,-m", manifest_path, "Dataset manifest");
    opt.threshold_neg = app->add_option("--threshold_neg,--threshold-neg", threshold_neg,
                                        "Ternary threshold below which a feature is -1 (default -2.0)");
    opt.threshold_pos = app->add_option("--threshold_pos,--threshold-pos", threshold_pos,
                                        "Ternary threshold above which a feature is +1 (default 2.0)");
    opt.k = app->add_option("--k", k, "Std-dev multiplier for feature-feature edges (default 1.5)");
    opt.n_communities = app->add_option("--n_communities,--n-communities", n_communities,
                                        "Communities to find (default: number of classes)");
    opt.seed = app->add_option("--seed", seed, "Seed for the community search (default 0)");
    opt.max_sweeps =
        app->add_option("--max_sweeps,--max-sweeps", max_sweeps, "Sweep cap (default 100)");
    opt.output_dir =
        app->add_option("--output_dir,--output-dir,-o", output_dir, "Output directory");
    if (with_stage) {
      opt.stage = app->add_option("--stage", stage, "Run only this stage")
                      ->check(CLI::IsMember({"ingest", "embed", "build-graph", "cluster", "score"}));
    }
  }

  PipelineConfig resolve() const {
    PipelineConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw fnegraph::Error(fnegraph::ErrorCode::SchemaError, config_file + ": " + e.what());
      }
      c = fnegraph::pipeline::config_from_json(j);
    }
    if (opt.manifest_path->count()) c.manifest_path = manifest_path;
    if (opt.threshold_neg->count()) c.thresholds.threshold_neg = threshold_neg;
    if (opt.threshold_pos->count()) c.thresholds.threshold_pos = threshold_pos;
    if (opt.k->count()) c.graph.k = k;
    if (opt.n_communities->count()) c.n_communities = n_communities;
    if (opt.seed->count()) c.seed = seed;
    if (opt.max_sweeps->count()) c.max_sweeps = max_sweeps;
    if (opt.output_dir->count()) c.output_dir = output_dir;
    if (opt.stage && opt.stage->count()) c.stage = fnegraph::pipeline::parse_stage(stage);
    if (c.manifest_path.empty()) {
      throw fnegraph::Error(fnegraph::ErrorCode::InvalidConfig, "no manifest_path given");
    }
    return c;
  }
};

void print_report(const fnegraph::pipeline::RunReport& r, bool full) {
  for (const auto& t : r.timings) {
    std::printf("  %-12s %9.3f s%s\n", t.stage.c_str(), t.seconds, t.cached ? "  (cached)" : "");
  }
  if (!full) return;
  std::printf("dataset %s: %zu images, %zu features\n", r.dataset_name.c_str(), r.n_images,
              r.n_features);
  std::printf("graph: |V| = %zu, |E| = %zu (%zu image-feature, %zu feature-feature)\n",
              r.n_vertices, r.n_edges, r.n_image_feature_edges, r.n_feature_feature_edges);
  std::printf("fluidc: %zu communities, %zu sweeps, %s\n", r.n_communities, r.sweeps,
              r.converged ? "converged" : "sweep cap reached");
  std::printf("NMI = %.6f  AMI = %.6f\n", r.nmi, r.ami);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph embedding of CNN activations with image-seeded Fluid Communities"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (manifest, tensors, weights)");
  fnegraph::fixtures::SyntheticSpec spec;
  spec.layers = fnegraph::fixtures::default_layers();
  std::string gen_dir;
  gen->add_option("--output_dir,--output-dir,-o", gen_dir, "Destination directory")->required();
  gen->add_option("--n_images,--n-images", spec.n_images, "Number of images")->capture_default_str();
  gen->add_option("--n_classes,--n-classes", spec.n_classes, "Number of classes")->capture_default_str();
  gen->add_option("--class_signal,--class-signal", spec.class_signal,
                  "Fraction of class-dependent features")->capture_default_str();
  gen->add_option("--noise_std,--noise-std", spec.noise_std, "Noise standard deviation")->capture_default_str();
  gen->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  gen->add_option("--class_shift,--class-shift", spec.class_shift, "Hot-window activation shift")->capture_default_str();
  gen->add_option("--weight_outlier_fraction,--weight-outlier-fraction",
                  spec.weight_outlier_fraction, "Fraction of planted outlier weights")->capture_default_str();

  // pipeline stages
  PipelineFlags run_flags;
  auto* run = app.add_subcommand("run", "Run embed -> build-graph -> cluster -> score");
  run_flags.attach(run, true);

  struct StageCommand {
    Stage stage;
    CLI::App* app;
    PipelineFlags flags;
  };
  std::vector<StageCommand> stages;
  stages.reserve(4);
  for (auto [stage, help] : {std::pair{Stage::Embed, "Pool, standardize and ternarize activations"},
                             std::pair{Stage::BuildGraph, "Build the embedding graph edge list"},
                             std::pair{Stage::Cluster, "Run Fluid Communities on the graph"},
                             std::pair{Stage::Score, "Score communities against class labels"}}) {
    stages.push_back({stage, app.add_subcommand(std::string(fnegraph::pipeline::stage_name(stage)), help), {}});
  }
  for (auto& s : stages) s.flags.attach(s.app, false);

  // external edge list clustering
  auto& cluster_cmd = stages[2];
  std::string edges_file, edges_out;
  auto* edges_opt = cluster_cmd.app->add_option("--edges", edges_file,
                                                "Cluster this edge list instead of the pipeline graph")
                        ->check(CLI::ExistingFile);
  cluster_cmd.app->add_option("--out", edges_out, "Community JSON output for --edges");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto out = fnegraph::fixtures::generate_dataset(spec, gen_dir);
      std::printf("wrote %s (%zu images, %zu features)\n", out.manifest_path.string().c_str(),
                  out.manifest.images.size(), out.manifest.feature_count());
      return 0;
    }
    if (run->parsed()) {
      const auto config = run_flags.resolve();
      const auto report = fnegraph::pipeline::run_pipeline(config);
      print_report(report, !config.stage);
      return 0;
    }
    if (cluster_cmd.app->parsed() && edges_opt->count()) {
      auto& f = cluster_cmd.flags;
      fnegraph::fluidc::FluidConfig fc;
      if (f.opt.n_communities->count()) fc.n_communities = f.n_communities;
      if (f.opt.seed->count()) fc.seed = f.seed;
      if (f.opt.max_sweeps->count()) fc.max_sweeps = f.max_sweeps;
      const auto j = fnegraph::pipeline::cluster_edge_list(edges_file, fc);
      const std::string text = j.dump(2) + "\n";
      if (edges_out.empty()) {
        std::fputs(text.c_str(), stdout);
      } else {
        fnegraph::pipeline::write_text(edges_out, text);
      }
      return 0;
    }
    for (auto& s : stages) {
      if (!s.app->parsed()) continue;
      auto config = s.flags.resolve();
      config.stage = s.stage;
      print_report(fnegraph::pipeline::run_pipeline(config), false);
      return 0;
    }
  } catch (const fnegraph::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
