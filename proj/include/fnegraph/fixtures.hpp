#pragma once

// Synthetic layered "networks" and planted-partition graphs with known
// ground truth.
//
// generate_dataset plants class signal in two places:
//  * activations: each class-dependent feature is strongly shifted (up or
//    down) for a short window of images of one class, so it ternarizes to
//    +1/-1 exactly on that window;
//  * weights: outlier entries only join features of the same group (same
//    class, or both class-independent), so feature-feature edges never
//    cross classes when noise is zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fnegraph/error.hpp"
#include "fnegraph/graph.hpp"
#include "fnegraph/tensor_io.hpp"

namespace fnegraph::fixtures {

struct SyntheticSpec {
  std::size_t n_images = 20;
  std::size_t n_classes = 2;
  std::vector<io::LayerDescriptor> layers;
  double class_signal = 1.0;   // fraction of class-dependent features
  double noise_std = 0.0;      // activation and weight noise
  std::uint64_t seed = 0;
  double class_shift = 6.0;    // activation shift on a feature's hot window
  double weight_outlier_fraction = 0.15;
  double outlier_magnitude = 4.0;
  std::uint32_t receptive_field = 3;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (n_images < 2) fail("n_images must be at least 2");
    if (n_classes == 0 || n_classes > n_images) fail("need 1 <= n_classes <= n_images");
    if (!(class_signal >= 0.0 && class_signal <= 1.0)) fail("class_signal must be in [0, 1]");
    if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
    if (!(weight_outlier_fraction >= 0.0 && weight_outlier_fraction <= 1.0)) {
      fail("weight_outlier_fraction must be in [0, 1]");
    }
    if (receptive_field == 0) fail("receptive_field must be positive");
    if (layers.empty()) fail("at least one layer is required");
    for (const auto& l : layers) {
      if (l.channels < 2) fail("layer '" + l.layer_id + "' needs at least 2 channels");
      if (l.spatial_height == 0 || l.spatial_width == 0) fail("spatial dims must be positive");
    }
  }
};

/// Three small layers (conv, conv, fc) used by the tests and the CLI default.
inline std::vector<io::LayerDescriptor> default_layers() {
  using io::LayerKind;
  return {{"conv1", LayerKind::Convolutional, 8, 4, 4},
          {"conv2", LayerKind::Convolutional, 12, 2, 2},
          {"fc1", LayerKind::FullyConnected, 16, 1, 1}};
}

inline std::string class_label(std::size_t c) { return "class" + std::to_string(c); }

inline std::size_t class_of(std::size_t image, std::size_t n_classes) { return image % n_classes; }

struct GeneratedDataset {
  io::DatasetManifest manifest;
  io::fs::path manifest_path;
};

namespace detail {

inline std::string image_name(std::size_t i) {
  std::ostringstream s;
  s << "img" << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

/// Hot-window length: strictly fewer than a fifth of the images, so a hot
/// entry's z-score exceeds 2 when everything else is flat.
inline std::size_t window_length(std::size_t n_images) {
  return std::max<std::size_t>(1, (n_images - 1) / 5);
}

}  // namespace detail

/// Writes manifest.json, activations/ and weights/ under `out_dir`.
inline GeneratedDataset generate_dataset(const SyntheticSpec& spec, const io::fs::path& out_dir) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto coin = [&] { return unit(rng) < 0.5; };

  const std::size_t n = spec.n_images;
  const std::size_t n_classes = spec.n_classes;
  std::size_t f_total = 0;
  for (const auto& l : spec.layers) f_total += l.channels;

  // Feature groups: class id for class-dependent features, n_classes otherwise.
  std::vector<std::size_t> order(f_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_dependent =
      static_cast<std::size_t>(std::llround(spec.class_signal * static_cast<double>(f_total)));

  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < n; ++i) members[class_of(i, n_classes)].push_back(i);
  std::vector<std::size_t> class_offset(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    class_offset[c] = std::uniform_int_distribution<std::size_t>(0, members[c].size() - 1)(rng);
  }

  const std::size_t window = detail::window_length(n);
  std::vector<std::size_t> group(f_total, n_classes);
  std::vector<double> baseline(f_total);
  std::vector<double> direction(f_total);
  std::vector<std::vector<std::size_t>> hot(f_total);
  for (std::size_t t = 0; t < f_total; ++t) {
    const std::size_t j = order[t];
    baseline[j] = unit(rng);
    direction[j] = coin() ? 1.0 : -1.0;
    if (t < n_dependent) {
      const std::size_t c = t % n_classes;
      const std::size_t q = t / n_classes;
      const auto& m = members[c];
      const std::size_t len = std::min(window, m.size());
      const std::size_t step = std::max<std::size_t>(1, len - 1);
      const std::size_t start = (class_offset[c] + q * step) % m.size();
      group[j] = c;
      for (std::size_t r = 0; r < len; ++r) hot[j].push_back(m[(start + r) % m.size()]);
    } else {
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      for (std::size_t r = 0; r < window; ++r) hot[j].push_back((start + r) % n);
    }
  }

  // Per-image pooled targets, then per-cell activations.
  std::vector<std::vector<double>> signal(n, std::vector<double>(f_total));
  for (std::size_t j = 0; j < f_total; ++j) {
    for (std::size_t i = 0; i < n; ++i) signal[i][j] = baseline[j];
    for (std::size_t i : hot[j]) signal[i][j] += direction[j] * spec.class_shift;
  }

  GeneratedDataset out;
  auto& manifest = out.manifest;
  manifest.dataset_name = "synthetic-" + std::to_string(spec.seed);
  manifest.layers = spec.layers;
  manifest.base_dir = out_dir;

  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = detail::image_name(i);
    manifest.images.push_back({id, class_label(class_of(i, n_classes)),
                               "activations/" + id + "_{layer}.egt"});
    std::size_t offset = 0;
    for (const auto& layer : spec.layers) {
      io::ActivationTensor tensor{layer.layer_id, layer.spatial_height, layer.spatial_width,
                                  layer.channels, std::vector<float>(layer.value_count())};
      const std::size_t cells = std::size_t{layer.spatial_height} * layer.spatial_width;
      for (std::size_t cell = 0; cell < cells; ++cell) {
        for (std::size_t c = 0; c < layer.channels; ++c) {
          double v = signal[i][offset + c];
          if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
          tensor.values[cell * layer.channels + c] = static_cast<float>(v);
        }
      }
      io::write_tensor(manifest.activation_path(manifest.images.back(), layer), tensor);
      offset += layer.channels;
    }
  }

  std::size_t in_offset = 0;
  for (std::size_t p = 0; p + 1 < spec.layers.size(); ++p) {
    const auto& from = spec.layers[p];
    const auto& to = spec.layers[p + 1];
    const std::size_t out_offset = in_offset + from.channels;
    io::LayerWeights w;
    w.from_layer = from.layer_id;
    w.to_layer = to.layer_id;
    w.out_channels = to.channels;
    w.in_channels = from.channels;
    w.has_receptive_field = to.kind == io::LayerKind::Convolutional;
    w.field_height = w.field_width = w.has_receptive_field ? spec.receptive_field : 1;
    const std::size_t field = std::size_t{w.field_height} * w.field_width;
    w.values.resize(std::size_t{w.out_channels} * w.in_channels * field);
    for (std::size_t o = 0; o < to.channels; ++o) {
      for (std::size_t i = 0; i < from.channels; ++i) {
        double planted = 0.0;
        if (group[in_offset + i] == group[out_offset + o] &&
            unit(rng) < spec.weight_outlier_fraction) {
          planted = (coin() ? 1.0 : -1.0) * spec.outlier_magnitude;
        }
        for (std::size_t r = 0; r < field; ++r) {
          double v = planted / static_cast<double>(field);
          if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
          w.values[(o * from.channels + i) * field + r] = static_cast<float>(v);
        }
      }
    }
    const std::string name = "weights/" + from.layer_id + "-" + to.layer_id + ".egt";
    io::write_weights(out_dir / name, w);
    manifest.weight_files.push_back(name);
    in_offset = out_offset;
  }

  out.manifest_path = out_dir / "manifest.json";
  io::write_manifest(out.manifest_path, manifest);
  return out;
}

struct PlantedGraph {
  graph::EmbeddingGraph graph;
  std::vector<std::int64_t> labels;  // class per image index
};

/// Bipartite planted partition: one positive feature vertex per image, owned
/// by class f % n_classes. An image links to a feature of its own class with
/// probability p_in and to any other feature with probability p_out.
inline PlantedGraph planted_partition_graph(std::size_t n_images, std::size_t n_classes,
                                            double p_in, double p_out, std::uint64_t seed) {
  if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "planted partition needs 0 <= p_out < p_in <= 1");
  }
  if (n_classes == 0 || n_classes > n_images) {
    throw Error(ErrorCode::InvalidConfig, "need 1 <= n_classes <= n_images");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PlantedGraph out;
  for (std::size_t i = 0; i < n_images; ++i) {
    out.labels.push_back(static_cast<std::int64_t>(class_of(i, n_classes)));
  }
  const std::size_t n_features = n_images;
  std::vector<graph::Edge> edges;
  for (std::uint32_t i = 0; i < n_images; ++i) {
    for (std::uint32_t f = 0; f < n_features; ++f) {
      const bool same = out.labels[i] == static_cast<std::int64_t>(class_of(f, n_classes));
      if (unit(rng) < (same ? p_in : p_out)) {
        edges.push_back({graph::image_vertex(i), graph::positive_vertex(f)});
      }
    }
  }
  out.graph = graph::assemble_graph(std::move(edges), {}, n_images, n_features);
  return out;
}

}  // namespace fnegraph::fixtures
