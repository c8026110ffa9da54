#pragma once

// Full-network embedding: spatial average pooling of every layer's
// activations, per-feature standardization over the whole image set, and
// ternary discretization into {-1, 0, +1}.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fnegraph/error.hpp"
#include "fnegraph/matrix.hpp"
#include "fnegraph/tensor_io.hpp"

namespace fnegraph::fne {

/// (layer_id, channel) of one embedding column.
struct FeatureRef {
  std::string layer_id;
  std::uint32_t channel = 0;
  friend bool operator==(const FeatureRef&, const FeatureRef&) = default;
};

struct RawEmbeddingMatrix {
  Matrix<double> values;  // N_images x F
  std::vector<std::string> image_ids;
  std::vector<FeatureRef> feature_index;
};

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;  // population
};

struct FneConfig {
  double threshold_neg = -2.0;
  double threshold_pos = 2.0;

  void validate() const {
    if (!(threshold_neg < 0.0 && 0.0 < threshold_pos)) {
      throw Error(ErrorCode::InvalidConfig,
                  "thresholds must satisfy threshold_neg < 0 < threshold_pos");
    }
  }
};

struct TernaryEmbedding {
  Matrix<std::int8_t> values;  // N_images x F, entries in {-1, 0, +1}
  std::vector<std::string> image_ids;
  std::vector<FeatureRef> feature_index;

  std::size_t image_count() const { return values.rows(); }
  std::size_t feature_count() const { return values.cols(); }
  std::size_t nonzero_count() const {
    std::size_t n = 0;
    for (auto v : values.values()) n += v != 0;
    return n;
  }
};

/// Mean over (h, w) for every channel; identity on 1x1 maps.
inline std::vector<double> spatial_average_pool(const io::ActivationTensor& tensor) {
  const std::size_t channels = tensor.channels;
  const std::size_t cells = std::size_t{tensor.height} * tensor.width;
  std::vector<double> sums(channels, 0.0);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const float* row = tensor.values.data() + cell * channels;
    for (std::size_t c = 0; c < channels; ++c) sums[c] += row[c];
  }
  for (auto& s : sums) s /= static_cast<double>(cells);
  return sums;
}

/// Pooled vectors of one image, keyed by layer id.
struct PooledImage {
  std::string image_id;
  std::map<std::string, std::vector<double>> layers;
};

/// Row i is image i's pooled vectors concatenated in layer order.
inline RawEmbeddingMatrix assemble_raw(std::span<const io::LayerDescriptor> layers,
                                       std::span<const PooledImage> images) {
  RawEmbeddingMatrix raw;
  std::size_t width = 0;
  for (const auto& layer : layers) {
    for (std::uint32_t c = 0; c < layer.channels; ++c) {
      raw.feature_index.push_back({layer.layer_id, c});
    }
    width += layer.channels;
  }
  raw.values = Matrix<double>(images.size(), width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& image = images[i];
    raw.image_ids.push_back(image.image_id);
    std::size_t col = 0;
    for (const auto& layer : layers) {
      const auto it = image.layers.find(layer.layer_id);
      if (it == image.layers.end()) {
        throw Error(ErrorCode::MissingLayer,
                    "image '" + image.image_id + "' has no tensor for layer '" +
                        layer.layer_id + "'");
      }
      if (it->second.size() != layer.channels) {
        throw Error(ErrorCode::LayerMismatch,
                    "image '" + image.image_id + "', layer '" + layer.layer_id + "': " +
                        std::to_string(it->second.size()) + " pooled values for " +
                        std::to_string(layer.channels) + " channels");
      }
      for (double v : it->second) raw.values(i, col++) = v;
    }
  }
  return raw;
}

/// Reads and pools every activation tensor listed in the manifest.
inline RawEmbeddingMatrix embed_manifest(const io::DatasetManifest& manifest) {
  std::vector<PooledImage> pooled;
  pooled.reserve(manifest.images.size());
  for (const auto& image : manifest.images) {
    PooledImage p{image.image_id, {}};
    for (const auto& layer : manifest.layers) {
      const auto tensor = io::read_tensor(manifest.activation_path(image, layer), layer);
      p.layers.emplace(layer.layer_id, spatial_average_pool(tensor));
    }
    pooled.push_back(std::move(p));
  }
  return assemble_raw(manifest.layers, pooled);
}

/// Population mean and std per column, each column reduced sequentially in
/// row order.
inline FeatureStats feature_stats(const Matrix<double>& m) {
  const std::size_t n = m.rows();
  const std::size_t f = m.cols();
  FeatureStats stats{std::vector<double>(f, 0.0), std::vector<double>(f, 0.0)};
  for (std::size_t j = 0; j < f; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += m(i, j);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    bool constant = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = m(i, j) - mean;
      sq += d * d;
      constant = constant && m(i, j) == m(0, j);
    }
    stats.mean[j] = mean;
    stats.std[j] = constant ? 0.0 : std::sqrt(sq / static_cast<double>(n));
  }
  return stats;
}

/// z-scores per feature; constant features map to 0.
inline std::pair<Matrix<double>, FeatureStats> standardize(const RawEmbeddingMatrix& raw) {
  if (raw.values.rows() < 2) {
    throw Error(ErrorCode::TooFewImages,
                "standardization needs at least 2 images, got " +
                    std::to_string(raw.values.rows()));
  }
  FeatureStats stats = feature_stats(raw.values);
  Matrix<double> out(raw.values.rows(), raw.values.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out(i, j) = stats.std[j] > 0.0 ? (raw.values(i, j) - stats.mean[j]) / stats.std[j]
                                     : 0.0;
    }
  }
  return {std::move(out), std::move(stats)};
}

inline std::int8_t ternarize(double value, const FneConfig& config) {
  if (value > config.threshold_pos) return 1;
  if (value < config.threshold_neg) return -1;
  return 0;
}

inline Matrix<std::int8_t> discretize(const Matrix<double>& standardized,
                                      const FneConfig& config) {
  config.validate();
  Matrix<std::int8_t> out(standardized.rows(), standardized.cols());
  auto src = standardized.values();
  auto dst = out.values();
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] = ternarize(src[k], config);
  return out;
}

inline TernaryEmbedding discretize(const Matrix<double>& standardized,
                                   const RawEmbeddingMatrix& raw, const FneConfig& config) {
  return {discretize(standardized, config), raw.image_ids, raw.feature_index};
}

/// manifest -> pooled -> standardized -> ternary, in that order.
inline TernaryEmbedding full_network_embedding(const io::DatasetManifest& manifest,
                                               const FneConfig& config) {
  config.validate();
  const RawEmbeddingMatrix raw = embed_manifest(manifest);
  const auto [standardized, stats] = standardize(raw);
  return discretize(standardized, raw, config);
}

// ---------------------------------------------------------------------------
// Embedding cache: a rank-2 tensor file of {-1, 0, 1} floats plus a JSON
// sidecar holding the row and column labels.

inline std::string sidecar_text(const TernaryEmbedding& e) {
  nlohmann::ordered_json j;
  j["image_ids"] = e.image_ids;
  j["feature_index"] = nlohmann::ordered_json::array();
  for (const auto& f : e.feature_index) {
    j["feature_index"].push_back(nlohmann::ordered_json::array({f.layer_id, f.channel}));
  }
  return j.dump(2) + "\n";
}

inline void write_embedding(const io::fs::path& tensor_path,
                            const io::fs::path& sidecar_path, const TernaryEmbedding& e) {
  std::vector<float> values(e.values.size());
  auto src = e.values.values();
  for (std::size_t k = 0; k < values.size(); ++k) values[k] = static_cast<float>(src[k]);
  const std::array<std::uint32_t, 2> dims = {static_cast<std::uint32_t>(e.image_count()),
                                             static_cast<std::uint32_t>(e.feature_count())};
  io::write_tensor_file(tensor_path, dims, values);
  const std::string text = sidecar_text(e);
  io::detail::write_file(sidecar_path,
                         std::span(reinterpret_cast<const unsigned char*>(text.data()),
                                   text.size()));
}

inline TernaryEmbedding read_embedding(const io::fs::path& tensor_path,
                                       const io::fs::path& sidecar_path) {
  const io::RawTensor raw = io::read_tensor_file(tensor_path);
  if (raw.dims.size() != 2) {
    throw Error(ErrorCode::ShapeMismatch, tensor_path.string() + ": embedding must be rank 2");
  }
  TernaryEmbedding e;
  e.values = Matrix<std::int8_t>(raw.dims[0], raw.dims[1]);
  auto dst = e.values.values();
  for (std::size_t k = 0; k < raw.values.size(); ++k) {
    const float v = raw.values[k];
    if (v != -1.0f && v != 0.0f && v != 1.0f) {
      throw Error(ErrorCode::SchemaError,
                  tensor_path.string() + ": embedding entry outside {-1, 0, 1}");
    }
    dst[k] = static_cast<std::int8_t>(v);
  }

  if (!io::fs::is_regular_file(sidecar_path)) {
    throw Error(ErrorCode::MissingFile, sidecar_path.string());
  }
  std::ifstream in(sidecar_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    e.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    for (const auto& f : j.at("feature_index")) {
      e.feature_index.push_back({f.at(0).get<std::string>(), f.at(1).get<std::uint32_t>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaError, sidecar_path.string() + ": " + ex.what());
  }
  if (e.image_ids.size() != e.image_count() || e.feature_index.size() != e.feature_count()) {
    throw Error(ErrorCode::ShapeMismatch,
                sidecar_path.string() + ": labels do not match the embedding shape");
  }
  return e;
}

}  // namespace fnegraph::fne
