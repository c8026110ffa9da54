#pragma once

// Binary tensor files, weight files and dataset manifests.
//
// Tensor file layout (all integers little-endian):
//   bytes 0-5   magic "EGT1\0\0"
//   byte  6     rank (1..4)
//   bytes 7..   rank x uint32 dims
//   payload     prod(dims) x IEEE-754 binary32, row-major, last dim fastest

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnegraph/error.hpp"

namespace fnegraph::io {

namespace fs = std::filesystem;

inline constexpr std::array<char, 6> kTensorMagic = {'E', 'G', 'T', '1', '\0', '\0'};
inline constexpr std::size_t kMaxRank = 4;

enum class LayerKind { Convolutional, FullyConnected };

inline std::string to_string(LayerKind kind) {
  return kind == LayerKind::Convolutional ? "convolutional" : "fully_connected";
}

struct LayerDescriptor {
  std::string layer_id;
  LayerKind kind = LayerKind::Convolutional;
  std::uint32_t channels = 0;
  std::uint32_t spatial_height = 1;
  std::uint32_t spatial_width = 1;

  std::size_t value_count() const {
    return std::size_t{spatial_height} * spatial_width * channels;
  }
  friend bool operator==(const LayerDescriptor&, const LayerDescriptor&) = default;
};

struct ImageEntry {
  std::string image_id;
  std::string class_label;
  /// Path of the activation tensor, relative to the manifest directory. The
  /// token "{layer}" is replaced by the layer id; it may only be omitted when
  /// the manifest holds a single layer.
  std::string activation_file;
  friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<ImageEntry> images;
  std::vector<LayerDescriptor> layers;
  /// One file per consecutive layer pair, or empty for no feature-feature edges.
  std::vector<std::string> weight_files;
  /// Directory that relative paths resolve against. Not serialized.
  fs::path base_dir;

  std::size_t feature_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers) total += layer.channels;
    return total;
  }

  /// Global column index of channel 0 of each layer.
  std::vector<std::size_t> layer_offsets() const {
    std::vector<std::size_t> offsets;
    offsets.reserve(layers.size());
    std::size_t offset = 0;
    for (const auto& layer : layers) {
      offsets.push_back(offset);
      offset += layer.channels;
    }
    return offsets;
  }

  std::size_t class_count() const {
    std::set<std::string> labels;
    for (const auto& image : images) labels.insert(image.class_label);
    return labels.size();
  }

  fs::path activation_path(const ImageEntry& image, const LayerDescriptor& layer) const {
    std::string name = image.activation_file;
    static constexpr std::string_view token = "{layer}";
    for (auto pos = name.find(token); pos != std::string::npos;
         pos = name.find(token, pos + layer.layer_id.size())) {
      name.replace(pos, token.size(), layer.layer_id);
    }
    return base_dir / name;
  }

  fs::path weight_path(std::size_t pair_index) const {
    return base_dir / weight_files.at(pair_index);
  }

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.dataset_name == b.dataset_name && a.images == b.images &&
           a.layers == b.layers && a.weight_files == b.weight_files;
  }
};

/// Activations of one image at one layer, shape (height, width, channels).
struct ActivationTensor {
  std::string layer_id;
  std::uint32_t height = 1;
  std::uint32_t width = 1;
  std::uint32_t channels = 0;
  std::vector<float> values;

  float at(std::size_t h, std::size_t w, std::size_t c) const {
    return values[(h * width + w) * channels + c];
  }
  friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;
};

/// Weights between two consecutive layers, shape (out, in, field_h, field_w).
/// Fully-connected weights have a 1x1 field and are stored rank 2.
struct LayerWeights {
  std::string from_layer;
  std::string to_layer;
  std::uint32_t out_channels = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t field_height = 1;
  std::uint32_t field_width = 1;
  bool has_receptive_field = false;
  std::vector<float> values;

  float at(std::size_t o, std::size_t i, std::size_t rh, std::size_t rw) const {
    return values[((o * in_channels + i) * field_height + rh) * field_width + rw];
  }
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

/// A decoded tensor file, before any interpretation of its shape.
struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct TensorHeader {
  std::vector<std::uint32_t> dims;
  std::size_t header_bytes = 0;
  std::size_t payload_bytes = 0;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t d) { return a * d; });
  }
};

namespace detail {

inline std::uint32_t load_u32_le(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

inline void store_u32_le(std::uint32_t v, std::vector<unsigned char>& out) {
  out.push_back(static_cast<unsigned char>(v & 0xFFu));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFFu));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xFFu));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xFFu));
}

inline std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

inline std::string dims_string(std::span<const std::uint32_t> dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace detail

inline TensorHeader parse_header(std::span<const unsigned char> bytes,
                                 const std::string& origin) {
  constexpr std::size_t fixed = kTensorMagic.size() + 1;
  if (bytes.size() < fixed ||
      std::memcmp(bytes.data(), kTensorMagic.data(), kTensorMagic.size()) != 0) {
    throw Error(ErrorCode::SchemaError, origin + ": not a tensor file (bad magic)");
  }
  const std::size_t rank = bytes[kTensorMagic.size()];
  if (rank < 1 || rank > kMaxRank) {
    throw Error(ErrorCode::SchemaError,
                origin + ": unsupported rank " + std::to_string(rank));
  }
  TensorHeader header;
  header.header_bytes = fixed + 4 * rank;
  if (bytes.size() < header.header_bytes) {
    throw Error(ErrorCode::LengthMismatch, origin + ": truncated shape header");
  }
  for (std::size_t i = 0; i < rank; ++i) {
    header.dims.push_back(detail::load_u32_le(bytes.data() + fixed + 4 * i));
  }
  header.payload_bytes = bytes.size() - header.header_bytes;
  return header;
}

inline std::vector<unsigned char> encode_tensor(std::span<const std::uint32_t> dims,
                                                std::span<const float> values) {
  if (dims.empty() || dims.size() > kMaxRank) {
    throw Error(ErrorCode::ShapeMismatch, "rank must be 1..4");
  }
  const std::size_t count = std::accumulate(
      dims.begin(), dims.end(), std::size_t{1},
      [](std::size_t a, std::uint32_t d) { return a * d; });
  if (count != values.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "shape " + detail::dims_string(dims) + " needs " +
                    std::to_string(count) + " values, got " +
                    std::to_string(values.size()));
  }
  std::vector<unsigned char> out;
  out.reserve(kTensorMagic.size() + 1 + 4 * dims.size() + 4 * values.size());
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(static_cast<unsigned char>(dims.size()));
  for (auto d : dims) detail::store_u32_le(d, out);
  for (float v : values) detail::store_u32_le(std::bit_cast<std::uint32_t>(v), out);
  return out;
}

/// Decodes a tensor; the payload must hold exactly prod(dims) floats, all finite.
inline RawTensor decode_tensor(std::span<const unsigned char> bytes,
                               const std::string& origin = "<memory>") {
  TensorHeader header = parse_header(bytes, origin);
  const std::size_t count = header.element_count();
  if (header.payload_bytes != 4 * count) {
    throw Error(ErrorCode::LengthMismatch,
                origin + ": shape " + detail::dims_string(header.dims) + " needs " +
                    std::to_string(4 * count) + " payload bytes, found " +
                    std::to_string(header.payload_bytes));
  }
  RawTensor tensor;
  tensor.dims = std::move(header.dims);
  tensor.values.resize(count);
  const unsigned char* p = bytes.data() + header.header_bytes;
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const float v = std::bit_cast<float>(detail::load_u32_le(p));
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteValue,
                  origin + ": non-finite value at element " + std::to_string(i));
    }
    tensor.values[i] = v;
  }
  return tensor;
}

inline RawTensor read_tensor_file(const fs::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_tensor(bytes, path.string());
}

inline void write_tensor_file(const fs::path& path, std::span<const std::uint32_t> dims,
                              std::span<const float> values) {
  detail::write_file(path, encode_tensor(dims, values));
}

/// Reads only the shape header; the payload length is taken from the file size.
inline TensorHeader read_tensor_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::vector<unsigned char> head(kTensorMagic.size() + 1 + 4 * kMaxRank);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  TensorHeader header = parse_header(head, path.string());
  header.payload_bytes = static_cast<std::size_t>(fs::file_size(path)) - header.header_bytes;
  return header;
}

// ---------------------------------------------------------------------------
// Activations

inline ActivationTensor read_tensor(const fs::path& path, const LayerDescriptor& layer) {
  const auto bytes = detail::read_file(path);
  const std::string origin = path.string();
  const TensorHeader header = parse_header(bytes, origin);

  const bool rank3 = header.dims.size() == 3 && header.dims[0] == layer.spatial_height &&
                     header.dims[1] == layer.spatial_width &&
                     header.dims[2] == layer.channels;
  const bool rank1 = header.dims.size() == 1 && layer.spatial_height == 1 &&
                     layer.spatial_width == 1 && header.dims[0] == layer.channels;
  if (!rank3 && !rank1) {
    throw Error(ErrorCode::ShapeMismatch,
                origin + ": shape " + detail::dims_string(header.dims) +
                    " does not match layer " + layer.layer_id);
  }
  RawTensor raw = decode_tensor(bytes, origin);
  ActivationTensor tensor;
  tensor.layer_id = layer.layer_id;
  tensor.height = layer.spatial_height;
  tensor.width = layer.spatial_width;
  tensor.channels = layer.channels;
  tensor.values = std::move(raw.values);
  return tensor;
}

inline void write_tensor(const fs::path& path, const ActivationTensor& tensor) {
  const std::array<std::uint32_t, 3> dims = {tensor.height, tensor.width, tensor.channels};
  write_tensor_file(path, dims, tensor.values);
}

// ---------------------------------------------------------------------------
// Weights

inline LayerWeights read_weights(const fs::path& path, const LayerDescriptor& from,
                                 const LayerDescriptor& to) {
  const auto bytes = detail::read_file(path);
  const std::string origin = path.string();
  const TensorHeader header = parse_header(bytes, origin);
  const auto& dims = header.dims;

  if ((dims.size() != 2 && dims.size() != 4) || dims[0] != to.channels ||
      dims[1] != from.channels) {
    throw Error(ErrorCode::ShapeMismatch,
                origin + ": weight shape " + detail::dims_string(dims) + " is not (" +
                    std::to_string(to.channels) + ", " + std::to_string(from.channels) +
                    "[, h, w]) for " + from.layer_id + " -> " + to.layer_id);
  }
  if (header.payload_bytes != 4 * header.element_count()) {
    throw Error(ErrorCode::ShapeMismatch,
                origin + ": header " + detail::dims_string(dims) + " declares " +
                    std::to_string(header.element_count()) + " values, payload holds " +
                    std::to_string(header.payload_bytes / 4.0));
  }
  RawTensor raw = decode_tensor(bytes, origin);

  LayerWeights weights;
  weights.from_layer = from.layer_id;
  weights.to_layer = to.layer_id;
  weights.out_channels = dims[0];
  weights.in_channels = dims[1];
  weights.has_receptive_field = dims.size() == 4;
  if (weights.has_receptive_field) {
    weights.field_height = dims[2];
    weights.field_width = dims[3];
  }
  weights.values = std::move(raw.values);
  return weights;
}

inline void write_weights(const fs::path& path, const LayerWeights& weights) {
  if (weights.has_receptive_field) {
    const std::array<std::uint32_t, 4> dims = {weights.out_channels, weights.in_channels,
                                               weights.field_height, weights.field_width};
    write_tensor_file(path, dims, weights.values);
  } else {
    const std::array<std::uint32_t, 2> dims = {weights.out_channels, weights.in_channels};
    write_tensor_file(path, dims, weights.values);
  }
}

// ---------------------------------------------------------------------------
// Manifest

namespace detail {

using ojson = nlohmann::ordered_json;

inline const ojson& require(const ojson& obj, const char* field, const std::string& where) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw Error(ErrorCode::SchemaError, where + ": missing field '" + field + "'");
  }
  return obj.at(field);
}

inline std::string require_string(const ojson& obj, const char* field,
                                  const std::string& where) {
  const auto& v = require(obj, field, where);
  if (!v.is_string() || v.get<std::string>().empty()) {
    throw Error(ErrorCode::SchemaError,
                where + ": field '" + field + "' must be a non-empty string");
  }
  return v.get<std::string>();
}

inline std::uint32_t require_positive(const ojson& obj, const char* field,
                                      const std::string& where) {
  const auto& v = require(obj, field, where);
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0 ||
      v.get<std::int64_t>() > std::int64_t{0xFFFFFFFF}) {
    throw Error(ErrorCode::SchemaError,
                where + ": field '" + field + "' must be a positive integer");
  }
  return v.get<std::uint32_t>();
}

}  // namespace detail

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["dataset_name"] = manifest.dataset_name;
  j["images"] = nlohmann::ordered_json::array();
  for (const auto& image : manifest.images) {
    j["images"].push_back({{"image_id", image.image_id},
                           {"class_label", image.class_label},
                           {"activation_file", image.activation_file}});
  }
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : manifest.layers) {
    j["layers"].push_back({{"layer_id", layer.layer_id},
                           {"kind", to_string(layer.kind)},
                           {"channels", layer.channels},
                           {"spatial_height", layer.spatial_height},
                           {"spatial_width", layer.spatial_width}});
  }
  j["weight_files"] = manifest.weight_files;
  return j;
}

/// Schema validation only; referenced files are not touched.
inline DatasetManifest manifest_from_json(const nlohmann::ordered_json& j,
                                          const fs::path& base_dir = {}) {
  using detail::require;
  DatasetManifest m;
  m.base_dir = base_dir;
  m.dataset_name = detail::require_string(j, "dataset_name", "manifest");

  const auto& layers = require(j, "layers", "manifest");
  if (!layers.is_array() || layers.empty()) {
    throw Error(ErrorCode::SchemaError, "manifest: 'layers' must be a non-empty array");
  }
  std::set<std::string> layer_ids;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "layers[" + std::to_string(i) + "]";
    LayerDescriptor layer;
    layer.layer_id = detail::require_string(layers[i], "layer_id", where);
    const std::string kind = detail::require_string(layers[i], "kind", where);
    if (kind == "convolutional") {
      layer.kind = LayerKind::Convolutional;
    } else if (kind == "fully_connected") {
      layer.kind = LayerKind::FullyConnected;
    } else {
      throw Error(ErrorCode::SchemaError, where + ": field 'kind' has unknown value '" +
                                              kind + "'");
    }
    layer.channels = detail::require_positive(layers[i], "channels", where);
    layer.spatial_height = detail::require_positive(layers[i], "spatial_height", where);
    layer.spatial_width = detail::require_positive(layers[i], "spatial_width", where);
    if (layer.kind == LayerKind::FullyConnected &&
        (layer.spatial_height != 1 || layer.spatial_width != 1)) {
      throw Error(ErrorCode::SchemaError,
                  where + ": field 'spatial_height'/'spatial_width' must be 1 for "
                          "fully_connected layers");
    }
    if (!layer_ids.insert(layer.layer_id).second) {
      throw Error(ErrorCode::SchemaError,
                  where + ": field 'layer_id' duplicates '" + layer.layer_id + "'");
    }
    m.layers.push_back(std::move(layer));
  }

  if (j.contains("feature_count")) {
    const auto& declared = j.at("feature_count");
    if (!declared.is_number_integer() ||
        declared.get<std::int64_t>() != static_cast<std::int64_t>(m.feature_count())) {
      throw Error(ErrorCode::LayerMismatch,
                  "manifest: feature_count " + declared.dump() +
                      " differs from the layer channel sum " +
                      std::to_string(m.feature_count()));
    }
  }

  const auto& images = require(j, "images", "manifest");
  if (!images.is_array() || images.empty()) {
    throw Error(ErrorCode::SchemaError, "manifest: 'images' must be a non-empty array");
  }
  std::set<std::string> image_ids;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    ImageEntry image;
    image.image_id = detail::require_string(images[i], "image_id", where);
    image.class_label = detail::require_string(images[i], "class_label", where);
    image.activation_file = detail::require_string(images[i], "activation_file", where);
    if (m.layers.size() > 1 && image.activation_file.find("{layer}") == std::string::npos) {
      throw Error(ErrorCode::SchemaError,
                  where + ": field 'activation_file' needs a {layer} placeholder when "
                          "the manifest has several layers");
    }
    if (!image_ids.insert(image.image_id).second) {
      throw Error(ErrorCode::SchemaError,
                  where + ": field 'image_id' duplicates '" + image.image_id + "'");
    }
    m.images.push_back(std::move(image));
  }

  const auto& weights = require(j, "weight_files", "manifest");
  if (!weights.is_array()) {
    throw Error(ErrorCode::SchemaError, "manifest: 'weight_files' must be an array");
  }
  if (!weights.empty() && weights.size() + 1 != m.layers.size()) {
    throw Error(ErrorCode::SchemaError,
                "manifest: field 'weight_files' needs one entry per consecutive layer "
                "pair (" + std::to_string(m.layers.size() - 1) + "), got " +
                    std::to_string(weights.size()));
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!weights[i].is_string() || weights[i].get<std::string>().empty()) {
      throw Error(ErrorCode::SchemaError,
                  "weight_files[" + std::to_string(i) + "]: must be a non-empty string");
    }
    m.weight_files.push_back(weights[i].get<std::string>());
  }
  return m;
}

/// Confirms every referenced file exists and that its shape header agrees
/// with the layer descriptors. Payload values are decoded later, on read.
inline void validate_manifest_files(const DatasetManifest& m) {
  for (const auto& image : m.images) {
    for (const auto& layer : m.layers) {
      const auto path = m.activation_path(image, layer);
      if (!fs::is_regular_file(path)) {
        throw Error(ErrorCode::MissingFile, "activation file for image '" +
                                                image.image_id + "', layer '" +
                                                layer.layer_id + "': " + path.string());
      }
      const auto header = read_tensor_header(path);
      if (header.element_count() != layer.value_count() ||
          header.payload_bytes != 4 * header.element_count()) {
        throw Error(ErrorCode::LayerMismatch,
                    path.string() + ": shape " + detail::dims_string(header.dims) +
                        " inconsistent with layer '" + layer.layer_id + "'");
      }
    }
  }
  for (std::size_t i = 0; i < m.weight_files.size(); ++i) {
    const auto path = m.weight_path(i);
    if (!fs::is_regular_file(path)) {
      throw Error(ErrorCode::MissingFile, "weight file: " + path.string());
    }
    const auto header = read_tensor_header(path);
    const auto& from = m.layers[i];
    const auto& to = m.layers[i + 1];
    if ((header.dims.size() != 2 && header.dims.size() != 4) ||
        header.dims[0] != to.channels || header.dims[1] != from.channels) {
      throw Error(ErrorCode::LayerMismatch,
                  path.string() + ": weight shape " + detail::dims_string(header.dims) +
                      " inconsistent with " + from.layer_id + " -> " + to.layer_id);
    }
  }
}

inline DatasetManifest read_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorCode::MissingFile, "manifest " + path.string());
  }
  std::ifstream in(path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  DatasetManifest m = manifest_from_json(j, path.parent_path());
  validate_manifest_files(m);
  return m;
}

inline void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const std::string text = manifest_to_json(manifest).dump(2) + "\n";
  detail::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()),
                                     text.size()));
}

}  // namespace fnegraph::io
