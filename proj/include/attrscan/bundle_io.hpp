#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attrscan/tensor.hpp"

namespace attrscan {

// TensorFile layout (little-endian):
//   "ATSC" | u32 version=1 | u32 dtype=1 (binary32) | u32 ndim | ndim x u64 dims | payload
inline constexpr char kTensorMagic[4] = {'A', 'T', 'S', 'C'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

void write_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<char> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::vector<char>& bytes, const std::string& origin = "<memory>");

struct SampleRecord {
    std::string id;
    std::uint32_t label = 0;
    std::uint32_t prediction = 0;
    double confidence = 0.0;
    std::string feature_path;
    std::string attribution_path;
    std::optional<std::string> image_path;

    bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
    std::string dataset_name;
    std::vector<std::string> class_names;
    std::uint32_t positive_class = 0;
    std::vector<SampleRecord> samples;
    std::optional<std::string> embedding_path;

    bool operator==(const Manifest&) const = default;
};

// One exported sample: feature map F (d x m x n), raw attribution mask W (m x n).
struct AttributionSample {
    std::string id;
    std::uint32_t label = 0;
    std::uint32_t prediction = 0;
    double confidence = 0.0;
    FeatureMap features;
    Matrix attribution;
};

struct FeatureShape {
    std::uint64_t channels = 0;
    std::uint64_t height = 0;
    std::uint64_t width = 0;
    bool operator==(const FeatureShape&) const = default;
};

// In-memory validation bundle. Tensors are indexed parallel to manifest.samples.
struct ValidationBundle {
    Manifest manifest;
    std::vector<Tensor> features;
    std::vector<Tensor> attributions;
    std::vector<std::optional<Tensor>> images;
    std::optional<Tensor> embedding;

    std::size_t size() const noexcept { return manifest.samples.size(); }
    bool has_images() const noexcept;
    FeatureShape feature_shape() const;
    AttributionSample sample(std::size_t i) const;
    std::vector<AttributionSample> attribution_samples() const;

    bool operator==(const ValidationBundle&) const = default;
};

// Throws Error on any violated invariant; read_bundle and write_bundle call it.
void validate_bundle(const ValidationBundle& bundle);

ValidationBundle read_bundle(const std::filesystem::path& root);

// Whole-bundle atomic: stages into a sibling temp directory, then renames.
void write_bundle(const ValidationBundle& bundle, const std::filesystem::path& root);

// Default relative locations for a sample's tensors inside a bundle.
std::string default_feature_path(const std::string& id);
std::string default_attribution_path(const std::string& id);
std::string default_image_path(const std::string& id);

// Stable 64-bit content hash over the manifest and every tensor payload.
std::uint64_t bundle_hash(const ValidationBundle& bundle);

}  // namespace attrscan
