#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attrscan/bundle_io.hpp"
#include "attrscan/tensor.hpp"

namespace attrscan {

// Attribution-weighted feature vector F_W (length d).
using WeightedVector = std::vector<double>;

inline constexpr double kSimilarityCap = 1e8;  // 1 / epsilon for identical masks
inline constexpr double kZeroNorm = 1e-12;

// Clamp negatives to zero and rescale to unit sum. An all-zero mask becomes uniform.
Matrix normalize_mask(const Matrix& raw);

// out_c = sum_ij F[c,i,j] * W[i,j]; W must already be normalized.
WeightedVector weighted_vector(const FeatureMap& features, const Matrix& mask);

// Convenience: normalize the sample's raw mask, then weight.
WeightedVector weighted_vector(const AttributionSample& sample);
std::vector<WeightedVector> weighted_vectors(std::span<const AttributionSample> samples);

// Spatial mean of F over (m, n): the plain CNN embedding used for feature similarity.
std::vector<double> pooled_features(const FeatureMap& features);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Average of the exact 1-D Wasserstein-1 distances between the row marginals and
// between the column marginals, in grid cells.
double mask_distance(const Matrix& a, const Matrix& b);

// 1 / max(mask_distance, 1e-8).
double attribution_similarity(const Matrix& a, const Matrix& b);

struct NeighborConsistency {
    std::vector<double> feature_similarity;      // per point, mean D_sim over neighbors
    std::vector<double> attribution_similarity;  // per point, mean A_sim over neighbors
    double mean_feature_similarity = 0.0;
    double mean_attribution_similarity = 0.0;
};

// Neighbors are the k nearest rows of `space` (Euclidean, ties by index).
NeighborConsistency neighbor_consistency(const Matrix& space, std::span<const AttributionSample> samples,
                                         std::size_t k_neighbors = 10);

// Indices of the k nearest rows to row i, excluding i. Ties break by lower index.
std::vector<std::size_t> nearest_rows(const Matrix& points, std::size_t i, std::size_t k);

WeightedVector slice_centroid(std::span<const WeightedVector> members);
double slice_coherence(std::span<const WeightedVector> members);

// Corner-aligned bilinear resize to (height x width); target must not be smaller.
Matrix upsample_mask(const Matrix& mask, std::size_t height, std::size_t width);

}  // namespace attrscan
