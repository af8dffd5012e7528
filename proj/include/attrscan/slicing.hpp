#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "attrscan/attribution.hpp"
#include "attrscan/geometry.hpp"
#include "attrscan/tensor.hpp"

namespace attrscan {

struct SliceConfig {
    std::size_t initial_k = 20;
    double coherence_threshold = 0.8;
    std::size_t k_step = 5;
    std::size_t k_max = 200;
    std::uint64_t seed = 0;
    std::optional<std::size_t> override_k;  // fixed k, no over-clustering loop

    void validate() const;
    bool operator==(const SliceConfig&) const = default;
};

struct KMeansResult {
    std::vector<std::size_t> assignment;
    Matrix centroids;  // k x 2
    std::size_t iterations = 0;
};

// Seeded k-means++ then Lloyd to an exact fixed point. Nearest-centroid ties go
// to the lowest index; empty clusters are re-seeded at the point farthest from
// its own centroid.
KMeansResult kmeans_2d(const Matrix& coords, std::size_t k, std::uint64_t seed);

enum class ConfusionCell { TruePositive, FalsePositive, TrueNegative, FalseNegative, Correct, Incorrect };
std::string_view to_string(ConfusionCell cell) noexcept;
using ConfusionCells = std::map<ConfusionCell, std::vector<std::size_t>>;

struct Hull {
    Polygon vertices;
    bool degenerate = false;  // fewer than 3 non-collinear members; display-only triangle
};

inline constexpr double kDegenerateHullRadius = 1e-3;

struct Slice {
    std::size_t id = 0;
    std::vector<std::size_t> members;
    Point2 centroid_2d;
    WeightedVector centroid_wv;
    double coherence = 0.0;
    Hull hull;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
    ConfusionCells confusion_cells;
};

struct SliceSet {
    std::vector<Slice> slices;
    std::vector<std::size_t> assignment;  // sample -> slice id
    SliceConfig config;
    bool converged = false;
    std::vector<std::size_t> incoherent_ids;
    std::vector<std::size_t> k_trace;  // k tried by each clustering round
};

// Over-clustering loop: raise k by k_step until every slice's coherence reaches
// the threshold or k_max is hit.
SliceSet find_slices(const Matrix& coords, std::span<const WeightedVector> vectors, const SliceConfig& config);

Hull slice_hull(std::span<const Point2> member_points, const Point2& centroid);
std::vector<Hull> hulls(const SliceSet& slices, const Matrix& coords);

// TP/FP/TN/FN for two classes, otherwise correct/incorrect.
ConfusionCells subdivide_confusion(std::span<const std::size_t> members, std::span<const std::uint32_t> labels,
                                   std::span<const std::uint32_t> predictions, std::uint32_t positive_class,
                                   std::size_t num_classes);

struct SliceMetrics {
    double accuracy = 0.0;
    double mean_confidence = 0.0;
};

SliceMetrics slice_metrics(std::span<const std::size_t> members, std::span<const std::uint32_t> labels,
                           std::span<const std::uint32_t> predictions, std::span<const double> confidences);

// Fills hull, accuracy, mean_confidence and confusion_cells of every slice.
void attach_slice_details(SliceSet& slices, const Matrix& coords, std::span<const std::uint32_t> labels,
                          std::span<const std::uint32_t> predictions, std::span<const double> confidences,
                          std::uint32_t positive_class, std::size_t num_classes);

}  // namespace attrscan
