#include "attrscan/slicing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "attrscan/error.hpp"
#include "attrscan/rng.hpp"

namespace attrscan {

namespace {

constexpr std::size_t kMaxLloydIterations = 10000;

double sq_dist(const Matrix& pts, std::size_t i, const Matrix& centers, std::size_t c) {
    const double dx = pts(i, 0) - centers(c, 0), dy = pts(i, 1) - centers(c, 1);
    return dx * dx + dy * dy;
}

std::vector<std::size_t> assign_all(const Matrix& pts, const Matrix& centers) {
    std::vector<std::size_t> out(pts.rows());
    for (std::size_t i = 0; i < pts.rows(); ++i) {
        std::size_t best = 0;
        double best_d = sq_dist(pts, i, centers, 0);
        for (std::size_t c = 1; c < centers.rows(); ++c) {
            const double d = sq_dist(pts, i, centers, c);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        out[i] = best;
    }
    return out;
}

Matrix kmeans_plus_plus(const Matrix& pts, std::size_t k, std::uint64_t seed) {
    const std::size_t n = pts.rows();
    Matrix centers(k, 2);
    std::size_t first = rng::below(rng::key(seed, 0xc0ffee, 0), n);
    centers(0, 0) = pts(first, 0);
    centers(0, 1) = pts(first, 1);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts, i, centers, 0);

    for (std::size_t c = 1; c < k; ++c) {
        const double total = pairwise_sum(d2);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng::uniform(rng::key(seed, 0xc0ffee, c)) * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng::below(rng::key(seed, 0xc0ffee, c), n);
        }
        centers(c, 0) = pts(pick, 0);
        centers(c, 1) = pts(pick, 1);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts, i, centers, c));
    }
    return centers;
}

// Means of assigned points; empty clusters keep their previous center.
void update_centers(const Matrix& pts, const std::vector<std::size_t>& assignment, Matrix& centers,
                    std::vector<std::size_t>& counts) {
    const std::size_t k = centers.rows();
    std::vector<std::vector<double>> xs(k), ys(k);
    for (std::size_t i = 0; i < pts.rows(); ++i) {
        xs[assignment[i]].push_back(pts(i, 0));
        ys[assignment[i]].push_back(pts(i, 1));
    }
    counts.assign(k, 0);
    for (std::size_t c = 0; c < k; ++c) {
        counts[c] = xs[c].size();
        if (counts[c] == 0) continue;
        centers(c, 0) = pairwise_sum(xs[c]) / static_cast<double>(counts[c]);
        centers(c, 1) = pairwise_sum(ys[c]) / static_cast<double>(counts[c]);
    }
}

// Moves each empty center onto the point farthest from its own center. Returns
// whether any center moved; a point at distance 0 never helps, so identical
// inputs leave the cluster empty.
bool reseed_empty(const Matrix& pts, const std::vector<std::size_t>& assignment, Matrix& centers,
                  std::vector<std::size_t>& counts) {
    bool moved = false;
    std::vector<bool> taken(pts.rows(), false);
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        if (counts[c] != 0) continue;
        std::size_t best = pts.rows();
        double best_d = 0.0;
        for (std::size_t i = 0; i < pts.rows(); ++i) {
            if (taken[i] || counts[assignment[i]] < 2) continue;
            const double d = sq_dist(pts, i, centers, assignment[i]);
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        if (best == pts.rows()) continue;
        taken[best] = true;
        --counts[assignment[best]];
        counts[c] = 1;
        centers(c, 0) = pts(best, 0);
        centers(c, 1) = pts(best, 1);
        moved = true;
    }
    return moved;
}

}  // namespace

void SliceConfig::validate() const {
    if (!(coherence_threshold >= 0.0 && coherence_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "coherence_threshold must be in [0, 1]");
    }
    if (initial_k == 0 || initial_k > k_max) throw Error(ErrorCode::InvalidArgument, "need 0 < initial_k <= k_max");
    if (k_step == 0) throw Error(ErrorCode::InvalidArgument, "k_step must be positive");
    if (override_k && *override_k == 0) throw Error(ErrorCode::InvalidArgument, "override_k must be positive");
}

std::string_view to_string(ConfusionCell cell) noexcept {
    switch (cell) {
        case ConfusionCell::TruePositive: return "TP";
        case ConfusionCell::FalsePositive: return "FP";
        case ConfusionCell::TrueNegative: return "TN";
        case ConfusionCell::FalseNegative: return "FN";
        case ConfusionCell::Correct: return "correct";
        case ConfusionCell::Incorrect: return "incorrect";
    }
    return "?";
}

KMeansResult kmeans_2d(const Matrix& coords, std::size_t k, std::uint64_t seed) {
    const std::size_t n = coords.rows();
    if (coords.cols() != 2) throw Error(ErrorCode::ShapeMismatch, "kmeans_2d expects N x 2 coordinates");
    if (k == 0 || k > n) {
        throw Error(ErrorCode::InvalidArgument, "k=" + std::to_string(k) + " must be in [1, N=" + std::to_string(n) + "]");
    }

    KMeansResult out;
    out.centroids = kmeans_plus_plus(coords, k, seed);
    out.assignment = assign_all(coords, out.centroids);
    std::vector<std::size_t> counts;
    for (out.iterations = 1; out.iterations <= kMaxLloydIterations; ++out.iterations) {
        update_centers(coords, out.assignment, out.centroids, counts);
        reseed_empty(coords, out.assignment, out.centroids, counts);
        auto next = assign_all(coords, out.centroids);
        if (next == out.assignment) break;
        out.assignment = std::move(next);
    }
    update_centers(coords, out.assignment, out.centroids, counts);
    return out;
}

Hull slice_hull(std::span<const Point2> member_points, const Point2& centroid) {
    Hull h;
    h.vertices = convex_hull(member_points);
    if (h.vertices.size() < 3) {
        h.degenerate = true;
        h.vertices.clear();
        for (int t = 0; t < 3; ++t) {
            const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * t / 3.0;
            h.vertices.push_back({centroid.x + kDegenerateHullRadius * std::cos(angle),
                                  centroid.y + kDegenerateHullRadius * std::sin(angle)});
        }
    }
    return h;
}

SliceSet find_slices(const Matrix& coords, std::span<const WeightedVector> vectors, const SliceConfig& config) {
    config.validate();
    const std::size_t n = coords.rows();
    if (vectors.size() != n) throw Error(ErrorCode::ShapeMismatch, "one weighted vector per point required");

    SliceSet set;
    set.config = config;
    std::size_t k = config.override_k.value_or(config.initial_k);
    const std::size_t k_limit = std::min(config.k_max, n);

    while (true) {
        const auto km = kmeans_2d(coords, k, rng::key(config.seed, k));
        set.k_trace.push_back(k);

        std::vector<std::size_t> slice_of_cluster(k, k);
        set.slices.clear();
        for (std::size_t c = 0; c < k; ++c) {
            if (std::find(km.assignment.begin(), km.assignment.end(), c) == km.assignment.end()) continue;
            slice_of_cluster[c] = set.slices.size();
            Slice s;
            s.id = set.slices.size();
            s.centroid_2d = {km.centroids(c, 0), km.centroids(c, 1)};
            set.slices.push_back(std::move(s));
        }
        set.assignment.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            set.assignment[i] = slice_of_cluster[km.assignment[i]];
            set.slices[set.assignment[i]].members.push_back(i);
        }

        set.incoherent_ids.clear();
        for (auto& s : set.slices) {
            std::vector<WeightedVector> members;
            members.reserve(s.members.size());
            for (auto i : s.members) members.push_back(vectors[i]);
            s.centroid_wv = slice_centroid(members);
            s.coherence = slice_coherence(members);
            if (s.coherence < config.coherence_threshold) set.incoherent_ids.push_back(s.id);
        }

        set.converged = set.incoherent_ids.empty();
        if (config.override_k || set.converged || k + config.k_step > k_limit) break;
        k += config.k_step;
    }
    return set;
}

std::vector<Hull> hulls(const SliceSet& slices, const Matrix& coords) {
    std::vector<Hull> out;
    out.reserve(slices.slices.size());
    for (const auto& s : slices.slices) {
        std::vector<Point2> pts;
        pts.reserve(s.members.size());
        for (auto i : s.members) pts.push_back({coords(i, 0), coords(i, 1)});
        out.push_back(slice_hull(pts, s.centroid_2d));
    }
    return out;
}

ConfusionCells subdivide_confusion(std::span<const std::size_t> members, std::span<const std::uint32_t> labels,
                                   std::span<const std::uint32_t> predictions, std::uint32_t positive_class,
                                   std::size_t num_classes) {
    ConfusionCells cells;
    if (num_classes == 2) {
        for (auto c : {ConfusionCell::TruePositive, ConfusionCell::FalsePositive, ConfusionCell::TrueNegative,
                       ConfusionCell::FalseNegative}) {
            cells[c];
        }
        for (auto i : members) {
            const bool label_pos = labels[i] == positive_class;
            const bool pred_pos = predictions[i] == positive_class;
            const auto cell = label_pos ? (pred_pos ? ConfusionCell::TruePositive : ConfusionCell::FalseNegative)
                                        : (pred_pos ? ConfusionCell::FalsePositive : ConfusionCell::TrueNegative);
            cells[cell].push_back(i);
        }
    } else {
        cells[ConfusionCell::Correct];
        cells[ConfusionCell::Incorrect];
        for (auto i : members) {
            cells[labels[i] == predictions[i] ? ConfusionCell::Correct : ConfusionCell::Incorrect].push_back(i);
        }
    }
    return cells;
}

SliceMetrics slice_metrics(std::span<const std::size_t> members, std::span<const std::uint32_t> labels,
                           std::span<const std::uint32_t> predictions, std::span<const double> confidences) {
    if (members.empty()) throw Error(ErrorCode::EmptySlice, "metrics of an empty slice");
    std::size_t correct = 0;
    std::vector<double> conf;
    conf.reserve(members.size());
    for (auto i : members) {
        if (labels[i] == predictions[i]) ++correct;
        conf.push_back(confidences[i]);
    }
    const auto count = static_cast<double>(members.size());
    return {static_cast<double>(correct) / count, pairwise_sum(conf) / count};
}

void attach_slice_details(SliceSet& slices, const Matrix& coords, std::span<const std::uint32_t> labels,
                          std::span<const std::uint32_t> predictions, std::span<const double> confidences,
                          std::uint32_t positive_class, std::size_t num_classes) {
    auto geometry = hulls(slices, coords);
    for (auto& s : slices.slices) {
        s.hull = std::move(geometry[s.id]);
        const auto m = slice_metrics(s.members, labels, predictions, confidences);
        s.accuracy = m.accuracy;
        s.mean_confidence = m.mean_confidence;
        s.confusion_cells = subdivide_confusion(s.members, labels, predictions, positive_class, num_classes);
    }
}

}  // namespace attrscan
