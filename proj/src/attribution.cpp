#include "attrscan/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "attrscan/error.hpp"

namespace attrscan {

namespace {

double w1_1d(std::span<const double> p, std::span<const double> q) {
    double cdf_gap = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
        cdf_gap += p[k] - q[k];
        total += std::abs(cdf_gap);
    }
    return total;
}

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "mask shapes differ");
    }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

}  // namespace

Matrix normalize_mask(const Matrix& raw) {
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t k = 0; k < raw.size(); ++k) out.data()[k] = std::max(raw.data()[k], 0.0);
    const double total = pairwise_sum(out.data());
    if (!(total > 0.0)) {
        std::fill(out.data().begin(), out.data().end(), 1.0 / static_cast<double>(raw.size()));
        return out;
    }
    for (double& v : out.data()) v /= total;
    return out;
}

WeightedVector weighted_vector(const FeatureMap& features, const Matrix& mask) {
    if (features.height != mask.rows() || features.width != mask.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "mask is " + std::to_string(mask.rows()) + "x" +
                                                  std::to_string(mask.cols()) + ", feature map spatial size is " +
                                                  std::to_string(features.height) + "x" +
                                                  std::to_string(features.width));
    }
    const std::size_t plane = features.height * features.width;
    WeightedVector out(features.channels);
    std::vector<double> terms(plane);
    for (std::size_t c = 0; c < features.channels; ++c) {
        const double* f = features.values.data() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) terms[p] = f[p] * mask.data()[p];
        out[c] = pairwise_sum(terms);
    }
    return out;
}

WeightedVector weighted_vector(const AttributionSample& sample) {
    return weighted_vector(sample.features, normalize_mask(sample.attribution));
}

std::vector<WeightedVector> weighted_vectors(std::span<const AttributionSample> samples) {
    std::vector<WeightedVector> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(weighted_vector(s));
    return out;
}

std::vector<double> pooled_features(const FeatureMap& features) {
    const std::size_t plane = features.height * features.width;
    std::vector<double> out(features.channels);
    for (std::size_t c = 0; c < features.channels; ++c) {
        out[c] = pairwise_sum({features.values.data() + c * plane, plane}) / static_cast<double>(plane);
    }
    return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw Error(ErrorCode::ShapeMismatch, "vector lengths differ");
    double dot = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        dot += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    if (nu < kZeroNorm || nv < kZeroNorm) return 0.0;
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

double mask_distance(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b);
    std::vector<double> ra(a.rows(), 0.0), rb(a.rows(), 0.0), ca(a.cols(), 0.0), cb(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            ra[i] += a(i, j);
            rb[i] += b(i, j);
            ca[j] += a(i, j);
            cb[j] += b(i, j);
        }
    }
    return 0.5 * (w1_1d(ra, rb) + w1_1d(ca, cb));
}

double attribution_similarity(const Matrix& a, const Matrix& b) {
    return 1.0 / std::max(mask_distance(a, b), 1.0 / kSimilarityCap);
}

std::vector<std::size_t> nearest_rows(const Matrix& points, std::size_t i, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(points.rows());
    for (std::size_t j = 0; j < points.rows(); ++j) {
        if (j != i) d.emplace_back(squared_distance(points.row(i), points.row(j)), j);
    }
    k = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out(k);
    for (std::size_t t = 0; t < k; ++t) out[t] = d[t].second;
    return out;
}

NeighborConsistency neighbor_consistency(const Matrix& space, std::span<const AttributionSample> samples,
                                         std::size_t k_neighbors) {
    const std::size_t n = space.rows();
    if (samples.size() != n) throw Error(ErrorCode::ShapeMismatch, "space rows != sample count");
    if (k_neighbors == 0 || n <= k_neighbors) {
        throw Error(ErrorCode::TooFewPoints, "need more than k_neighbors=" + std::to_string(k_neighbors) +
                                                 " points, got " + std::to_string(n));
    }

    std::vector<std::vector<double>> pooled;
    std::vector<Matrix> masks;
    pooled.reserve(n);
    masks.reserve(n);
    for (const auto& s : samples) {
        pooled.push_back(pooled_features(s.features));
        masks.push_back(normalize_mask(s.attribution));
    }

    NeighborConsistency out;
    out.feature_similarity.resize(n);
    out.attribution_similarity.resize(n);
    std::vector<double> dsim(k_neighbors), asim(k_neighbors);
    for (std::size_t i = 0; i < n; ++i) {
        const auto nbrs = nearest_rows(space, i, k_neighbors);
        for (std::size_t t = 0; t < nbrs.size(); ++t) {
            dsim[t] = cosine_similarity(pooled[i], pooled[nbrs[t]]);
            asim[t] = attribution_similarity(masks[i], masks[nbrs[t]]);
        }
        out.feature_similarity[i] = pairwise_sum(dsim) / static_cast<double>(k_neighbors);
        out.attribution_similarity[i] = pairwise_sum(asim) / static_cast<double>(k_neighbors);
    }
    out.mean_feature_similarity = pairwise_sum(out.feature_similarity) / static_cast<double>(n);
    out.mean_attribution_similarity = pairwise_sum(out.attribution_similarity) / static_cast<double>(n);
    return out;
}

WeightedVector slice_centroid(std::span<const WeightedVector> members) {
    if (members.empty()) throw Error(ErrorCode::EmptySlice, "centroid of an empty slice");
    const std::size_t d = members.front().size();
    WeightedVector out(d);
    std::vector<double> column(members.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (members[j].size() != d) throw Error(ErrorCode::ShapeMismatch, "member vectors differ in length");
            column[j] = members[j][c];
        }
        out[c] = pairwise_sum(column) / static_cast<double>(members.size());
    }
    return out;
}

double slice_coherence(std::span<const WeightedVector> members) {
    const WeightedVector centroid = slice_centroid(members);
    std::vector<double> sims(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) sims[j] = cosine_similarity(members[j], centroid);
    return pairwise_sum(sims) / static_cast<double>(members.size());
}

Matrix upsample_mask(const Matrix& mask, std::size_t height, std::size_t width) {
    if (mask.empty()) throw Error(ErrorCode::ZeroDimension, "empty mask");
    if (height < mask.rows() || width < mask.cols()) {
        throw Error(ErrorCode::InvalidArgument, "upsample target smaller than source");
    }
    Matrix out(height, width);
    auto source_coord = [](std::size_t t, std::size_t target, std::size_t source) {
        return target == 1 ? 0.0
                           : static_cast<double>(t) * static_cast<double>(source - 1) / static_cast<double>(target - 1);
    };
    for (std::size_t y = 0; y < height; ++y) {
        const double sy = source_coord(y, height, mask.rows());
        const std::size_t y0 = std::min(static_cast<std::size_t>(sy), mask.rows() - 1);
        const std::size_t y1 = std::min(y0 + 1, mask.rows() - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double sx = source_coord(x, width, mask.cols());
            const std::size_t x0 = std::min(static_cast<std::size_t>(sx), mask.cols() - 1);
            const std::size_t x1 = std::min(x0 + 1, mask.cols() - 1);
            const double fx = sx - static_cast<double>(x0);
            const double top = mask(y0, x0) * (1.0 - fx) + mask(y0, x1) * fx;
            const double bottom = mask(y1, x0) * (1.0 - fx) + mask(y1, x1) * fx;
            out(y, x) = top * (1.0 - fy) + bottom * fy;
        }
    }
    return out;
}

}  // namespace attrscan
