#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "attrscan/attribution.hpp"
#include "attrscan/embedding.hpp"
#include "attrscan/error.hpp"
#include "attrscan/fixtures.hpp"
#include "attrscan/geometry.hpp"
#include "attrscan/slicing.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace attrscan;
using doctest::Approx;

namespace {

std::vector<Point2> points_of(const Matrix& coords, std::span<const std::size_t> members) {
    std::vector<Point2> pts;
    for (auto i : members) pts.push_back({coords(i, 0), coords(i, 1)});
    return pts;
}

Matrix uniform_points(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    Matrix m(n, 2, 0.0);
    for (auto& v : m.data()) v = u(gen);
    return m;
}

}  // namespace

TEST_CASE("convex hull basics") {
    const std::vector<Point2> tri{{0, 0}, {1, 0}, {0, 1}};
    auto h = convex_hull(tri);
    CHECK(h.size() == 3);
    CHECK(polygon_area(h) == Approx(0.5));

    const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
    h = convex_hull(square);
    CHECK(h.size() == 4);
    CHECK(std::find(h.begin(), h.end(), Point2{0.5, 0.5}) == h.end());
    CHECK(polygon_area(h) == Approx(1.0));

    const std::vector<Point2> collinear{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    CHECK(polygon_area(convex_hull(collinear)) == 0.0);
}

TEST_CASE("convex hull contains every point and is counterclockwise") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix m = uniform_points(200, seed);
        std::vector<std::size_t> all(200);
        for (std::size_t i = 0; i < 200; ++i) all[i] = i;
        const auto pts = points_of(m, all);
        const auto h = convex_hull(pts);
        CHECK(polygon_area(h) > 0.0);
        for (const auto& p : pts) {
            for (std::size_t e = 0; e < h.size(); ++e) CHECK(cross(h[e], h[(e + 1) % h.size()], p) >= -1e-9);
        }
    }
}

TEST_CASE("slice_hull degenerate cases") {
    const std::vector<Point2> one{{2, 3}};
    auto h = slice_hull(one, {2, 3});
    CHECK(h.degenerate);
    CHECK(h.vertices.size() == 3);
    for (const auto& v : h.vertices) CHECK(std::hypot(v.x - 2, v.y - 3) == Approx(kDegenerateHullRadius));
    CHECK(polygon_area(h.vertices) > 0.0);

    const std::vector<Point2> line{{0, 0}, {1, 1}, {2, 2}};
    CHECK(slice_hull(line, {1, 1}).degenerate);

    const std::vector<Point2> tri{{0, 0}, {1, 0}, {0, 1}};
    h = slice_hull(tri, {1.0 / 3, 1.0 / 3});
    CHECK_FALSE(h.degenerate);
    CHECK(h.vertices.size() == 3);
}

TEST_CASE("kmeans recovers separated blobs") {
    const auto blobs = fixtures::gaussian_blobs(50, 2, 3, 0.3, 5);
    const Matrix x = rows_to_matrix(blobs.points);
    const auto r = kmeans_2d(x, 3, 1);
    std::map<std::size_t, std::set<int>> seen;
    std::map<int, std::set<std::size_t>> back;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        seen[r.assignment[i]].insert(blobs.group[i]);
        back[blobs.group[i]].insert(r.assignment[i]);
    }
    CHECK(seen.size() == 3);
    for (const auto& [c, groups] : seen) CHECK(groups.size() == 1);
    for (const auto& [g, clusters] : back) CHECK(clusters.size() == 1);
}

TEST_CASE("kmeans edge cases") {
    const Matrix x = uniform_points(12, 3);
    const auto r = kmeans_2d(x, 12, 0);
    CHECK(std::set<std::size_t>(r.assignment.begin(), r.assignment.end()).size() == 12);

    Matrix same(10, 2, 1.5);
    const auto s = kmeans_2d(same, 2, 0);
    CHECK(std::set<std::size_t>(s.assignment.begin(), s.assignment.end()).size() == 1);

    CHECK_THROWS_AS(kmeans_2d(x, 13, 0), Error);
    CHECK_THROWS_AS(kmeans_2d(x, 0, 0), Error);
}

TEST_CASE("kmeans output is a Voronoi partition and deterministic") {
    const Matrix x = uniform_points(300, 9);
    const auto r = kmeans_2d(x, 17, 4);
    CHECK(kmeans_2d(x, 17, 4).assignment == r.assignment);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto d = [&](std::size_t c) {
            const double dx = x(i, 0) - r.centroids(c, 0), dy = x(i, 1) - r.centroids(c, 1);
            return dx * dx + dy * dy;
        };
        const double own = d(r.assignment[i]);
        for (std::size_t c = 0; c < 17; ++c) CHECK(own <= d(c));
    }
}

TEST_CASE("hulls of a kmeans partition do not overlap") {
    std::mt19937_64 gen(77);
    for (int run = 0; run < 10; ++run) {
        const Matrix x = uniform_points(500, gen());
        const std::size_t k = 5 + gen() % 36;
        const auto r = kmeans_2d(x, k, gen());
        std::vector<std::vector<std::size_t>> members(k);
        for (std::size_t i = 0; i < x.rows(); ++i) members[r.assignment[i]].push_back(i);
        std::vector<Polygon> polys;
        for (const auto& m : members) {
            if (m.empty()) continue;
            const auto h = slice_hull(points_of(x, m), {0, 0});
            if (!h.degenerate) polys.push_back(h.vertices);
        }
        CHECK(oracle::max_pairwise_overlap(polys) <= 1e-9);
    }
}

TEST_CASE("clipping oracle sanity") {
    const Polygon a{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
    const Polygon b{{1, 1}, {3, 1}, {3, 3}, {1, 3}};
    const Polygon c{{2, 0}, {4, 0}, {4, 2}, {2, 2}};
    CHECK(oracle::convex_intersection_area(a, b) == Approx(1.0));
    CHECK(oracle::convex_intersection_area(a, c) == Approx(0.0));
    CHECK(oracle::convex_intersection_area(a, a) == Approx(4.0));
}

TEST_CASE("find_slices threshold 0 stops at initial_k") {
    const auto planted = fixtures::pocket_bundle(6, 12, 3);
    const auto vectors = weighted_vectors(planted.bundle.attribution_samples());
    const Matrix coords = to_matrix(*planted.bundle.embedding);
    SliceConfig c;
    c.coherence_threshold = 0.0;
    const auto set = find_slices(coords, vectors, c);
    CHECK(set.converged);
    CHECK(set.k_trace == std::vector<std::size_t>{20});
    CHECK(set.slices.size() <= 20);
}

TEST_CASE("find_slices over-clusters mixed pockets") {
    const auto planted = fixtures::pocket_bundle(6, 12, 3);
    const auto vectors = weighted_vectors(planted.bundle.attribution_samples());
    const Matrix coords = to_matrix(*planted.bundle.embedding);
    const auto set = find_slices(coords, vectors, SliceConfig{});
    CHECK(set.converged);
    CHECK(set.k_trace.size() >= 2);
    CHECK(set.k_trace.back() > 20);
    for (const auto& s : set.slices) CHECK(s.coherence >= 0.8);
    CHECK(set.incoherent_ids.empty());
    std::size_t total = 0;
    for (const auto& s : set.slices) {
        total += s.members.size();
        for (auto m : s.members) CHECK(set.assignment[m] == s.id);
    }
    CHECK(total == coords.rows());
    CHECK(find_slices(coords, vectors, SliceConfig{}).assignment == set.assignment);
}

TEST_CASE("find_slices with override_k and k_max") {
    const auto planted = fixtures::pocket_bundle(6, 12, 3);
    const auto vectors = weighted_vectors(planted.bundle.attribution_samples());
    const Matrix coords = to_matrix(*planted.bundle.embedding);
    SliceConfig c;
    c.override_k = 50;
    auto set = find_slices(coords, vectors, c);
    CHECK(set.slices.size() == 50);
    CHECK(set.k_trace == std::vector<std::size_t>{50});

    c = SliceConfig{};
    c.k_max = 20;
    set = find_slices(coords, vectors, c);
    CHECK_FALSE(set.converged);
    CHECK_FALSE(set.incoherent_ids.empty());
    for (auto id : set.incoherent_ids) CHECK(set.slices[id].coherence < 0.8);
}

TEST_CASE("confusion subdivision") {
    const std::vector<std::size_t> members{0, 1, 2, 3, 4};
    const std::vector<std::uint32_t> labels{1, 1, 0, 0, 1}, preds{1, 0, 1, 0, 1};
    auto cells = subdivide_confusion(members, labels, preds, 1, 2);
    CHECK(cells[ConfusionCell::TruePositive] == std::vector<std::size_t>{0, 4});
    CHECK(cells[ConfusionCell::FalseNegative] == std::vector<std::size_t>{1});
    CHECK(cells[ConfusionCell::FalsePositive] == std::vector<std::size_t>{2});
    CHECK(cells[ConfusionCell::TrueNegative] == std::vector<std::size_t>{3});

    const std::vector<std::uint32_t> pos{1, 1}, pos_pred{1, 1};
    const std::vector<std::size_t> two{0, 1};
    cells = subdivide_confusion(two, pos, pos_pred, 1, 2);
    CHECK(cells[ConfusionCell::TruePositive].size() == 2);
    CHECK(cells[ConfusionCell::FalsePositive].empty());
    CHECK(cells[ConfusionCell::TrueNegative].empty());
    CHECK(cells[ConfusionCell::FalseNegative].empty());

    const std::vector<std::uint32_t> l3{0, 1, 2, 2}, p3{0, 2, 2, 1};
    const std::vector<std::size_t> four{0, 1, 2, 3};
    cells = subdivide_confusion(four, l3, p3, 0, 3);
    CHECK(cells.size() == 2);
    CHECK(cells[ConfusionCell::Correct] == std::vector<std::size_t>{0, 2});
    CHECK(cells[ConfusionCell::Incorrect] == std::vector<std::size_t>{1, 3});
}

TEST_CASE("slice metrics") {
    const std::vector<std::size_t> members{0, 1, 2};
    const std::vector<std::uint32_t> labels{0, 1, 1}, preds{0, 1, 0};
    const std::vector<double> conf{0.5, 0.7, 0.9};
    const auto m = slice_metrics(members, labels, preds, conf);
    CHECK(m.accuracy == Approx(2.0 / 3.0));
    CHECK(m.mean_confidence == Approx(0.7));
    const std::vector<std::uint32_t> all{0, 1, 1};
    CHECK(slice_metrics(members, all, all, conf).accuracy == 1.0);
    CHECK_THROWS_AS(slice_metrics(std::vector<std::size_t>{}, labels, preds, conf), Error);
}
