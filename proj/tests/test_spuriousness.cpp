#include <cmath>
#include <fstream>
#include <random>

#include "attrscan/error.hpp"
#include "attrscan/spuriousness.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace attrscan;
using doctest::Approx;

namespace {

SparseMatrix sparse(const std::vector<std::vector<double>>& dense) {
    SparseMatrix s;
    s.n = dense.size();
    for (const auto& row : dense) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] != 0.0) {
                s.col.push_back(j);
                s.val.push_back(row[j]);
            }
        }
        s.row_ptr.push_back(s.col.size());
    }
    return s;
}

Matrix labels(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.front().size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

Annotation note(std::size_t slice, Verdict v, std::string ts = "2024-01-01T00:00:00Z") {
    return {std::move(ts), slice, v, "", "tester"};
}

// Slices of `per` consecutive points each.
SliceSet chunked(std::size_t n, std::size_t per) {
    SliceSet set;
    set.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t id = i / per;
        if (id == set.slices.size()) set.slices.push_back(Slice{.id = id});
        set.slices[id].members.push_back(i);
        set.assignment[i] = id;
    }
    return set;
}

}  // namespace

TEST_CASE("verdict parsing") {
    CHECK(parse_verdict("core") == Verdict::Core);
    CHECK(parse_verdict("spurious") == Verdict::Spurious);
    CHECK(static_cast<int>(Verdict::Spurious) == 1);
    CHECK_THROWS_AS(parse_verdict("maybe"), Error);
}

TEST_CASE("annotation log round trip and last write wins") {
    oracle::TempDir dir("log");
    const auto log = dir / "annotations.jsonl";
    CHECK(replay_annotations(log).empty());
    const Annotation a{now_rfc3339(), 5, Verdict::Core, "looks fine, \"really\"", "ana"};
    append_annotation(log, a);
    const auto one = replay_annotations(log);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == a);

    append_annotation(log, note(5, Verdict::Spurious));
    const auto both = replay_annotations(log);
    CHECK(effective_verdicts(both).at(5) == Verdict::Spurious);

    std::ofstream(log, std::ios::app) << "{broken\n";
    try {
        replay_annotations(log);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
}

TEST_CASE("affinity kernel values") {
    SpreadConfig c;
    c.sigma_mode = SigmaMode::Fixed;
    c.sigma = 0.7;
    Matrix two(2, 2, 0.0);
    CHECK(build_affinity(two, c).at(0, 1) == Approx(1.0));
    two(1, 0) = 0.7 * std::sqrt(2.0);
    const auto w = build_affinity(two, c);
    CHECK(w.at(0, 1) == Approx(std::exp(-1.0)).epsilon(1e-9));
    CHECK(w.at(0, 0) == 0.0);
}

TEST_CASE("affinity is symmetric in dense and sparse modes") {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> nd;
    Matrix x(150, 2, 0.0);
    for (auto& v : x.data()) v = nd(gen);
    for (std::size_t limit : {std::size_t{2000}, std::size_t{10}}) {
        SpreadConfig c;
        c.dense_limit = limit;
        c.knn = 7;
        const Matrix w = build_affinity(x, c).to_dense();
        for (std::size_t i = 0; i < 150; ++i) {
            CHECK(w(i, i) == 0.0);
            for (std::size_t j = 0; j < 150; ++j) CHECK(w(i, j) == w(j, i));
        }
        const auto t = transition(build_affinity(x, c));
        for (std::size_t i = 0; i < 150; ++i) CHECK(std::abs(t.row_sum(i) - 1.0) <= 1e-12);
    }
}

TEST_CASE("median heuristic") {
    CHECK(median_heuristic_sigma(labels({{0, 0}, {3, 4}})) == Approx(5.0));
    CHECK(median_heuristic_sigma(labels({{0, 0}, {1, 0}, {3, 0}})) == Approx(2.0));
}

TEST_CASE("transition") {
    const auto t = transition(sparse({{0, 1}, {1, 0}}));
    CHECK(t.at(0, 1) == 1.0);
    CHECK(t.at(1, 0) == 1.0);
    CHECK(t.at(0, 0) == 0.0);
    try {
        transition(sparse({{0.0}}));
        FAIL("expected IsolatedNode");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IsolatedNode);
    }
}

TEST_CASE("spread on a three-node path matches the reference fixed point") {
    const auto T = sparse({{0, 1, 0}, {0.5, 0, 0.5}, {0, 1, 0}});
    const Matrix y0 = labels({{0, 1}, {0, 0}, {1, 0}});
    const auto r = spread(T, y0, 0.2, 1e-12, 1000);
    CHECK(r.converged);
    const double want[3][2] = {{1.0 / 60, 49.0 / 60}, {1.0 / 12, 1.0 / 12}, {49.0 / 60, 1.0 / 60}};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(r.labels(i, j) - want[i][j]) <= 1e-9);
    }
}

TEST_CASE("spread matches the closed form on random graphs") {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 5 + gen() % 60;
        std::vector<std::vector<double>> W(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (u(gen) < 0.3 || j == i + 1) W[i][j] = W[j][i] = u(gen);
            }
        }
        const auto T = transition(sparse(W));
        std::vector<std::vector<double>> Td(n, std::vector<double>(n)), Y(n, std::vector<double>(2, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) Td[i][j] = T.at(i, j);
            const double r = u(gen);
            if (r < 0.2) Y[i][0] = 1.0;
            else if (r < 0.4) Y[i][1] = 1.0;
        }
        const auto want = oracle::spread_closed_form(Td, Y, 0.2);
        const auto got = spread(T, labels(Y), 0.2, 1e-6, 1000);
        CHECK(got.converged);
        CHECK(static_cast<double>(got.iterations) <= std::log(1e-6) / std::log(0.2) + 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                CHECK(std::abs(got.labels(i, j) - want[i][j]) <= 1e-6);
                CHECK(got.labels(i, j) >= 0.0);
                CHECK(got.labels(i, j) <= 1.0);
            }
        }
    }
}

TEST_CASE("spread edge cases") {
    const auto T = sparse({{0, 1}, {1, 0}});
    const Matrix y0 = labels({{1, 0}, {0, 0}});
    const auto r = spread(T, y0, 0.0, 1e-6, 1000);
    CHECK(r.labels == y0);
    CHECK(r.iterations == 1);

    const Matrix zero = labels({{0, 0}, {0, 0}});
    CHECK(spread(T, zero, 0.2, 1e-6, 100).labels == zero);

    try {
        spread(sparse({{0, 2}, {1, 0}}), y0, 0.2, 1e-6, 10);
        FAIL("expected NotStochastic");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotStochastic);
    }
    CHECK_THROWS_AS(spread(T, y0, 1.0, 1e-6, 10), Error);
}

TEST_CASE("propagate requires annotations and known slices") {
    const auto set = chunked(10, 5);
    Matrix coords(10, 2, 0.0);
    for (std::size_t i = 0; i < 10; ++i) coords(i, 0) = static_cast<double>(i);
    try {
        propagate({}, set, coords, SpreadConfig{});
        FAIL("expected NoAnnotations");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoAnnotations);
    }
    const std::vector<Annotation> bad{note(7, Verdict::Core)};
    CHECK_THROWS_AS(propagate(bad, set, coords, SpreadConfig{}), Error);
}

TEST_CASE("every slice spurious gives probability one") {
    const auto set = chunked(20, 5);
    Matrix coords(20, 2, 0.0);
    for (std::size_t i = 0; i < 20; ++i) coords(i, 1) = static_cast<double>(i % 7);
    std::vector<Annotation> all;
    for (std::size_t s = 0; s < 4; ++s) all.push_back(note(s, Verdict::Spurious));
    const auto f = propagate(all, set, coords, SpreadConfig{}, 3);
    CHECK(f.version == 4);
    for (const auto& [id, p] : f.per_slice) CHECK(p == 1.0);
}

TEST_CASE("one spurious annotation on two distant clusters") {
    // 45 points near the origin in 3 slices, 15 points far away in 1 slice.
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix coords(60, 2, 0.0);
    for (std::size_t i = 0; i < 60; ++i) {
        coords(i, 0) = nd(gen) + (i >= 45 ? 1000.0 : 0.0);
        coords(i, 1) = nd(gen);
    }
    const auto set = chunked(60, 15);
    const std::vector<Annotation> one{note(0, Verdict::Spurious)};
    const auto f = propagate(one, set, coords, SpreadConfig{});
    for (std::size_t s = 0; s < 3; ++s) CHECK(f.per_slice.at(s) >= 0.9);
    CHECK(f.per_slice.at(3) <= 0.5 + 1e-12);
    CHECK(f.version == 1);
    CHECK(f.annotations.size() == 1);
}

TEST_CASE("annotated slices keep their verdict and scores are monotone along the layout") {
    Matrix coords(100, 2, 0.0);
    for (std::size_t i = 0; i < 100; ++i) coords(i, 0) = static_cast<double>(i) * 0.1;
    const auto set = chunked(100, 10);
    const std::vector<Annotation> two{note(0, Verdict::Core), note(9, Verdict::Spurious)};
    const auto f = propagate(two, set, coords, SpreadConfig{});
    CHECK(f.per_slice.at(0) <= 0.05);
    CHECK(f.per_slice.at(9) >= 0.95);
    for (std::size_t s = 1; s < 10; ++s) CHECK(f.per_slice.at(s) >= f.per_slice.at(s - 1));
    for (double p : f.per_point) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    const auto g = propagate(two, set, coords, SpreadConfig{});
    CHECK(g.per_point == f.per_point);
}

TEST_CASE("later verdict overrides an earlier one") {
    Matrix coords(20, 2, 0.0);
    for (std::size_t i = 0; i < 20; ++i) coords(i, 0) = static_cast<double>(i) + (i >= 10 ? 100.0 : 0.0);
    const auto set = chunked(20, 10);
    const std::vector<Annotation> flip{note(0, Verdict::Core, "2024-01-01T00:00:00Z"),
                                       note(1, Verdict::Core, "2024-01-01T00:00:01Z"),
                                       note(0, Verdict::Spurious, "2024-01-01T00:00:02Z")};
    SpreadConfig c;
    c.sigma_mode = SigmaMode::Fixed;
    c.sigma = 2.0;
    const auto f = propagate(flip, set, coords, c);
    CHECK(f.per_slice.at(0) > 0.95);
    CHECK(f.per_slice.at(1) < 0.05);
}
