#include "oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unistd.h>

namespace oracle {

std::vector<double> weighted_vector(const std::vector<double>& features, std::size_t d, std::size_t m, std::size_t n,
                                    const std::vector<double>& mask) {
    std::vector<double> w(m * n);
    double total = 0.0;
    for (std::size_t i = 0; i < m * n; ++i) {
        w[i] = mask[i] > 0.0 ? mask[i] : 0.0;
        total += w[i];
    }
    for (std::size_t i = 0; i < m * n; ++i) w[i] = total > 0.0 ? w[i] / total : 1.0 / static_cast<double>(m * n);

    std::vector<double> out(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) out[c] += features[(c * m + i) * n + j] * w[i * n + j];
        }
    }
    return out;
}

namespace {

using attrscan::Point2;
using attrscan::Polygon;

double side(const Point2& a, const Point2& b, const Point2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

Point2 intersect(const Point2& p, const Point2& q, const Point2& a, const Point2& b) {
    const double sp = side(a, b, p), sq = side(a, b, q);
    const double t = sp / (sp - sq);
    return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

double shoelace(const Polygon& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& u = p[i];
        const auto& v = p[(i + 1) % p.size()];
        s += u.x * v.y - v.x * u.y;
    }
    return 0.5 * s;
}

}  // namespace

double convex_intersection_area(const Polygon& subject, const Polygon& clip) {
    Polygon out = subject;
    for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
        const Point2 a = clip[e], b = clip[(e + 1) % clip.size()];
        Polygon in = std::move(out);
        out.clear();
        for (std::size_t i = 0; i < in.size(); ++i) {
            const Point2 p = in[i], q = in[(i + 1) % in.size()];
            const bool p_in = side(a, b, p) >= 0.0, q_in = side(a, b, q) >= 0.0;
            if (p_in) out.push_back(p);
            if (p_in != q_in) out.push_back(intersect(p, q, a, b));
        }
    }
    return out.size() < 3 ? 0.0 : std::abs(shoelace(out));
}

double max_pairwise_overlap(const std::vector<Polygon>& polygons) {
    double worst = 0.0;
    for (std::size_t i = 0; i < polygons.size(); ++i) {
        for (std::size_t j = i + 1; j < polygons.size(); ++j) {
            worst = std::max(worst, convex_intersection_area(polygons[i], polygons[j]));
        }
    }
    return worst;
}

std::vector<std::vector<double>> spread_closed_form(const std::vector<std::vector<double>>& T,
                                                    const std::vector<std::vector<double>>& Y0, double alpha) {
    const auto n = static_cast<Eigen::Index>(T.size());
    const auto c = static_cast<Eigen::Index>(Y0.front().size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd Y(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) A(i, j) -= alpha * T[i][j];
        for (Eigen::Index j = 0; j < c; ++j) Y(i, j) = Y0[i][j];
    }
    const Eigen::MatrixXd X = (1.0 - alpha) * A.partialPivLu().solve(Y);
    std::vector<std::vector<double>> out(n, std::vector<double>(c));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) out[i][j] = X(i, j);
    }
    return out;
}

double grid_emd_l1(const attrscan::Matrix& a, const attrscan::Matrix& b) {
    const std::size_t m = a.rows(), n = a.cols(), N = m * n;
    std::vector<double> excess(N);
    for (std::size_t i = 0; i < N; ++i) excess[i] = a.data()[i] - b.data()[i];
    auto neighbors = [&](std::size_t u) {
        std::vector<std::size_t> out;
        const std::size_t r = u / n, c = u % n;
        if (r > 0) out.push_back(u - n);
        if (r + 1 < m) out.push_back(u + n);
        if (c > 0) out.push_back(u - 1);
        if (c + 1 < n) out.push_back(u + 1);
        return out;
    };
    std::vector<std::vector<double>> f(N, std::vector<double>(N, 0.0));
    double cost = 0.0;
    const double eps = 1e-12;
    for (int guard = 0; guard < 100000; ++guard) {
        // Bellman-Ford from all sources with positive excess.
        std::vector<double> dist(N, std::numeric_limits<double>::infinity());
        std::vector<std::ptrdiff_t> prev(N, -1);
        for (std::size_t u = 0; u < N; ++u) {
            if (excess[u] > eps) dist[u] = 0.0;
        }
        for (std::size_t it = 0; it < N; ++it) {
            bool changed = false;
            for (std::size_t u = 0; u < N; ++u) {
                if (!std::isfinite(dist[u])) continue;
                for (auto v : neighbors(u)) {
                    // forward edge cost 1 (unbounded), or cancel reverse flow v->u at cost -1
                    const double w = f[v][u] > eps ? -1.0 : 1.0;
                    if (dist[u] + w < dist[v] - 1e-12) {
                        dist[v] = dist[u] + w;
                        prev[v] = static_cast<std::ptrdiff_t>(u);
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        std::ptrdiff_t sink = -1;
        for (std::size_t u = 0; u < N; ++u) {
            if (excess[u] < -eps && std::isfinite(dist[u]) && (sink < 0 || dist[u] < dist[sink])) {
                sink = static_cast<std::ptrdiff_t>(u);
            }
        }
        if (sink < 0) break;
        double push = -excess[sink];
        std::vector<std::size_t> path{static_cast<std::size_t>(sink)};
        while (prev[path.back()] >= 0) path.push_back(static_cast<std::size_t>(prev[path.back()]));
        const std::size_t source = path.back();
        push = std::min(push, excess[source]);
        for (std::size_t k = path.size() - 1; k > 0; --k) {
            const std::size_t u = path[k], v = path[k - 1];
            if (f[v][u] > eps) push = std::min(push, f[v][u]);
        }
        for (std::size_t k = path.size() - 1; k > 0; --k) {
            const std::size_t u = path[k], v = path[k - 1];
            if (f[v][u] > eps) {
                f[v][u] -= push;
                cost -= push;
            } else {
                f[u][v] += push;
                cost += push;
            }
        }
        excess[source] -= push;
        excess[sink] += push;
    }
    return cost;
}

SyntheticRun synthetic_predictions(const std::filesystem::path& dir, std::size_t n, double clean, double core,
                                   double spurious) {
    SyntheticRun run{dir / "labels.tsv", dir / "clean.tsv", dir / "core.tsv", dir / "spurious.tsv"};
    auto id = [](std::size_t i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "x%08zu", i);
        return std::string(buf);
    };
    {
        std::ofstream out(run.labels);
        for (std::size_t i = 0; i < n; ++i) out << id(i) << "\t0\n";
    }
    for (const auto& [path, acc] : {std::pair{run.clean, clean}, {run.core, core}, {run.spurious, spurious}}) {
        const auto correct = static_cast<std::size_t>(std::llround(acc * static_cast<double>(n)));
        std::ofstream out(path);
        for (std::size_t i = 0; i < n; ++i) out << id(i) << (i < correct ? "\t0\t0.9\n" : "\t1\t0.6\n");
    }
    return run;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("attrscan-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
}

}  // namespace oracle
