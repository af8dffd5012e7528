#include "attrscan/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "attrscan/attribution.hpp"
#include "attrscan/error.hpp"
#include "attrscan/rng.hpp"

namespace attrscan {

namespace {

constexpr double kGradClip = 4.0;
constexpr std::size_t kNegativeSampleRate = 5;
constexpr double kInitExtent = 10.0;

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

double clip(double v) { return std::clamp(v, -kGradClip, kGradClip); }

// Order rows lexicographically so every later step sees the same input no matter
// how the caller ordered it.
std::vector<std::size_t> canonical_order(const Matrix& x) {
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) {
        const auto ra = x.row(a), rb = x.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    return order;
}

struct Edge {
    std::size_t head;
    std::size_t tail;
    double weight;
};

// Fuzzy simplicial set: per-point bandwidth calibrated so the neighbor weights
// sum to log2(k), then fuzzy union w + w' - w w'.
std::vector<Edge> fuzzy_graph(const Matrix& x, std::size_t k) {
    const std::size_t n = x.rows();
    std::vector<std::vector<std::size_t>> knn(n);
    std::vector<std::vector<double>> knn_dist(n);
    double mean_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        knn[i] = nearest_rows(x, i, k);
        for (auto j : knn[i]) {
            knn_dist[i].push_back(distance(x.row(i), x.row(j)));
            mean_dist += knn_dist[i].back();
        }
    }
    mean_dist /= static_cast<double>(n * k);

    const double target = std::log2(static_cast<double>(k));
    std::vector<std::vector<std::pair<std::size_t, double>>> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = knn_dist[i];
        double rho = 0.0;
        for (double v : d) {
            if (v > 0.0) {
                rho = v;
                break;
            }
        }
        double lo = 0.0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
        for (int it = 0; it < 64; ++it) {
            double psum = 0.0;
            for (double v : d) psum += std::exp(-std::max(0.0, v - rho) / sigma);
            if (std::abs(psum - target) < 1e-5) break;
            if (psum > target) {
                hi = sigma;
                sigma = 0.5 * (lo + hi);
            } else {
                lo = sigma;
                sigma = std::isinf(hi) ? sigma * 2.0 : 0.5 * (lo + hi);
            }
        }
        const double mean_i = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
        sigma = std::max(sigma, 1e-3 * (rho > 0.0 ? mean_i : mean_dist));
        for (std::size_t t = 0; t < d.size(); ++t) {
            w[i].emplace_back(knn[i][t], std::exp(-std::max(0.0, d[t] - rho) / sigma));
        }
        std::sort(w[i].begin(), w[i].end());
    }

    auto weight = [&w](std::size_t i, std::size_t j) {
        auto it = std::lower_bound(w[i].begin(), w[i].end(), std::pair<std::size_t, double>{j, -1.0});
        return (it != w[i].end() && it->first == j) ? it->second : 0.0;
    };
    std::vector<std::vector<std::size_t>> reverse(n);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [j, v] : w[i]) reverse[j].push_back(i);

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> partners;
        for (const auto& [j, v] : w[i]) partners.push_back(j);
        partners.insert(partners.end(), reverse[i].begin(), reverse[i].end());
        std::sort(partners.begin(), partners.end());
        partners.erase(std::unique(partners.begin(), partners.end()), partners.end());
        for (auto j : partners) {
            const double a = weight(i, j), b = weight(j, i);
            const double u = a + b - a * b;
            if (u > 0.0) edges.push_back({i, j, u});
        }
    }
    return edges;
}

// Deterministic 2-D PCA start, scaled to [-10, 10].
Matrix pca_init(const Matrix& x, std::uint64_t seed) {
    const std::size_t n = x.rows(), d = x.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) mean[c] += x(i, c);
    for (double& m : mean) m /= static_cast<double>(n);
    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) centered(i, c) = x(i, c) - mean[c];

    // Covariance-vector product without forming the d x d covariance.
    auto cov_times = [&centered, n, d](const std::vector<double>& v) {
        std::vector<double> out(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double proj = 0.0;
            for (std::size_t c = 0; c < d; ++c) proj += centered(i, c) * v[c];
            for (std::size_t c = 0; c < d; ++c) out[c] += centered(i, c) * proj;
        }
        return out;
    };

    std::vector<std::vector<double>> axes;
    for (std::size_t comp = 0; comp < 2; ++comp) {
        std::vector<double> v(d);
        for (std::size_t c = 0; c < d; ++c) v[c] = 1.0 + static_cast<double>((c * 7 + comp * 3) % 11) / 11.0;
        for (int it = 0; it < 200; ++it) {
            for (const auto& prev : axes) {
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) dot += v[c] * prev[c];
                for (std::size_t c = 0; c < d; ++c) v[c] -= dot * prev[c];
            }
            std::vector<double> next = cov_times(v);
            double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
            if (norm < 1e-300) break;
            for (double& e : next) e /= norm;
            v = std::move(next);
        }
        for (const auto& prev : axes) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += v[c] * prev[c];
            for (std::size_t c = 0; c < d; ++c) v[c] -= dot * prev[c];
        }
        const auto pivot = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
        if (pivot != v.end() && *pivot < 0.0)
            for (double& e : v) e = -e;
        axes.push_back(std::move(v));
    }

    Matrix y(n, 2, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t comp = 0; comp < 2; ++comp)
            for (std::size_t c = 0; c < d; ++c) y(i, comp) += centered(i, c) * axes[comp][c];

    for (std::size_t comp = 0; comp < 2; ++comp) {
        double extent = 0.0;
        for (std::size_t i = 0; i < n; ++i) extent = std::max(extent, std::abs(y(i, comp)));
        const double scale = extent > 1e-12 ? kInitExtent / extent : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            y(i, comp) = y(i, comp) * scale + 1e-4 * rng::normal(rng::key(seed, 0x1417, i, comp));
        }
    }
    return y;
}

}  // namespace

void EmbeddingConfig::validate() const {
    if (n_neighbors < 2) throw Error(ErrorCode::InvalidArgument, "n_neighbors must be >= 2");
    if (!(min_dist > 0.0 && min_dist < 1.0)) throw Error(ErrorCode::InvalidArgument, "min_dist must be in (0, 1)");
    if (n_components != 2) throw Error(ErrorCode::InvalidArgument, "n_components must be 2");
    if (epochs == 0) throw Error(ErrorCode::InvalidArgument, "epochs must be positive");
}

EmbeddingConfig EmbeddingConfig::preset(std::string_view name) {
    EmbeddingConfig c;
    if (name == "celeba") {
        c.n_neighbors = 5;
        c.min_dist = 0.01;
    } else if (name == "waterbirds") {
        c.n_neighbors = 20;
        c.min_dist = 0.05;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown embedding preset '" + std::string(name) + "'");
    }
    return c;
}

std::pair<double, double> fit_curve_params(double min_dist, double spread) {
    constexpr std::size_t kSamples = 300;
    std::vector<double> xs(kSamples), ys(kSamples);
    for (std::size_t t = 0; t < kSamples; ++t) {
        xs[t] = 3.0 * spread * static_cast<double>(t) / static_cast<double>(kSamples - 1);
        ys[t] = xs[t] < min_dist ? 1.0 : std::exp(-(xs[t] - min_dist) / spread);
    }
    auto loss = [&](double a, double b) {
        double s = 0.0;
        for (std::size_t t = 0; t < kSamples; ++t) {
            const double r = 1.0 / (1.0 + a * std::pow(xs[t], 2.0 * b)) - ys[t];
            s += r * r;
        }
        return s;
    };
    // Coarse grid, then shrinking pattern search.
    double best_a = 1.0, best_b = 1.0, best = loss(1.0, 1.0);
    for (double a = 0.1; a <= 5.0; a += 0.05) {
        for (double b = 0.3; b <= 2.0; b += 0.02) {
            const double l = loss(a, b);
            if (l < best) {
                best = l;
                best_a = a;
                best_b = b;
            }
        }
    }
    double step_a = 0.05, step_b = 0.02;
    while (step_a > 1e-9) {
        bool improved = false;
        for (const auto& [da, db] : {std::pair{step_a, 0.0}, {-step_a, 0.0}, {0.0, step_b}, {0.0, -step_b}}) {
            const double l = loss(best_a + da, best_b + db);
            if (l < best) {
                best = l;
                best_a += da;
                best_b += db;
                improved = true;
            }
        }
        if (!improved) {
            step_a *= 0.5;
            step_b *= 0.5;
        }
    }
    return {best_a, best_b};
}

Embedding2D embed(const Matrix& vectors, const EmbeddingConfig& config) {
    config.validate();
    const std::size_t n = vectors.rows();
    if (n <= config.n_neighbors) {
        throw Error(ErrorCode::TooFewPoints, "embedding needs more than n_neighbors=" +
                                                 std::to_string(config.n_neighbors) + " points, got " +
                                                 std::to_string(n));
    }

    const auto order = canonical_order(vectors);
    Matrix x(n, vectors.cols());
    for (std::size_t i = 0; i < n; ++i) std::copy_n(vectors.row(order[i]).begin(), vectors.cols(), x.row(i).begin());

    auto edges = fuzzy_graph(x, config.n_neighbors);
    double max_w = 0.0;
    for (const auto& e : edges) max_w = std::max(max_w, e.weight);
    const double floor_w = max_w / static_cast<double>(config.epochs);
    std::erase_if(edges, [floor_w](const Edge& e) { return e.weight < floor_w; });

    const auto [a, b] = fit_curve_params(config.min_dist);
    Matrix y = pca_init(x, config.seed);

    const std::size_t m = edges.size();
    std::vector<double> per_sample(m), next_sample(m), per_negative(m), next_negative(m);
    for (std::size_t e = 0; e < m; ++e) {
        per_sample[e] = max_w / edges[e].weight;
        next_sample[e] = per_sample[e];
        per_negative[e] = per_sample[e] / static_cast<double>(kNegativeSampleRate);
        next_negative[e] = per_negative[e];
    }

    Matrix delta(n, 2);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = 1.0 - static_cast<double>(epoch) / static_cast<double>(config.epochs);
        const double now = static_cast<double>(epoch + 1);
        std::fill(delta.data().begin(), delta.data().end(), 0.0);

        for (std::size_t e = 0; e < m; ++e) {
            if (next_sample[e] > now) continue;
            const std::size_t i = edges[e].head, j = edges[e].tail;
            const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
            const double d2 = dx * dx + dy * dy;
            if (d2 > 0.0) {
                const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
                const double gx = clip(coeff * dx), gy = clip(coeff * dy);
                delta(i, 0) += gx * lr;
                delta(i, 1) += gy * lr;
                delta(j, 0) -= gx * lr;
                delta(j, 1) -= gy * lr;
            }
            next_sample[e] += per_sample[e];

            const auto n_neg = static_cast<std::size_t>((now - next_negative[e]) / per_negative[e]);
            for (std::size_t p = 0; p < n_neg; ++p) {
                const std::size_t k = rng::below(rng::key(config.seed, i, epoch, e, p), n);
                if (k == i) continue;
                const double nx = y(i, 0) - y(k, 0), ny = y(i, 1) - y(k, 1);
                const double n2 = nx * nx + ny * ny;
                double gx = kGradClip, gy = kGradClip;
                if (n2 > 0.0) {
                    const double coeff = 2.0 * b / ((0.001 + n2) * (a * std::pow(n2, b) + 1.0));
                    gx = clip(coeff * nx);
                    gy = clip(coeff * ny);
                }
                delta(i, 0) += gx * lr;
                delta(i, 1) += gy * lr;
            }
            next_negative[e] += static_cast<double>(n_neg) * per_negative[e];
        }
        for (std::size_t k = 0; k < delta.size(); ++k) y.data()[k] += delta.data()[k];
    }

    Embedding2D out;
    out.coords = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.coords(order[i], 0) = y(i, 0);
        out.coords(order[i], 1) = y(i, 1);
    }
    out.config = config;
    out.source = EmbeddingSource::Computed;
    return out;
}

Embedding2D precomputed_embedding(const Tensor& coords, const EmbeddingConfig& config) {
    if (coords.dims.size() != 2 || coords.dims[1] != 2) {
        throw Error(ErrorCode::ShapeMismatch, "precomputed embedding must be N x 2");
    }
    Embedding2D out;
    out.coords = to_matrix(coords);
    for (double v : out.coords.data()) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite precomputed coordinate");
    }
    out.config = config;
    out.source = EmbeddingSource::Precomputed;
    return out;
}

double trustworthiness(const Matrix& high_dim, const Matrix& coords, std::size_t k) {
    const std::size_t n = high_dim.rows();
    if (coords.rows() != n) throw Error(ErrorCode::ShapeMismatch, "row counts differ");
    if (k == 0 || 2 * k >= n) throw Error(ErrorCode::InvalidArgument, "trustworthiness requires 0 < k < N/2");

    double penalty = 0.0;
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto high_order = nearest_rows(high_dim, i, n - 1);
        for (std::size_t r = 0; r < high_order.size(); ++r) rank[high_order[r]] = r + 1;
        for (auto j : nearest_rows(coords, i, k)) {
            if (rank[j] > k) penalty += static_cast<double>(rank[j] - k);
        }
    }
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    return 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * penalty;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols()) throw Error(ErrorCode::ShapeMismatch, "ragged rows");
        std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
}

}  // namespace attrscan
