#include "attrscan/spuriousness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <string>

#include "attrscan/attribution.hpp"
#include "attrscan/error.hpp"
#include "json.hpp"

namespace attrscan {

using nlohmann::json;

namespace {

constexpr std::size_t kSigmaSubsample = 1024;

double sq_dist(const Matrix& x, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double d = x(i, c) - x(j, c);
        s += d * d;
    }
    return s;
}

json annotation_to_json(const Annotation& a) {
    return json{{"timestamp", a.timestamp},
                {"slice_id", a.slice_id},
                {"verdict", std::string(to_string(a.verdict))},
                {"note", a.note},
                {"author", a.author}};
}

}  // namespace

std::string_view to_string(Verdict v) noexcept { return v == Verdict::Spurious ? "spurious" : "core"; }

Verdict parse_verdict(std::string_view text) {
    if (text == "core") return Verdict::Core;
    if (text == "spurious") return Verdict::Spurious;
    throw Error(ErrorCode::InvalidArgument, "verdict must be 'core' or 'spurious', got '" + std::string(text) + "'");
}

std::string now_rfc3339() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void append_annotation(const std::filesystem::path& log_path, const Annotation& annotation) {
    std::ofstream out(log_path, std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + log_path.string());
    out << annotation_to_json(annotation).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed on " + log_path.string());
}

std::vector<Annotation> replay_annotations(const std::filesystem::path& log_path) {
    std::vector<Annotation> out;
    if (!std::filesystem::exists(log_path)) return out;
    std::ifstream in(log_path);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + log_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            Annotation a;
            a.timestamp = j.at("timestamp").get<std::string>();
            a.slice_id = j.at("slice_id").get<std::size_t>();
            a.verdict = parse_verdict(j.at("verdict").get<std::string>());
            a.note = j.at("note").get<std::string>();
            a.author = j.at("author").get<std::string>();
            out.push_back(std::move(a));
        } catch (const std::exception& e) {
            throw Error(ErrorCode::ParseError, log_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::map<std::size_t, Verdict> effective_verdicts(std::span<const Annotation> annotations) {
    std::map<std::size_t, Verdict> out;
    for (const auto& a : annotations) out[a.slice_id] = a.verdict;
    return out;
}

void SpreadConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0, 1)");
    if (knn < 1) throw Error(ErrorCode::InvalidArgument, "knn must be >= 1");
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
    if (sigma_mode == SigmaMode::Fixed && !(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
    const auto begin = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
    const auto end = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
    const auto it = std::lower_bound(begin, end, j);
    return (it != end && *it == j) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
}

double SparseMatrix::row_sum(std::size_t i) const {
    return pairwise_sum(std::span<const double>(val).subspan(row_ptr[i], row_ptr[i + 1] - row_ptr[i]));
}

Matrix SparseMatrix::to_dense() const {
    Matrix out(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) out(i, col[p]) = val[p];
    return out;
}

double median_heuristic_sigma(const Matrix& coords) {
    const std::size_t n = coords.rows();
    std::vector<std::size_t> idx;
    if (n <= kSigmaSubsample) {
        for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
        for (std::size_t t = 0; t < kSigmaSubsample; ++t) idx.push_back(t * n / kSigmaSubsample);
    }
    std::vector<double> d;
    d.reserve(idx.size() * (idx.size() - 1) / 2);
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) d.push_back(std::sqrt(sq_dist(coords, idx[a], idx[b])));
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double median = *mid;
    if (d.size() % 2 == 0) {
        const double below = *std::max_element(d.begin(), mid);
        median = 0.5 * (median + below);
    }
    return median > 0.0 ? median : 1.0;
}

SparseMatrix build_affinity(const Matrix& coords, const SpreadConfig& config) {
    config.validate();
    const std::size_t n = coords.rows();
    const double sigma = config.sigma_mode == SigmaMode::Fixed ? config.sigma : median_heuristic_sigma(coords);
    const double denom = 2.0 * sigma * sigma;

    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
    if (n <= config.dense_limit) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) rows[i].emplace_back(j, std::exp(-sq_dist(coords, i, j) / denom));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (auto j : nearest_rows(coords, i, config.knn)) {
                const double w = std::exp(-sq_dist(coords, i, j) / denom);
                rows[i].emplace_back(j, w);
                rows[j].emplace_back(i, w);  // symmetric kernel, so the max is w itself
            }
        }
        for (auto& r : rows) {
            std::sort(r.begin(), r.end());
            r.erase(std::unique(r.begin(), r.end(),
                                [](const auto& a, const auto& b) { return a.first == b.first; }),
                    r.end());
        }
    }

    SparseMatrix w;
    w.n = n;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, v] : rows[i]) {
            if (v > 0.0) {
                w.col.push_back(j);
                w.val.push_back(v);
            }
        }
        w.row_ptr.push_back(w.col.size());
    }
    return w;
}

SparseMatrix transition(const SparseMatrix& affinity) {
    SparseMatrix t = affinity;
    for (std::size_t i = 0; i < t.n; ++i) {
        const double s = affinity.row_sum(i);
        if (!(s > 0.0)) throw Error(ErrorCode::IsolatedNode, "node " + std::to_string(i) + " has no edges");
        for (std::size_t p = t.row_ptr[i]; p < t.row_ptr[i + 1]; ++p) t.val[p] /= s;
    }
    return t;
}

SpreadResult spread(const SparseMatrix& t, const Matrix& initial, double alpha, double tol, std::size_t max_iter) {
    const std::size_t n = t.n;
    if (initial.rows() != n) throw Error(ErrorCode::ShapeMismatch, "label matrix rows != graph size");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in [0, 1)");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = t.row_ptr[i]; p < t.row_ptr[i + 1]; ++p) {
            if (t.val[p] < 0.0) throw Error(ErrorCode::NotStochastic, "negative transition entry");
        }
        if (std::abs(t.row_sum(i) - 1.0) > 1e-9) {
            throw Error(ErrorCode::NotStochastic, "row " + std::to_string(i) + " does not sum to 1");
        }
    }
    for (double v : initial.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "initial labels must lie in [0, 1]");
    }

    SpreadResult out;
    out.labels = initial;
    Matrix next(n, initial.cols());
    const std::size_t k = initial.cols();
    for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < k; ++c) {
                double acc = 0.0;
                for (std::size_t p = t.row_ptr[i]; p < t.row_ptr[i + 1]; ++p) acc += t.val[p] * out.labels(t.col[p], c);
                const double v = std::clamp(alpha * acc + (1.0 - alpha) * initial(i, c), 0.0, 1.0);
                change = std::max(change, std::abs(v - out.labels(i, c)));
                next(i, c) = v;
            }
        }
        std::swap(out.labels, next);
        if (change < tol) {
            out.converged = true;
            break;
        }
    }
    out.iterations = std::min(out.iterations, max_iter);
    return out;
}

SpuriousnessField propagate(std::span<const Annotation> annotations, const SliceSet& slices, const Matrix& coords,
                            const SpreadConfig& config, std::uint64_t previous_version) {
    config.validate();
    const auto verdicts = effective_verdicts(annotations);
    if (verdicts.empty()) throw Error(ErrorCode::NoAnnotations, "at least one annotation is required");
    const std::size_t n = coords.rows();
    if (slices.assignment.size() != n) throw Error(ErrorCode::ShapeMismatch, "slice assignment does not match points");
    for (const auto& [id, v] : verdicts) {
        if (id >= slices.slices.size()) {
            throw Error(ErrorCode::InvalidArgument, "annotation references unknown slice " + std::to_string(id));
        }
    }

    Matrix y0(n, 2, 0.0);
    for (const auto& [id, v] : verdicts) {
        for (auto i : slices.slices[id].members) y0(i, static_cast<std::size_t>(v)) = 1.0;
    }

    const auto t = transition(build_affinity(coords, config));
    const auto result = spread(t, y0, config.alpha, config.tol, config.max_iter);

    SpuriousnessField field;
    field.per_point.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double core = result.labels(i, 0), spur = result.labels(i, 1);
        const double total = core + spur;
        field.per_point[i] = total < 1e-12 ? kFallbackProbability : std::clamp(spur / total, 0.0, 1.0);
    }
    for (const auto& s : slices.slices) {
        std::vector<double> p;
        p.reserve(s.members.size());
        for (auto i : s.members) p.push_back(field.per_point[i]);
        field.per_slice[s.id] = p.empty() ? kFallbackProbability : pairwise_sum(p) / static_cast<double>(p.size());
    }
    field.version = previous_version + 1;
    field.config = config;
    field.annotations.assign(annotations.begin(), annotations.end());
    field.iterations = result.iterations;
    return field;
}

}  // namespace attrscan
