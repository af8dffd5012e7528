#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrscan/slicing.hpp"
#include "attrscan/tensor.hpp"

namespace attrscan {

enum class Verdict { Core = 0, Spurious = 1 };

std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view text);

struct Annotation {
    std::string timestamp;  // RFC 3339
    std::size_t slice_id = 0;
    Verdict verdict = Verdict::Core;
    std::string note;
    std::string author;

    bool operator==(const Annotation&) const = default;
};

std::string now_rfc3339();

// Append-only, one JSON object per line.
void append_annotation(const std::filesystem::path& log_path, const Annotation& annotation);

// Missing log -> empty list. A malformed line throws ParseError naming its 1-based line number.
std::vector<Annotation> replay_annotations(const std::filesystem::path& log_path);

// Last write wins per slice.
std::map<std::size_t, Verdict> effective_verdicts(std::span<const Annotation> annotations);

enum class SigmaMode { MedianHeuristic, Fixed };

struct SpreadConfig {
    double alpha = 0.2;
    SigmaMode sigma_mode = SigmaMode::MedianHeuristic;
    double sigma = 1.0;  // used when sigma_mode == Fixed
    std::size_t knn = 50;
    double tol = 1e-6;
    std::size_t max_iter = 1000;
    std::size_t dense_limit = 2000;  // full kernel at or below this many points

    void validate() const;
    bool operator==(const SpreadConfig&) const = default;
};

// Compressed sparse rows, square.
struct SparseMatrix {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col;
    std::vector<double> val;

    double at(std::size_t i, std::size_t j) const;
    double row_sum(std::size_t i) const;
    Matrix to_dense() const;
};

// Median pairwise distance over a deterministic subsample of at most 1024 points.
double median_heuristic_sigma(const Matrix& coords);

// Gaussian-kernel graph exp(-|xi - xj|^2 / 2 sigma^2), zero diagonal. Dense at
// or below dense_limit points, otherwise k-NN sparsified and max-symmetrized.
SparseMatrix build_affinity(const Matrix& coords, const SpreadConfig& config);

// Row-normalized D^-1 W. Throws IsolatedNode on an all-zero row.
SparseMatrix transition(const SparseMatrix& affinity);

struct SpreadResult {
    Matrix labels;  // N x classes
    std::size_t iterations = 0;
    bool converged = false;
};

// Y <- alpha T Y + (1 - alpha) Y0 from Y = Y0 until the max-abs change drops below tol.
SpreadResult spread(const SparseMatrix& transition_matrix, const Matrix& initial, double alpha, double tol,
                    std::size_t max_iter);

struct SpuriousnessField {
    std::vector<double> per_point;
    std::map<std::size_t, double> per_slice;
    std::uint64_t version = 0;
    SpreadConfig config;
    std::vector<Annotation> annotations;
    std::size_t iterations = 0;
};

inline constexpr double kFallbackProbability = 0.5;

SpuriousnessField propagate(std::span<const Annotation> annotations, const SliceSet& slices, const Matrix& coords,
                            const SpreadConfig& config, std::uint64_t previous_version = 0);

}  // namespace attrscan
