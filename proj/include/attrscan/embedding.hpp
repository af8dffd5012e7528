#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "attrscan/tensor.hpp"

namespace attrscan {

struct EmbeddingConfig {
    std::size_t n_neighbors = 15;
    double min_dist = 0.1;
    std::size_t n_components = 2;
    std::uint64_t seed = 42;
    std::size_t epochs = 200;

    void validate() const;

    // Named presets: "celeba" (5, 0.01) and "waterbirds" (20, 0.05).
    static EmbeddingConfig preset(std::string_view name);

    bool operator==(const EmbeddingConfig&) const = default;
};

enum class EmbeddingSource { Computed, Precomputed };

struct Embedding2D {
    Matrix coords;  // N x 2, row i is bundle sample i
    EmbeddingConfig config;
    EmbeddingSource source = EmbeddingSource::Computed;
};

// Neighbor-graph layout in the UMAP family. Deterministic for a fixed seed and
// equivariant under row permutations of distinct inputs.
Embedding2D embed(const Matrix& vectors, const EmbeddingConfig& config);

Embedding2D precomputed_embedding(const Tensor& coords, const EmbeddingConfig& config);

// Rank-based trustworthiness of `coords` against `high_dim`; requires k < N/2.
double trustworthiness(const Matrix& high_dim, const Matrix& coords, std::size_t k);

// (a, b) of the low-dimensional similarity 1 / (1 + a d^{2b}) fitted to the
// min_dist-offset exponential with the given spread.
std::pair<double, double> fit_curve_params(double min_dist, double spread = 1.0);

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows);

}  // namespace attrscan
