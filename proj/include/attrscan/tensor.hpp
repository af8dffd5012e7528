#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace attrscan {

// Row-major float32 array as stored in a TensorFile.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> values;

    std::size_t element_count() const noexcept;
    bool operator==(const Tensor&) const = default;
};

// Dense row-major matrix of doubles. Used for masks (m x n), point sets (N x k)
// and label matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Channel-major CNN feature map F with shape d x m x n.
struct FeatureMap {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double operator()(std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return values[(c * height + i) * width + j];
    }
    bool operator==(const FeatureMap&) const = default;
};

FeatureMap to_feature_map(const Tensor& t);  // requires ndim == 3
Matrix to_matrix(const Tensor& t);           // requires ndim == 2
Tensor to_tensor(const Matrix& m);
Tensor to_tensor(const FeatureMap& f);

// Fixed-arity pairwise (tree) summation; result depends only on the order of
// the input, never on scheduling.
double pairwise_sum(std::span<const double> values) noexcept;

}  // namespace attrscan
