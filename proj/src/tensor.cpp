#include "attrscan/tensor.hpp"

#include <algorithm>
#include <string>

#include "attrscan/error.hpp"

namespace attrscan {

std::size_t Tensor::element_count() const noexcept {
    if (dims.empty()) return 0;
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw Error(ErrorCode::ShapeMismatch, "matrix data length " + std::to_string(data_.size()) +
                                                  " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

FeatureMap to_feature_map(const Tensor& t) {
    if (t.dims.size() != 3) throw Error(ErrorCode::ShapeMismatch, "feature tensor must be 3-D");
    FeatureMap f;
    f.channels = t.dims[0];
    f.height = t.dims[1];
    f.width = t.dims[2];
    f.values.assign(t.values.begin(), t.values.end());
    return f;
}

Matrix to_matrix(const Tensor& t) {
    if (t.dims.size() != 2) throw Error(ErrorCode::ShapeMismatch, "matrix tensor must be 2-D");
    return Matrix(t.dims[0], t.dims[1], std::vector<double>(t.values.begin(), t.values.end()));
}

Tensor to_tensor(const Matrix& m) {
    Tensor t;
    t.dims = {m.rows(), m.cols()};
    t.values.resize(m.size());
    std::transform(m.data().begin(), m.data().end(), t.values.begin(),
                   [](double v) { return static_cast<float>(v); });
    return t;
}

Tensor to_tensor(const FeatureMap& f) {
    Tensor t;
    t.dims = {f.channels, f.height, f.width};
    t.values.resize(f.values.size());
    std::transform(f.values.begin(), f.values.end(), t.values.begin(),
                   [](double v) { return static_cast<float>(v); });
    return t;
}

double pairwise_sum(std::span<const double> values) noexcept {
    constexpr std::size_t kLeaf = 8;
    if (values.size() <= kLeaf) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace attrscan
