#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace noisebench {

// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool all_finite() const noexcept;
    void fill(double v);

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a · b
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// aᵀ · b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
// a · bᵀ
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& m);
DenseMatrix take_rows(const DenseMatrix& m, std::span<const std::size_t> indices);
// Stacks rows of `top` above rows of `bottom`.
DenseMatrix vstack(const DenseMatrix& top, const DenseMatrix& bottom);

// Max absolute entry difference; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

// Row-wise softmax, stabilised by subtracting each row's max.
DenseMatrix softmax(const DenseMatrix& logits);

}  // namespace noisebench
