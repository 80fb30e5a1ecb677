#pragma once

#include <cstddef>
#include <vector>

#include "mkgc/errors.hpp"

namespace mkgc {

// Dense row-major matrix of doubles. The single numeric carrier for hidden
// states, weights, logits and gradients.
struct Matrix2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, size == rows * cols

    Matrix2D() = default;
    Matrix2D(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return rows * cols; }
    bool empty() const { return rows == 0 || cols == 0; }
    bool same_shape(const Matrix2D& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

bool all_finite(const Matrix2D& m);
// Throws numeric_error naming `what` if any entry is NaN/Inf.
void ensure_finite(const Matrix2D& m, const char* what);

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b);
Matrix2D transpose(const Matrix2D& a);
Matrix2D add(const Matrix2D& a, const Matrix2D& b);
Matrix2D subtract(const Matrix2D& a, const Matrix2D& b);
Matrix2D scale(const Matrix2D& a, double c);
Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b);
// Adds the 1 x cols row vector `r` to every row of `a`.
Matrix2D add_rowvec(const Matrix2D& a, const Matrix2D& r);

void add_inplace(Matrix2D& a, const Matrix2D& b);
void scale_inplace(Matrix2D& a, double c);
void fill(Matrix2D& a, double v);

Matrix2D concat_rows(const Matrix2D& a, const Matrix2D& b);
Matrix2D concat_cols(const std::vector<Matrix2D>& parts);
// Half-open ranges.
Matrix2D slice_rows(const Matrix2D& a, std::size_t r0, std::size_t r1);
Matrix2D slice_cols(const Matrix2D& a, std::size_t c0, std::size_t c1);

double max_abs_diff(const Matrix2D& a, const Matrix2D& b);

} // namespace mkgc
