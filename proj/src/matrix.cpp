#include "mkgc/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mkgc {

bool all_finite(const Matrix2D& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void ensure_finite(const Matrix2D& m, const char* what) {
    if (!all_finite(m)) {
        throw numeric_error(std::string(what) + " contains non-finite entries");
    }
}

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
    if (a.cols != b.rows) {
        throw shape_error("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                          " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    Matrix2D out(a.rows, b.cols);
    // i-k-j order keeps the inner loop contiguous over b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * out.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix2D transpose(const Matrix2D& a) {
    Matrix2D out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix2D add(const Matrix2D& a, const Matrix2D& b) {
    if (!a.same_shape(b)) throw shape_error("add: shape mismatch");
    Matrix2D out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix2D subtract(const Matrix2D& a, const Matrix2D& b) {
    if (!a.same_shape(b)) throw shape_error("subtract: shape mismatch");
    Matrix2D out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix2D scale(const Matrix2D& a, double c) {
    Matrix2D out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b) {
    if (!a.same_shape(b)) throw shape_error("hadamard: shape mismatch");
    Matrix2D out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix2D add_rowvec(const Matrix2D& a, const Matrix2D& r) {
    if (r.rows != 1 || r.cols != a.cols) {
        throw shape_error("add_rowvec: expected 1x" + std::to_string(a.cols) + " row vector");
    }
    Matrix2D out = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            out(i, j) += r.data[j];
        }
    }
    return out;
}

void add_inplace(Matrix2D& a, const Matrix2D& b) {
    if (!a.same_shape(b)) throw shape_error("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void scale_inplace(Matrix2D& a, double c) {
    for (double& v : a.data) v *= c;
}

void fill(Matrix2D& a, double v) {
    std::fill(a.data.begin(), a.data.end(), v);
}

Matrix2D concat_rows(const Matrix2D& a, const Matrix2D& b) {
    if (a.cols != b.cols) throw shape_error("concat_rows: column mismatch");
    Matrix2D out(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}

Matrix2D concat_cols(const std::vector<Matrix2D>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: no parts");
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows != parts[0].rows) throw shape_error("concat_cols: row mismatch");
        total += p.cols;
    }
    Matrix2D out(parts[0].rows, total);
    for (std::size_t i = 0; i < out.rows; ++i) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            for (std::size_t j = 0; j < p.cols; ++j) out(i, off + j) = p(i, j);
            off += p.cols;
        }
    }
    return out;
}

Matrix2D slice_rows(const Matrix2D& a, std::size_t r0, std::size_t r1) {
    if (r0 > r1 || r1 > a.rows) throw shape_error("slice_rows: range out of bounds");
    Matrix2D out(r1 - r0, a.cols);
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(r0 * a.cols),
              a.data.begin() + static_cast<std::ptrdiff_t>(r1 * a.cols), out.data.begin());
    return out;
}

Matrix2D slice_cols(const Matrix2D& a, std::size_t c0, std::size_t c1) {
    if (c0 > c1 || c1 > a.cols) throw shape_error("slice_cols: range out of bounds");
    Matrix2D out(a.rows, c1 - c0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
    }
    return out;
}

double max_abs_diff(const Matrix2D& a, const Matrix2D& b) {
    if (!a.same_shape(b)) throw shape_error("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

} // namespace mkgc
