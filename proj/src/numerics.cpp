#include "mkgc/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace mkgc {

Matrix2D softmax_rows(const Matrix2D& m) {
    ensure_finite(m, "softmax input");
    Matrix2D out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m.cols; ++j) mx = std::max(mx, m(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            const double e = std::exp(m(i, j) - mx);
            out(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < m.cols; ++j) out(i, j) /= sum;
    }
    return out;
}

Matrix2D layer_norm(const Matrix2D& x, const Matrix2D& gamma, const Matrix2D& beta, double eps) {
    if (gamma.rows != 1 || gamma.cols != x.cols || beta.rows != 1 || beta.cols != x.cols) {
        throw shape_error("layer_norm: gamma/beta must be 1x" + std::to_string(x.cols));
    }
    if (eps < 0.0) throw value_error("layer_norm: eps must be nonnegative");
    Matrix2D out(x.rows, x.cols);
    const double n = static_cast<double>(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) mean += x(i, j);
        mean /= n;
        double var = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double d = x(i, j) - mean;
            var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < x.cols; ++j) {
            out(i, j) = gamma.data[j] * (x(i, j) - mean) * inv + beta.data[j];
        }
    }
    return out;
}

Matrix2D relu(const Matrix2D& x) {
    Matrix2D out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sum_exp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx; // all -inf
    double sum = 0.0;
    for (double x : xs) sum += std::exp(x - mx);
    return mx + std::log(sum);
}

double cross_entropy(const Matrix2D& logits, const std::vector<int>& targets) {
    if (targets.size() != logits.rows) {
        throw value_error("cross_entropy: one target per logits row required");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols) {
            throw value_error("cross_entropy: target index out of range");
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(logits(i, j) - mx);
        total += std::log(sum) - (logits(i, static_cast<std::size_t>(t)) - mx);
    }
    return total / static_cast<double>(logits.rows);
}

double bce_multilabel(const Matrix2D& logits, const Matrix2D& targets01) {
    if (!logits.same_shape(targets01)) throw shape_error("bce_multilabel: shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double x = logits.data[i];
        const double y = targets01.data[i];
        if (y != 0.0 && y != 1.0) throw value_error("bce_multilabel: targets must be 0/1");
        // -[y log s(x) + (1-y) log(1 - s(x))]
        total += y * softplus(-x) + (1.0 - y) * softplus(x);
    }
    return total / static_cast<double>(logits.data.size());
}

double classification_loss(const Matrix2D& logits, const ClassTarget& target) {
    if (std::holds_alternative<std::vector<int>>(target)) {
        return cross_entropy(logits, std::get<std::vector<int>>(target));
    }
    return bce_multilabel(logits, std::get<Matrix2D>(target));
}

std::vector<Matrix2D> finite_difference_gradient(const std::function<double()>& f,
                                                 const std::vector<Parameter*>& params,
                                                 double h) {
    if (h <= 0.0) throw value_error("finite_difference_gradient: h must be positive");
    std::vector<Matrix2D> grads;
    grads.reserve(params.size());
    for (Parameter* p : params) {
        Matrix2D g(p->value.rows, p->value.cols);
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double orig = p->value.data[i];
            p->value.data[i] = orig + h;
            const double fp = f();
            p->value.data[i] = orig - h;
            const double fm = f();
            p->value.data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw numeric_error("finite_difference_gradient: non-finite evaluation");
            }
            g.data[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace mkgc
