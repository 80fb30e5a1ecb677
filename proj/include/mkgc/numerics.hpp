#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "mkgc/matrix.hpp"

namespace mkgc {

// Row-wise softmax with per-row max subtraction. Total on finite input.
Matrix2D softmax_rows(const Matrix2D& m);

// Per-row standardization with population variance:
//   out = gamma .* (x - mean) / sqrt(var + eps) + beta
// gamma/beta are 1 x cols row vectors.
Matrix2D layer_norm(const Matrix2D& x, const Matrix2D& gamma, const Matrix2D& beta, double eps);

Matrix2D relu(const Matrix2D& x);

// log(1 + exp(x)) without overflow.
double softplus(double x);
double sigmoid(double x);
double log_sum_exp(const std::vector<double>& xs);

// Mean negative log-softmax of the target class, over rows.
double cross_entropy(const Matrix2D& logits, const std::vector<int>& targets);
// Mean over rows and classes of the per-class binary cross entropy against
// sigmoid probabilities; targets is a 0/1 matrix of the same shape.
double bce_multilabel(const Matrix2D& logits, const Matrix2D& targets01);

// Either one class index per logits row, or a 0/1 multilabel matrix.
using ClassTarget = std::variant<std::vector<int>, Matrix2D>;
double classification_loss(const Matrix2D& logits, const ClassTarget& target);

// A learnable tensor with an accumulated gradient. Frozen parameters keep a
// zero gradient and are never updated by the optimizer.
struct Parameter {
    std::string name;
    Matrix2D value;
    Matrix2D gradient;
    bool frozen = false;

    Parameter() = default;
    Parameter(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols), gradient(rows, cols) {}

    void zero_grad() { fill(gradient, 0.0); }
};

// Central differences (f(p+h) - f(p-h)) / 2h per scalar entry of every
// parameter, restoring the original values afterwards. `f` must be a
// deterministic function of the parameter values.
std::vector<Matrix2D> finite_difference_gradient(const std::function<double()>& f,
                                                 const std::vector<Parameter*>& params,
                                                 double h);

} // namespace mkgc
