#include "doctest.h"

#include <cmath>
#include <random>

#include "mkgc/autodiff.hpp"

using namespace mkgc;

TEST_SUITE_BEGIN("autodiff");

namespace {

Matrix2D randm(std::mt19937_64& rng, std::size_t r, std::size_t c, double s = 1.0) {
    std::normal_distribution<double> dist(0.0, s);
    Matrix2D m(r, c);
    for (double& v : m.data) v = dist(rng);
    return m;
}

// Checks the analytic gradient of a scalar-valued graph against central
// differences over every listed parameter.
double max_fd_error(const std::function<ad::NodeRef(ad::Tape&)>& build,
                    std::vector<Parameter*> params, double h = 1e-6) {
    for (Parameter* p : params) p->zero_grad();
    ad::Tape tape;
    tape.backward(build(tape));
    const auto fd = finite_difference_gradient(
        [&] {
            ad::Tape t;
            return build(t)->value(0, 0);
        },
        params, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t k = 0; k < fd[i].data.size(); ++k) {
            const double a = params[i]->gradient.data[k];
            const double b = fd[i].data[k];
            worst = std::max(worst, std::fabs(a - b) / (std::max(std::fabs(a), std::fabs(b)) + 1e-8));
        }
    }
    return worst;
}

} // namespace

TEST_CASE("matmul forward and backward") {
    std::mt19937_64 rng(1);
    Parameter a("a", 3, 4), b("b", 4, 2);
    a.value = randm(rng, 3, 4);
    b.value = randm(rng, 4, 2);
    const double err = max_fd_error(
        [&](ad::Tape& t) { return ad::half_sum_squares(ad::matmul(t.param(a), t.param(b))); },
        {&a, &b});
    CHECK(err < 1e-7);
}

TEST_CASE("elementwise ops backward") {
    std::mt19937_64 rng(2);
    Parameter a("a", 3, 5), r("r", 1, 5);
    a.value = randm(rng, 3, 5);
    r.value = randm(rng, 1, 5);
    const double err = max_fd_error(
        [&](ad::Tape& t) {
            auto x = ad::add_rowvec(ad::scale(t.param(a), 1.7), t.param(r));
            return ad::half_sum_squares(ad::relu(x));
        },
        {&a, &r});
    CHECK(err < 1e-7);
}

TEST_CASE("softmax and layer_norm backward") {
    std::mt19937_64 rng(3);
    Parameter a("a", 4, 6), gamma("g", 1, 6), beta("b", 1, 6);
    a.value = randm(rng, 4, 6);
    gamma.value = randm(rng, 1, 6, 0.5);
    for (double& v : gamma.value.data) v += 1.0;
    beta.value = randm(rng, 1, 6, 0.5);
    const double err = max_fd_error(
        [&](ad::Tape& t) {
            auto ln = ad::layer_norm(t.param(a), t.param(gamma), t.param(beta), 1e-5);
            return ad::half_sum_squares(ad::softmax_rows(ln));
        },
        {&a, &gamma, &beta});
    CHECK(err < 1e-6);
}

TEST_CASE("concat, slice and transpose backward") {
    std::mt19937_64 rng(4);
    Parameter a("a", 3, 4), b("b", 2, 4), c("c", 3, 2);
    a.value = randm(rng, 3, 4);
    b.value = randm(rng, 2, 4);
    c.value = randm(rng, 3, 2);
    const double err = max_fd_error(
        [&](ad::Tape& t) {
            auto cat = ad::concat_rows(t.param(a), t.param(b)); // 5 x 4
            auto sl = ad::slice_rows(cat, 1, 4);                // 3 x 4
            auto wide = ad::concat_cols({sl, t.param(c)});      // 3 x 6
            return ad::half_sum_squares(ad::transpose(wide));
        },
        {&a, &b, &c});
    CHECK(err < 1e-7);
}

TEST_CASE("gather scatter-adds into both tables") {
    std::mt19937_64 rng(5);
    Parameter base("base", 4, 3), ext("ext", 2, 3);
    base.value = randm(rng, 4, 3);
    ext.value = randm(rng, 2, 3);
    const std::vector<int> ids = {0, 2, 5, 2, 4}; // duplicates + both tables
    const double err = max_fd_error(
        [&](ad::Tape& t) {
            return ad::half_sum_squares(ad::gather_rows2(t.param(base), t.param(ext), ids));
        },
        {&base, &ext});
    CHECK(err < 1e-7);

    ad::Tape t;
    auto g = ad::gather_rows2(t.param(base), t.param(ext), ids);
    CHECK(g->value.rows == 5);
    CHECK(g->value(2, 0) == ext.value(1, 0));
    CHECK_THROWS_AS(ad::gather_rows2(t.param(base), t.param(ext), {9}), vocab_error);
}

TEST_CASE("loss nodes match the numerics kernels and their gradients") {
    std::mt19937_64 rng(6);
    Parameter logits("l", 1, 5);
    logits.value = randm(rng, 1, 5);
    {
        ad::Tape t;
        auto loss = ad::cross_entropy_loss(t.param(logits), 2);
        CHECK(loss->value(0, 0) == doctest::Approx(cross_entropy(logits.value, {2})).epsilon(1e-12));
        const double err = max_fd_error(
            [&](ad::Tape& tt) { return ad::cross_entropy_loss(tt.param(logits), 2); }, {&logits});
        CHECK(err < 1e-7);
    }
    {
        const std::vector<double> targets = {0, 1, 1, 0, 1};
        const double err = max_fd_error(
            [&](ad::Tape& tt) { return ad::bce_multilabel_loss(tt.param(logits), targets); },
            {&logits});
        CHECK(err < 1e-7);
    }
}

TEST_CASE("shared parameter accumulates through both uses") {
    Parameter w("w", 2, 2);
    w.value(0, 0) = 1.0;
    w.value(1, 1) = 2.0;
    const double err = max_fd_error(
        [&](ad::Tape& t) {
            auto n = t.param(w);
            return ad::half_sum_squares(ad::matmul(n, n));
        },
        {&w});
    CHECK(err < 1e-7);
}

TEST_CASE("frozen parameters keep zero gradients") {
    Parameter a("a", 2, 2), b("b", 2, 2);
    a.value(0, 0) = 1.0;
    b.value(0, 0) = 2.0;
    b.frozen = true;
    a.zero_grad();
    b.zero_grad();
    ad::Tape t;
    t.backward(ad::half_sum_squares(ad::matmul(t.param(a), t.param(b))));
    CHECK(max_abs_diff(b.gradient, Matrix2D(2, 2)) == 0.0);
    CHECK(a.gradient(0, 0) != 0.0);

    // an entirely frozen graph backpropagates nothing
    a.frozen = true;
    a.zero_grad();
    ad::Tape t2;
    t2.backward(ad::half_sum_squares(ad::matmul(t2.param(a), t2.param(b))));
    CHECK(max_abs_diff(a.gradient, Matrix2D(2, 2)) == 0.0);
    CHECK(max_abs_diff(b.gradient, Matrix2D(2, 2)) == 0.0);
}

TEST_CASE("backward misuse is a state error") {
    ad::Tape t;
    ad::Tape other;
    auto n = other.constant(Matrix2D(1, 1, 1.0));
    CHECK_THROWS_AS(t.backward(n), state_error);
    auto wide = t.constant(Matrix2D(1, 2, 1.0));
    CHECK_THROWS_AS(t.backward(wide), shape_error);
}

TEST_SUITE_END();
