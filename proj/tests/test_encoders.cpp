#include "doctest.h"

#include <cstring>
#include <random>

#include "mkgc/encoders.hpp"
#include "mkgc/verify.hpp"

using namespace mkgc;

TEST_SUITE_BEGIN("encoders");

namespace {

Matrix2D randm(std::mt19937_64& rng, std::size_t r, std::size_t c, double s = 1.0) {
    std::normal_distribution<double> dist(0.0, s);
    Matrix2D m(r, c);
    for (double& v : m.data) v = dist(rng);
    return m;
}

} // namespace

TEST_CASE("patchify geometry and raster order") {
    ImageTensor img(4, 4, 1);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) img.at(i, j, 0) = static_cast<double>(i * 4 + j);
    }
    const Matrix2D p = patchify(img, 2);
    REQUIRE(p.rows == 4);
    REQUIRE(p.cols == 4);
    // patch 0 covers rows 0-1, cols 0-1
    CHECK(p(0, 0) == 0.0);
    CHECK(p(0, 1) == 1.0);
    CHECK(p(0, 2) == 4.0);
    CHECK(p(0, 3) == 5.0);
    // patch 3 covers rows 2-3, cols 2-3
    CHECK(p(3, 0) == 10.0);
    CHECK(p(3, 3) == 15.0);

    const ImageTensor back = unpatchify(p, 4, 4, 1, 2);
    CHECK(std::memcmp(back.data.data(), img.data.data(), img.data.size() * 8) == 0);

    ImageTensor whole(2, 2, 1, 3.25);
    const Matrix2D wp = patchify(whole, 2);
    CHECK(wp.rows == 1);
    CHECK(wp.cols == 4);

    CHECK_THROWS_AS(patchify(ImageTensor(6, 4, 1), 4), shape_error);
}

TEST_CASE("embed_text adds word and position rows") {
    Parameter words("w", 6, 4), ents("e", 2, 4), pos("p", 8, 4);
    std::mt19937_64 rng(7);
    words.value = randm(rng, 6, 4);
    ents.value = randm(rng, 2, 4);
    pos.value = randm(rng, 8, 4);

    ad::Tape t;
    auto x = embed_text(t, {3, 7}, words, ents, pos);
    REQUIRE(x->value.rows == 2);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(x->value(0, j) == words.value(3, j) + pos.value(0, j));
        CHECK(x->value(1, j) == ents.value(1, j) + pos.value(1, j)); // id 7 -> entity row 1
    }
    CHECK_THROWS_AS(embed_text(t, {99}, words, ents, pos), vocab_error);
    const std::vector<int> too_long(9, 0);
    CHECK_THROWS_AS(embed_text(t, too_long, words, ents, pos), value_error);

    // zero tables embed to zero
    fill(words.value, 0.0);
    fill(ents.value, 0.0);
    fill(pos.value, 0.0);
    ad::Tape t2;
    auto z = embed_text(t2, {0, 1, 2}, words, ents, pos);
    CHECK(max_abs_diff(z->value, Matrix2D(3, 4)) == 0.0);
}

TEST_CASE("embed_patches concatenates o images with shared projection") {
    ModelConfig cfg = verify::toy_config(); // 4x4x1, P=2, o=2, d=8
    Parameter proj("proj", cfg.patch_dim(), cfg.d);
    Parameter vpos("vpos", cfg.visual_tokens(), cfg.d);
    std::mt19937_64 rng(8);
    proj.value = randm(rng, cfg.patch_dim(), cfg.d);
    vpos.value = randm(rng, cfg.visual_tokens(), cfg.d);

    ImageTensor img(4, 4, 1);
    for (double& v : img.data) v = std::normal_distribution<double>(0, 1)(rng);
    ad::Tape t;
    auto x = embed_patches(t, {img, img}, proj, vpos, cfg);
    REQUIRE(x->value.rows == 8);
    REQUIRE(x->value.cols == 8);
    // identical images: the two halves differ exactly by the position rows
    const std::size_t u = cfg.patches_per_image();
    for (std::size_t i = 0; i < u; ++i) {
        for (std::size_t j = 0; j < cfg.d; ++j) {
            const double a = x->value(i, j) - vpos.value(i, j);
            const double b = x->value(u + i, j) - vpos.value(u + i, j);
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
        }
    }
    // zero projection embeds to the position table itself
    fill(proj.value, 0.0);
    ad::Tape t2;
    auto z = embed_patches(t2, {img, img}, proj, vpos, cfg);
    CHECK(max_abs_diff(z->value, vpos.value) == 0.0);

    CHECK_THROWS_AS(embed_patches(t2, {img}, proj, vpos, cfg), shape_error);
}

TEST_CASE("multi-head attention agrees with single-head attention") {
    ModelConfig cfg = verify::toy_config();
    cfg.n_heads = 1;
    BlockWeights w("b", cfg);
    std::mt19937_64 rng(9);
    init_block(w, rng);
    // W_o = identity so MHA reduces to attention on the projected inputs
    fill(w.wo.value, 0.0);
    for (std::size_t i = 0; i < cfg.d; ++i) w.wo.value(i, i) = 1.0;

    const Matrix2D x = randm(rng, 3, cfg.d);
    const Matrix2D got = multi_head_attention_value(x, w, cfg);
    const Matrix2D want = attention(matmul(x, w.wq[0].value), matmul(x, w.wk[0].value),
                                    matmul(x, w.wv[0].value));
    CHECK(max_abs_diff(got, want) <= 1e-12);

    // zero value projections silence the output
    for (auto& wv : w.wv) fill(wv.value, 0.0);
    CHECK(max_abs_diff(multi_head_attention_value(x, w, cfg), Matrix2D(3, cfg.d)) == 0.0);
}

TEST_CASE("mha output shape") {
    ModelConfig cfg = verify::toy_config(); // d=8, two heads
    BlockWeights w("b", cfg);
    std::mt19937_64 rng(10);
    init_block(w, rng);
    const Matrix2D x = randm(rng, 3, cfg.d);
    const Matrix2D y = multi_head_attention_value(x, w, cfg);
    CHECK(y.rows == 3);
    CHECK(y.cols == 8);
}

TEST_CASE("ffn composition") {
    ModelConfig cfg = verify::toy_config();
    cfg.d = 4;
    cfg.d_m = 6;
    cfg.n_heads = 2;
    BlockWeights w("b", cfg);
    std::mt19937_64 rng(11);
    init_block(w, rng);
    init_normal(w.b1.value, rng, 0.5);
    init_normal(w.b2.value, rng, 0.5);

    const Matrix2D x = randm(rng, 2, 4);
    const Matrix2D got = ffn_value(x, w);
    const Matrix2D want =
        add_rowvec(matmul(relu(add_rowvec(matmul(x, w.w1.value), w.b1.value)), w.w2.value),
                   w.b2.value);
    CHECK(max_abs_diff(got, want) <= 1e-12);

    CHECK(max_abs_diff(ffn_value(Matrix2D(2, 4), w),
                       add_rowvec(matmul(relu(add_rowvec(matmul(Matrix2D(2, 4), w.w1.value),
                                                         w.b1.value)),
                                         w.w2.value),
                                  w.b2.value)) <= 1e-12);
    fill(w.w2.value, 0.0);
    const Matrix2D constant = ffn_value(x, w);
    for (std::size_t j = 0; j < 4; ++j) CHECK(constant(0, j) == w.b2.value(0, j));
}

TEST_CASE("encoder stacks: identity, composition, shapes") {
    ModelConfig cfg = verify::toy_config();
    std::mt19937_64 rng(12);

    std::vector<BlockWeights> zero;
    zero.emplace_back("z", cfg);
    const Matrix2D x = randm(rng, 4, cfg.d);
    CHECK(max_abs_diff(t_encoder_value(x, zero, cfg), x) == 0.0);
    CHECK(max_abs_diff(v_encoder_value(x, zero, cfg), x) == 0.0);

    std::vector<BlockWeights> none;
    CHECK(max_abs_diff(t_encoder_value(x, none, cfg), x) == 0.0);

    // one pre-LN block equals the manual composition
    std::vector<BlockWeights> one;
    one.emplace_back("o", cfg);
    init_block(one[0], rng);
    const Matrix2D got = v_encoder_value(x, one, cfg);
    BlockWeights& w = one[0];
    const Matrix2D mid =
        add(multi_head_attention_value(
                layer_norm(x, w.ln1_gamma.value, w.ln1_beta.value, cfg.eps), w, cfg),
            x);
    const Matrix2D want =
        add(ffn_value(layer_norm(mid, w.ln2_gamma.value, w.ln2_beta.value, cfg.eps), w), mid);
    CHECK(max_abs_diff(got, want) <= 1e-12);

    // post-LN block equals the manual composition
    const Matrix2D tgot = t_encoder_value(x, one, cfg);
    const Matrix2D tmid =
        add(layer_norm(multi_head_attention_value(x, w, cfg), w.ln1_gamma.value, w.ln1_beta.value,
                       cfg.eps),
            x);
    const Matrix2D twant =
        add(layer_norm(ffn_value(tmid, w), w.ln2_gamma.value, w.ln2_beta.value, cfg.eps), tmid);
    CHECK(max_abs_diff(tgot, twant) <= 1e-12);

    Matrix2D wide = randm(rng, 8, 16);
    ModelConfig cfg16 = cfg;
    cfg16.d = 16;
    cfg16.n_heads = 4;
    std::vector<BlockWeights> blocks16;
    blocks16.emplace_back("w", cfg16);
    init_block(blocks16[0], rng);
    const Matrix2D out16 = v_encoder_value(wide, blocks16, cfg16);
    CHECK(out16.rows == 8);
    CHECK(out16.cols == 16);
}

TEST_SUITE_END();
