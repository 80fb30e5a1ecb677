#include "mkgc/encoders.hpp"

#include <cmath>

namespace mkgc {

BlockWeights::BlockWeights(const std::string& prefix, const ModelConfig& cfg) {
    const std::size_t d = cfg.d;
    const std::size_t dh = cfg.head_dim();
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        const std::string s = std::to_string(i);
        wq.emplace_back(prefix + ".wq" + s, d, dh);
        wk.emplace_back(prefix + ".wk" + s, d, dh);
        wv.emplace_back(prefix + ".wv" + s, d, dh);
    }
    wo = Parameter(prefix + ".wo", d, d);
    w1 = Parameter(prefix + ".w1", d, cfg.d_m);
    b1 = Parameter(prefix + ".b1", 1, cfg.d_m);
    w2 = Parameter(prefix + ".w2", cfg.d_m, d);
    b2 = Parameter(prefix + ".b2", 1, d);
    ln1_gamma = Parameter(prefix + ".ln1g", 1, d);
    ln1_beta = Parameter(prefix + ".ln1b", 1, d);
    ln2_gamma = Parameter(prefix + ".ln2g", 1, d);
    ln2_beta = Parameter(prefix + ".ln2b", 1, d);
}

void BlockWeights::collect(std::vector<Parameter*>& out) {
    for (auto& p : wq) out.push_back(&p);
    for (auto& p : wk) out.push_back(&p);
    for (auto& p : wv) out.push_back(&p);
    out.push_back(&wo);
    out.push_back(&w1);
    out.push_back(&b1);
    out.push_back(&w2);
    out.push_back(&b2);
    out.push_back(&ln1_gamma);
    out.push_back(&ln1_beta);
    out.push_back(&ln2_gamma);
    out.push_back(&ln2_beta);
}

void init_normal(Matrix2D& m, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.data) v = dist(rng);
}

void init_block(BlockWeights& b, std::mt19937_64& rng) {
    const double s = 0.02;
    for (auto& p : b.wq) init_normal(p.value, rng, s);
    for (auto& p : b.wk) init_normal(p.value, rng, s);
    for (auto& p : b.wv) init_normal(p.value, rng, s);
    init_normal(b.wo.value, rng, s);
    init_normal(b.w1.value, rng, s);
    init_normal(b.w2.value, rng, s);
    fill(b.ln1_gamma.value, 1.0);
    fill(b.ln2_gamma.value, 1.0);
    // biases and LN offsets stay zero
}

Matrix2D patchify(const ImageTensor& image, std::size_t patch) {
    if (patch == 0 || image.h % patch != 0 || image.w % patch != 0) {
        throw shape_error("patchify: image sides must be divisible by the patch size");
    }
    const std::size_t ph = image.h / patch;
    const std::size_t pw = image.w / patch;
    Matrix2D out(ph * pw, patch * patch * image.c);
    for (std::size_t bi = 0; bi < ph; ++bi) {
        for (std::size_t bj = 0; bj < pw; ++bj) {
            const std::size_t row = bi * pw + bj;
            std::size_t col = 0;
            for (std::size_t i = 0; i < patch; ++i) {
                for (std::size_t j = 0; j < patch; ++j) {
                    for (std::size_t k = 0; k < image.c; ++k) {
                        out(row, col++) = image.at(bi * patch + i, bj * patch + j, k);
                    }
                }
            }
        }
    }
    return out;
}

ImageTensor unpatchify(const Matrix2D& patches, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t patch) {
    const std::size_t ph = h / patch;
    const std::size_t pw = w / patch;
    if (patches.rows != ph * pw || patches.cols != patch * patch * c) {
        throw shape_error("unpatchify: patch matrix does not match the target geometry");
    }
    ImageTensor img(h, w, c);
    for (std::size_t bi = 0; bi < ph; ++bi) {
        for (std::size_t bj = 0; bj < pw; ++bj) {
            const std::size_t row = bi * pw + bj;
            std::size_t col = 0;
            for (std::size_t i = 0; i < patch; ++i) {
                for (std::size_t j = 0; j < patch; ++j) {
                    for (std::size_t k = 0; k < c; ++k) {
                        img.at(bi * patch + i, bj * patch + j, k) = patches(row, col++);
                    }
                }
            }
        }
    }
    return img;
}

Matrix2D patchify_all(const std::vector<ImageTensor>& images, const ModelConfig& cfg) {
    if (images.size() != cfg.images_per_entity) {
        throw shape_error("expected exactly " + std::to_string(cfg.images_per_entity) + " images");
    }
    const std::size_t u = cfg.patches_per_image();
    Matrix2D out(u * images.size(), cfg.patch_dim());
    for (std::size_t j = 0; j < images.size(); ++j) {
        const ImageTensor& img = images[j];
        if (img.h != cfg.img_h || img.w != cfg.img_w || img.c != cfg.img_c) {
            throw shape_error("image " + std::to_string(j) + " does not match the configured geometry");
        }
        Matrix2D p = patchify(img, cfg.patch);
        for (std::size_t i = 0; i < u; ++i) {
            for (std::size_t k = 0; k < p.cols; ++k) out(j * u + i, k) = p(i, k);
        }
    }
    return out;
}

Matrix2D attention(const Matrix2D& q, const Matrix2D& k, const Matrix2D& v,
                   const std::vector<bool>* key_mask) {
    if (q.cols != k.cols) throw shape_error("attention: query/key width mismatch");
    if (k.rows != v.rows) throw shape_error("attention: key/value count mismatch");
    Matrix2D logits = matmul(q, transpose(k));
    scale_inplace(logits, 1.0 / std::sqrt(static_cast<double>(k.cols)));
    if (key_mask != nullptr) {
        if (key_mask->size() != k.rows) throw shape_error("attention: mask length mismatch");
        for (std::size_t i = 0; i < logits.rows; ++i) {
            for (std::size_t j = 0; j < logits.cols; ++j) {
                if ((*key_mask)[j]) logits(i, j) += -1e30;
            }
        }
    }
    return matmul(softmax_rows(logits), v);
}

ad::NodeRef embed_text(ad::Tape& tape, const std::vector<int>& token_ids,
                       Parameter& word_base, Parameter& entity_rows, Parameter& t_pos) {
    if (token_ids.empty()) throw value_error("embed_text: empty token sequence");
    if (token_ids.size() > t_pos.value.rows) {
        throw value_error("embed_text: sequence of length " + std::to_string(token_ids.size()) +
                          " exceeds max length " + std::to_string(t_pos.value.rows));
    }
    auto words = ad::gather_rows2(tape.param(word_base), tape.param(entity_rows), token_ids);
    auto pos = ad::slice_rows(tape.param(t_pos), 0, token_ids.size());
    return ad::add(words, pos);
}

ad::NodeRef embed_patches(ad::Tape& tape, const std::vector<ImageTensor>& images,
                          Parameter& patch_proj, Parameter& v_pos, const ModelConfig& cfg) {
    auto patches = tape.constant(patchify_all(images, cfg));
    auto projected = ad::matmul(patches, tape.param(patch_proj));
    return ad::add(projected, tape.param(v_pos));
}

ad::NodeRef multi_head_attention(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w,
                                 const ModelConfig& cfg) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    std::vector<ad::NodeRef> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        auto q = ad::matmul(x, tape.param(w.wq[i]));
        auto k = ad::matmul(x, tape.param(w.wk[i]));
        auto v = ad::matmul(x, tape.param(w.wv[i]));
        auto logits = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
        heads.push_back(ad::matmul(ad::softmax_rows(logits), v));
    }
    return ad::matmul(ad::concat_cols(heads), tape.param(w.wo));
}

ad::NodeRef ffn(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w) {
    auto hidden = ad::relu(ad::add_rowvec(ad::matmul(x, tape.param(w.w1)), tape.param(w.b1)));
    return ad::add_rowvec(ad::matmul(hidden, tape.param(w.w2)), tape.param(w.b2));
}

ad::NodeRef t_block(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w, const ModelConfig& cfg) {
    auto att = multi_head_attention(tape, x, w, cfg);
    auto mid = ad::add(ad::layer_norm(att, tape.param(w.ln1_gamma), tape.param(w.ln1_beta), cfg.eps), x);
    auto f = ffn(tape, mid, w);
    return ad::add(ad::layer_norm(f, tape.param(w.ln2_gamma), tape.param(w.ln2_beta), cfg.eps), mid);
}

ad::NodeRef v_block(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w, const ModelConfig& cfg) {
    auto att = multi_head_attention(
        tape, ad::layer_norm(x, tape.param(w.ln1_gamma), tape.param(w.ln1_beta), cfg.eps), w, cfg);
    auto mid = ad::add(att, x);
    auto f = ffn(tape, ad::layer_norm(mid, tape.param(w.ln2_gamma), tape.param(w.ln2_beta), cfg.eps), w);
    return ad::add(f, mid);
}

ad::NodeRef t_encoder_forward(ad::Tape& tape, const ad::NodeRef& x0,
                              std::vector<BlockWeights>& blocks, const ModelConfig& cfg) {
    ad::NodeRef x = x0;
    for (auto& b : blocks) x = t_block(tape, x, b, cfg);
    return x;
}

ad::NodeRef v_encoder_forward(ad::Tape& tape, const ad::NodeRef& x0,
                              std::vector<BlockWeights>& blocks, const ModelConfig& cfg) {
    ad::NodeRef x = x0;
    for (auto& b : blocks) x = v_block(tape, x, b, cfg);
    return x;
}

Matrix2D multi_head_attention_value(const Matrix2D& x, BlockWeights& w, const ModelConfig& cfg) {
    ad::Tape tape;
    return multi_head_attention(tape, tape.constant(x), w, cfg)->value;
}

Matrix2D ffn_value(const Matrix2D& x, BlockWeights& w) {
    ad::Tape tape;
    return ffn(tape, tape.constant(x), w)->value;
}

Matrix2D t_encoder_value(const Matrix2D& x0, std::vector<BlockWeights>& blocks, const ModelConfig& cfg) {
    ad::Tape tape;
    return t_encoder_forward(tape, tape.constant(x0), blocks, cfg)->value;
}

Matrix2D v_encoder_value(const Matrix2D& x0, std::vector<BlockWeights>& blocks, const ModelConfig& cfg) {
    ad::Tape tape;
    return v_encoder_forward(tape, tape.constant(x0), blocks, cfg)->value;
}

} // namespace mkgc
