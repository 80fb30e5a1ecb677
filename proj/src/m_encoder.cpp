#include "mkgc/m_encoder.hpp"

#include <cmath>
#include <cstdio>

namespace mkgc {

MEncoderLayer::MEncoderLayer(const std::string& prefix, const ModelConfig& cfg)
    : text(prefix + ".t", cfg), vis(prefix + ".v", cfg), w3(prefix + ".w3", cfg.d, cfg.d_m) {}

void MEncoderLayer::collect(std::vector<Parameter*>& out) {
    text.collect(out);
    vis.collect(out);
    out.push_back(&w3);
}

Matrix2D lambda_weights(const Matrix2D& q, const Matrix2D& k_v, const Matrix2D& k_t) {
    if (q.cols != k_v.cols || q.cols != k_t.cols) {
        throw shape_error("lambda_weights: query/key width mismatch");
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix2D lv = matmul(q, transpose(k_v));
    Matrix2D lt = matmul(q, transpose(k_t));
    Matrix2D out(q.rows, 1);
    for (std::size_t i = 0; i < q.rows; ++i) {
        std::vector<double> tv(lv.cols), tt(lt.cols);
        for (std::size_t j = 0; j < lv.cols; ++j) tv[j] = lv(i, j) * inv_sqrt;
        for (std::size_t j = 0; j < lt.cols; ++j) tt[j] = lt(i, j) * inv_sqrt;
        // lambda = sigmoid(logsumexp(text) - logsumexp(visual))
        out(i, 0) = sigmoid(log_sum_exp(tt) - log_sum_exp(tv));
    }
    return out;
}

PgiResult pgi(ad::Tape& tape, const ad::NodeRef& h_t, const ad::NodeRef& h_v,
              MEncoderLayer& layer, const ModelConfig& cfg, bool mask_text_prefix) {
    if (h_t->value.cols != cfg.d || h_v->value.cols != cfg.d) {
        throw shape_error("pgi: stream width must equal d");
    }
    PgiResult res;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    const std::size_t n = h_t->value.rows;
    const std::size_t m = h_v->value.rows;

    // Textual side keeps its post-LN convention: plain self-attention on h_t.
    auto t_att = multi_head_attention(tape, h_t, layer.text, cfg);
    res.h_t = ad::add(
        ad::layer_norm(t_att, tape.param(layer.text.ln1_gamma), tape.param(layer.text.ln1_beta), cfg.eps),
        h_t);

    // Visual side (pre-LN): queries/keys/values from LN(h_v), textual prefix
    // keys/values from h_t through the textual projections.
    auto v_in = ad::layer_norm(h_v, tape.param(layer.vis.ln1_gamma), tape.param(layer.vis.ln1_beta),
                               cfg.eps);
    const bool hybrid = cfg.ablation != Ablation::no_pgi;
    std::vector<ad::NodeRef> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        auto q = ad::matmul(v_in, tape.param(layer.vis.wq[i]));
        auto k_v = ad::matmul(v_in, tape.param(layer.vis.wk[i]));
        auto v_v = ad::matmul(v_in, tape.param(layer.vis.wv[i]));
        ad::NodeRef k = k_v;
        ad::NodeRef v = v_v;
        if (hybrid) {
            auto k_t = ad::matmul(h_t, tape.param(layer.text.wk[i]));
            auto v_t = ad::matmul(h_t, tape.param(layer.text.wv[i]));
            k = ad::concat_rows(k_v, k_t);
            v = ad::concat_rows(v_v, v_t);
            res.lambdas.push_back(lambda_weights(q->value, k_v->value, k_t->value));
        }
        auto logits = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
        if (hybrid && mask_text_prefix) {
            Matrix2D mask(m, m + n);
            for (std::size_t r = 0; r < m; ++r) {
                for (std::size_t c = m; c < m + n; ++c) mask(r, c) = -1e30;
            }
            logits = ad::add(logits, tape.constant(mask));
        }
        auto head = ad::matmul(ad::softmax_rows(logits), v);
        res.visual_heads.push_back(head);
        heads.push_back(head);
    }
    auto v_att = ad::matmul(ad::concat_cols(heads), tape.param(layer.vis.wo));
    res.h_v = ad::add(v_att, h_v);
    return res;
}

std::vector<Matrix2D> pgi_interpolated(const Matrix2D& h_t, const Matrix2D& h_v,
                                       MEncoderLayer& layer, const ModelConfig& cfg) {
    Matrix2D v_in = layer_norm(h_v, layer.vis.ln1_gamma.value, layer.vis.ln1_beta.value, cfg.eps);
    std::vector<Matrix2D> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        Matrix2D q = matmul(v_in, layer.vis.wq[i].value);
        Matrix2D k_v = matmul(v_in, layer.vis.wk[i].value);
        Matrix2D v_v = matmul(v_in, layer.vis.wv[i].value);
        Matrix2D k_t = matmul(h_t, layer.text.wk[i].value);
        Matrix2D v_t = matmul(h_t, layer.text.wv[i].value);
        Matrix2D lam = lambda_weights(q, k_v, k_t);
        Matrix2D self_att = attention(q, k_v, v_v);
        Matrix2D cross_att = attention(q, k_t, v_t);
        Matrix2D blended(q.rows, v_v.cols);
        for (std::size_t r = 0; r < q.rows; ++r) {
            const double l = lam(r, 0);
            for (std::size_t c = 0; c < blended.cols; ++c) {
                blended(r, c) = (1.0 - l) * self_att(r, c) + l * cross_att(r, c);
            }
        }
        heads.push_back(std::move(blended));
    }
    return heads;
}

Matrix2D caf_similarity(const Matrix2D& x_t, const Matrix2D& x_v) {
    if (x_t.cols != x_v.cols) throw shape_error("caf_similarity: width mismatch");
    return matmul(x_t, transpose(x_v));
}

Matrix2D caf_aggregate(const Matrix2D& s, const Matrix2D& x_v) {
    if (s.cols != x_v.rows) throw shape_error("caf_aggregate: S columns must match visual rows");
    return matmul(softmax_rows(s), x_v);
}

Matrix2D caf_ffn(const Matrix2D& x_t, const Matrix2D& agg, MEncoderLayer& layer) {
    Matrix2D pre = add_rowvec(matmul(x_t, layer.text.w1.value), layer.text.b1.value);
    add_inplace(pre, matmul(agg, layer.w3.value));
    return add_rowvec(matmul(relu(pre), layer.text.w2.value), layer.text.b2.value);
}

ad::NodeRef caf_fused_ffn(ad::Tape& tape, const ad::NodeRef& x_t, const ad::NodeRef& x_v,
                          MEncoderLayer& layer, LayerTrace* trace) {
    auto s = ad::matmul(x_t, ad::transpose(x_v));
    auto agg = ad::matmul(ad::softmax_rows(s), x_v);
    auto pre = ad::add(
        ad::add_rowvec(ad::matmul(x_t, tape.param(layer.text.w1)), tape.param(layer.text.b1)),
        ad::matmul(agg, tape.param(layer.w3)));
    auto out = ad::add_rowvec(ad::matmul(ad::relu(pre), tape.param(layer.text.w2)),
                              tape.param(layer.text.b2));
    if (trace != nullptr) {
        trace->similarity = s->value;
        trace->aggregated = agg->value;
    }
    return out;
}

std::pair<ad::NodeRef, ad::NodeRef> m_encoder_layer_forward(ad::Tape& tape,
                                                            const ad::NodeRef& h_t,
                                                            const ad::NodeRef& h_v,
                                                            MEncoderLayer& layer,
                                                            const ModelConfig& cfg,
                                                            LayerTrace* trace) {
    PgiResult p = pgi(tape, h_t, h_v, layer, cfg);
    if (trace != nullptr) trace->lambda = p.lambdas;

    // Textual FFN with the fusion term, keeping the post-LN convention.
    ad::NodeRef t_ffn;
    if (cfg.ablation == Ablation::no_caf) {
        t_ffn = ffn(tape, p.h_t, layer.text);
    } else {
        t_ffn = caf_fused_ffn(tape, p.h_t, p.h_v, layer, trace);
    }
    auto h_t_out = ad::add(ad::layer_norm(t_ffn, tape.param(layer.text.ln2_gamma),
                                          tape.param(layer.text.ln2_beta), cfg.eps),
                           p.h_t);

    // Visual FFN is the unmodified one, pre-LN convention.
    auto v_ffn = ffn(tape,
                     ad::layer_norm(p.h_v, tape.param(layer.vis.ln2_gamma),
                                    tape.param(layer.vis.ln2_beta), cfg.eps),
                     layer.vis);
    auto h_v_out = ad::add(v_ffn, p.h_v);
    return {h_t_out, h_v_out};
}

std::pair<ad::NodeRef, ad::NodeRef> m_encoder_forward(ad::Tape& tape, const ad::NodeRef& h_t0,
                                                      const ad::NodeRef& h_v0,
                                                      std::vector<MEncoderLayer>& layers,
                                                      const ModelConfig& cfg,
                                                      FusionTrace* trace) {
    ad::NodeRef h_t = h_t0;
    ad::NodeRef h_v = h_v0;
    for (auto& layer : layers) {
        LayerTrace lt;
        auto [t_next, v_next] =
            m_encoder_layer_forward(tape, h_t, h_v, layer, cfg, trace != nullptr ? &lt : nullptr);
        h_t = t_next;
        h_v = v_next;
        if (trace != nullptr) trace->layers.push_back(std::move(lt));
    }
    return {h_t, h_v};
}

namespace {

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void append_matrix_tsv(std::string& out, const Matrix2D& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j > 0) out += '\t';
            out += fmt9(m(i, j));
        }
        out += '\n';
    }
}

} // namespace

std::string FusionTrace::to_text() const {
    std::string out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerTrace& lt = layers[l];
        out += "layer " + std::to_string(l) + "\n";
        for (std::size_t h = 0; h < lt.lambda.size(); ++h) {
            for (std::size_t q = 0; q < lt.lambda[h].rows; ++q) {
                out += "lambda head=" + std::to_string(h) + " qrow=" + std::to_string(q) +
                       " value=" + fmt9(lt.lambda[h](q, 0)) + "\n";
            }
        }
        out += "S\n";
        append_matrix_tsv(out, lt.similarity);
        out += "Agg\n";
        append_matrix_tsv(out, lt.aggregated);
    }
    return out;
}

} // namespace mkgc
