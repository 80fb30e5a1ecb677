#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mkgc/autodiff.hpp"
#include "mkgc/config.hpp"
#include "mkgc/encoders.hpp"

namespace mkgc {

// One fused layer: a textual block, a visual block, and the fusion projection
// that injects aggregated visual states into the textual FFN.
struct MEncoderLayer {
    BlockWeights text;
    BlockWeights vis;
    Parameter w3; // d x d_m

    MEncoderLayer() = default;
    MEncoderLayer(const std::string& prefix, const ModelConfig& cfg);
    void collect(std::vector<Parameter*>& out);
};

// Recorded fusion intermediates of one layer.
struct LayerTrace {
    std::vector<Matrix2D> lambda; // per head: m x 1, prefix attention mass per visual query
    Matrix2D similarity;          // S: n x m
    Matrix2D aggregated;          // Agg: n x d
};

struct FusionTrace {
    std::vector<LayerTrace> layers;
    std::string to_text() const;
};

// Attention mass assigned to the textual prefix keys, one scalar per query
// row: sum_i exp(q k_t_i / sqrt(d_h)) / (sum_i exp(q k_t_i / sqrt(d_h)) +
// sum_j exp(q k_v_j / sqrt(d_h))). Returned as a q_rows x 1 column.
Matrix2D lambda_weights(const Matrix2D& q, const Matrix2D& k_v, const Matrix2D& k_t);

// --- prefix-guided interaction --------------------------------------------------

struct PgiResult {
    ad::NodeRef h_t; // textual stream after attention + its LN/residual
    ad::NodeRef h_v; // visual stream after hybrid attention + residual
    std::vector<ad::NodeRef> visual_heads; // per-head visual attention, pre-W_o
    std::vector<Matrix2D> lambdas;         // per-head prefix mass (m x 1)
};

// Textual side: standard self-attention. Visual side: attention over the
// hybrid key/value sequence [visual; textual]. `mask_text_prefix` forces the
// textual prefix logits to -1e30 (degenerate-case testing only).
PgiResult pgi(ad::Tape& tape, const ad::NodeRef& h_t, const ad::NodeRef& h_v,
              MEncoderLayer& layer, const ModelConfig& cfg, bool mask_text_prefix = false);

// Verification twin of the visual branch: per head,
// (1 - lambda) * Attn(Q_v, K_v, V_v) + lambda * Attn(Q_v, K_t, V_t), pre-W_o.
// Computed without the hybrid concatenation.
std::vector<Matrix2D> pgi_interpolated(const Matrix2D& h_t, const Matrix2D& h_v,
                                       MEncoderLayer& layer, const ModelConfig& cfg);

// --- correlation-aware fusion ----------------------------------------------------

Matrix2D caf_similarity(const Matrix2D& x_t, const Matrix2D& x_v);
Matrix2D caf_aggregate(const Matrix2D& s, const Matrix2D& x_v);
// ReLU(x_t W1 + b1 + agg W3) W2 + b2 on plain matrices.
Matrix2D caf_ffn(const Matrix2D& x_t, const Matrix2D& agg, MEncoderLayer& layer);

// Graph route: similarity, softmax aggregation and the fused FFN in one
// builder; records S/Agg into the trace when given.
ad::NodeRef caf_fused_ffn(ad::Tape& tape, const ad::NodeRef& x_t, const ad::NodeRef& x_v,
                          MEncoderLayer& layer, LayerTrace* trace = nullptr);

// --- full fused stack -------------------------------------------------------------

std::pair<ad::NodeRef, ad::NodeRef> m_encoder_layer_forward(ad::Tape& tape,
                                                            const ad::NodeRef& h_t,
                                                            const ad::NodeRef& h_v,
                                                            MEncoderLayer& layer,
                                                            const ModelConfig& cfg,
                                                            LayerTrace* trace);

std::pair<ad::NodeRef, ad::NodeRef> m_encoder_forward(ad::Tape& tape, const ad::NodeRef& h_t0,
                                                      const ad::NodeRef& h_v0,
                                                      std::vector<MEncoderLayer>& layers,
                                                      const ModelConfig& cfg,
                                                      FusionTrace* trace = nullptr);

} // namespace mkgc
