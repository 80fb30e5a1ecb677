#pragma once

#include <optional>
#include <random>
#include <vector>

#include "mkgc/autodiff.hpp"
#include "mkgc/config.hpp"
#include "mkgc/image.hpp"
#include "mkgc/matrix.hpp"
#include "mkgc/numerics.hpp"

namespace mkgc {

// Weights of one transformer block. Each head carries its own d x d_h
// query/key/value projections.
struct BlockWeights {
    std::vector<Parameter> wq, wk, wv; // n_heads entries, d x d_h
    Parameter wo;                      // d x d
    Parameter w1, b1, w2, b2;          // d x d_m, 1 x d_m, d_m x d, 1 x d
    Parameter ln1_gamma, ln1_beta;     // attention-side LN
    Parameter ln2_gamma, ln2_beta;     // FFN-side LN

    BlockWeights() = default;
    BlockWeights(const std::string& prefix, const ModelConfig& cfg);
    void collect(std::vector<Parameter*>& out);
};

void init_normal(Matrix2D& m, std::mt19937_64& rng, double stddev);
void init_block(BlockWeights& b, std::mt19937_64& rng);

// --- patching ----------------------------------------------------------------

// Rows are flattened non-overlapping P x P x C patches in raster order.
Matrix2D patchify(const ImageTensor& image, std::size_t patch);
ImageTensor unpatchify(const Matrix2D& patches, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t patch);
// Concatenated patch matrices of all images (image j occupies rows [j*u, (j+1)*u)).
Matrix2D patchify_all(const std::vector<ImageTensor>& images, const ModelConfig& cfg);

// --- pure kernels -------------------------------------------------------------

// softmax(Q K^T / sqrt(K.cols)) V; the optional mask adds -1e30 to the logits
// of masked key positions before the softmax.
Matrix2D attention(const Matrix2D& q, const Matrix2D& k, const Matrix2D& v,
                   const std::vector<bool>* key_mask = nullptr);

// --- graph builders -----------------------------------------------------------

ad::NodeRef embed_text(ad::Tape& tape, const std::vector<int>& token_ids,
                       Parameter& word_base, Parameter& entity_rows, Parameter& t_pos);

ad::NodeRef embed_patches(ad::Tape& tape, const std::vector<ImageTensor>& images,
                          Parameter& patch_proj, Parameter& v_pos, const ModelConfig& cfg);

ad::NodeRef multi_head_attention(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w,
                                 const ModelConfig& cfg);

ad::NodeRef ffn(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w);

// Post-LN block: x = LN(MHA(x)) + x; x = LN(FFN(x)) + x.
ad::NodeRef t_block(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w, const ModelConfig& cfg);
// Pre-LN block: x = MHA(LN(x)) + x; x = FFN(LN(x)) + x.
ad::NodeRef v_block(ad::Tape& tape, const ad::NodeRef& x, BlockWeights& w, const ModelConfig& cfg);

ad::NodeRef t_encoder_forward(ad::Tape& tape, const ad::NodeRef& x0,
                              std::vector<BlockWeights>& blocks, const ModelConfig& cfg);
ad::NodeRef v_encoder_forward(ad::Tape& tape, const ad::NodeRef& x0,
                              std::vector<BlockWeights>& blocks, const ModelConfig& cfg);

// Plain-matrix wrappers used by tests and the verification suites.
Matrix2D multi_head_attention_value(const Matrix2D& x, BlockWeights& w, const ModelConfig& cfg);
Matrix2D ffn_value(const Matrix2D& x, BlockWeights& w);
Matrix2D t_encoder_value(const Matrix2D& x0, std::vector<BlockWeights>& blocks, const ModelConfig& cfg);
Matrix2D v_encoder_value(const Matrix2D& x0, std::vector<BlockWeights>& blocks, const ModelConfig& cfg);

} // namespace mkgc
