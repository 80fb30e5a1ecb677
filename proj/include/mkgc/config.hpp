#pragma once

#include <cstddef>
#include <string>

#include "mkgc/errors.hpp"

namespace mkgc {

enum class Ablation { none, no_pgi, no_caf, independent };

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

// Architectural hyperparameters shared by both streams (d_T = d_V = d).
struct ModelConfig {
    std::size_t d = 32;        // hidden width
    std::size_t n_heads = 4;   // N_h
    std::size_t d_m = 64;      // FFN inner width
    std::size_t l_t = 1;       // unimodal textual layers
    std::size_t l_v = 1;       // unimodal visual layers
    std::size_t l_m = 3;       // fused layers
    std::size_t img_h = 8;
    std::size_t img_w = 8;
    std::size_t img_c = 1;
    std::size_t patch = 4;     // P
    std::size_t images_per_entity = 2; // o
    std::size_t max_seq_len = 64;
    double eps = 1e-5;
    Ablation ablation = Ablation::none;

    std::size_t head_dim() const { return d / n_heads; }
    std::size_t patches_per_image() const { return (img_h / patch) * (img_w / patch); } // u
    std::size_t visual_tokens() const { return patches_per_image() * images_per_entity; } // m
    std::size_t patch_dim() const { return patch * patch * img_c; } // P^2 * C

    // Depth of the unimodal stacks actually instantiated; the independent
    // variant appends the fused layers after full-depth unimodal stacks
    // instead of replacing their top layers.
    std::size_t t_depth() const { return ablation == Ablation::independent ? l_t + l_m : l_t; }
    std::size_t v_depth() const { return ablation == Ablation::independent ? l_v + l_m : l_v; }

    void validate() const;
};

} // namespace mkgc
