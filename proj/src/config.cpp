#include "mkgc/config.hpp"

namespace mkgc {

Ablation ablation_from_string(const std::string& s) {
    if (s.empty() || s == "none") return Ablation::none;
    if (s == "no_pgi") return Ablation::no_pgi;
    if (s == "no_caf") return Ablation::no_caf;
    if (s == "independent") return Ablation::independent;
    throw usage_error("unknown ablation '" + s + "' (expected no_pgi, no_caf or independent)");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::no_pgi: return "no_pgi";
        case Ablation::no_caf: return "no_caf";
        case Ablation::independent: return "independent";
    }
    return "none";
}

void ModelConfig::validate() const {
    if (d == 0 || n_heads == 0 || d % n_heads != 0) {
        throw shape_error("hidden width d must be a positive multiple of n_heads");
    }
    if (patch == 0 || img_h % patch != 0 || img_w % patch != 0) {
        throw shape_error("image sides must be divisible by the patch size");
    }
    if (l_m < 1) throw shape_error("at least one fused layer is required");
    if (images_per_entity == 0) throw shape_error("images_per_entity must be >= 1");
    if (eps <= 0.0) throw value_error("eps must be positive");
    if (max_seq_len == 0) throw shape_error("max_seq_len must be >= 1");
}

} // namespace mkgc
