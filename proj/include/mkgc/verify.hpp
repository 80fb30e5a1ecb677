#pragma once

#include <set>
#include <string>
#include <vector>

#include "mkgc/metrics.hpp"
#include "mkgc/model.hpp"

namespace mkgc::verify {

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// --- brute-force oracles (independent of the production paths) -------------------

double brute_force_log_partition(const Matrix2D& emissions, const Matrix2D& trans);
// Lexicographically-smallest maximizer, matching the backpointer tie rule.
std::vector<int> brute_force_viterbi(const Matrix2D& emissions, const Matrix2D& trans);
std::size_t brute_force_rank(const std::vector<double>& scores, std::size_t gold,
                             const std::set<std::size_t>& filtered_out);
PrfSummary brute_force_micro_f1(const std::vector<int>& pred, const std::vector<int>& gold);
PrfSummary brute_force_span_f1(const std::vector<std::vector<std::string>>& pred,
                               const std::vector<std::vector<std::string>>& gold);

// --- shared fixtures ----------------------------------------------------------------

// d=8, two heads, d_m=16, one layer per stack, 4x4x1 images with P=2, o=2.
ModelConfig toy_config();
// Self-contained model over a handful of in-memory entities, relations,
// relation classes and BIO tags, deterministically initialized.
Model make_toy_model(const ModelConfig& cfg, std::uint64_t seed);
SequenceExample toy_re_example(const ModelConfig& cfg);
SequenceExample toy_ner_example(const ModelConfig& cfg);

// Per-parameter relative error ||a - b|| / (||a|| + ||b|| + 1e-10).
double gradient_rel_error(const Matrix2D& analytic, const Matrix2D& numeric);

// --- property suites -----------------------------------------------------------------

PropertyResult check_numerics();
PropertyResult check_encoder_properties();
PropertyResult check_pgi_identity();
PropertyResult check_gradient_full(bool mutate_w3 = false);
PropertyResult check_gradient_subnets();
PropertyResult check_crf_oracle();
PropertyResult check_metric_oracles();
PropertyResult check_perm_invariance();
PropertyResult check_ablation_reduction();
PropertyResult check_freeze_contract();
PropertyResult check_determinism();
PropertyResult check_templates();
PropertyResult check_kshot_and_store();

struct Options {
    bool mutate_w3 = false; // negative control: corrupt the W3 gradient path
    std::string only;       // run a single named suite
};

std::vector<std::string> suite_names();
std::vector<PropertyResult> run_suites(const Options& opt);

} // namespace mkgc::verify
