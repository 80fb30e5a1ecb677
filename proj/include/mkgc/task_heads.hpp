#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mkgc/autodiff.hpp"
#include "mkgc/image.hpp"
#include "mkgc/matrix.hpp"
#include "mkgc/numerics.hpp"
#include "mkgc/vocab.hpp"

namespace mkgc {

// --- entities -------------------------------------------------------------------

struct EntityRecord {
    std::string id;
    std::string name;
    std::vector<std::string> desc_tokens;
    std::vector<std::string> image_paths;
    std::vector<ImageTensor> images; // normalized to exactly o tensors
};

// Entity index i corresponds to embedding-table row i and to the dedicated
// vocabulary token <id> at position base_size + i.
class EntityVocabulary {
public:
    void add(EntityRecord rec);
    int index_of(const std::string& id) const; // throws vocab_error
    bool contains(const std::string& id) const;
    const EntityRecord& record(int index) const;
    int size() const { return static_cast<int>(records_.size()); }
    const std::vector<EntityRecord>& records() const { return records_; }

private:
    std::vector<EntityRecord> records_;
    std::unordered_map<std::string, int> by_id_;
};

// --- templates ------------------------------------------------------------------

struct TemplateResult {
    std::vector<int> token_ids;
    std::size_t mask_index;
};

// Words used by the prompt templates; must be registered before entities.
void register_template_words(Vocabulary& vocab);

// [CLS] d_e is the description of [MASK] [SEP]
TemplateResult build_entity_modeling_input(const EntityVocabulary& entities, int entity_index,
                                           const Vocabulary& vocab);

enum class QueryDirection { tail, head };

// tail: [CLS] <e_h> d_eh [SEP] r [SEP] [MASK] [SEP]
// head: [CLS] [MASK] [SEP] r [SEP] <e_t> d_et [SEP]
TemplateResult build_triple_query_input(const EntityVocabulary& entities, int entity_index,
                                        const std::vector<std::string>& relation_tokens,
                                        const Vocabulary& vocab, QueryDirection direction);

// --- scoring heads ----------------------------------------------------------------

// logit_i = <h_mask, E_i> over the entity embedding rows.
Matrix2D masked_entity_logits(const Matrix2D& h_mask, const Matrix2D& entity_rows);
ad::NodeRef masked_entity_logits(ad::Tape& tape, const ad::NodeRef& h_mask,
                                 const ad::NodeRef& entity_rows);

struct RelationLabelSet {
    std::vector<std::string> names;
    Parameter weight; // d x |classes|

    int index_of(const std::string& name) const; // throws vocab_error
    int size() const { return static_cast<int>(names.size()); }
};

// softmax(W^T h_cls) as a 1 x |classes| distribution.
Matrix2D relation_classify(const Matrix2D& h_cls, const RelationLabelSet& labels);

// --- CRF --------------------------------------------------------------------------

// Linear-chain CRF over a BIO tag set with two virtual start/end tags holding
// learned boundary transitions. Tag indices: 0..Y-1 real tags, Y start, Y+1 end.
struct CRFParams {
    std::vector<std::string> tag_names;
    Parameter transitions;   // (Y+2) x (Y+2)
    Parameter emission_proj; // d x Y
    bool hard_constraints = false;

    CRFParams() = default;
    CRFParams(const std::string& prefix, std::size_t d, std::vector<std::string> tags);
    int num_tags() const { return static_cast<int>(tag_names.size()); }
    int start_index() const { return num_tags(); }
    int end_index() const { return num_tags() + 1; }
    // Learned transitions, with -1e30 added to BIO-illegal moves when
    // hard_constraints is on.
    Matrix2D effective_transitions() const;
};

// True when `to` may follow `from` under BIO (from == -1 means sequence start).
bool bio_transition_allowed(const std::vector<std::string>& tag_names, int from, int to);
bool bio_sequence_valid(const std::vector<std::string>& tag_names, const std::vector<int>& tags);

double crf_score(const Matrix2D& emissions, const std::vector<int>& tags, const Matrix2D& trans);
double crf_log_partition(const Matrix2D& emissions, const CRFParams& params);
std::vector<int> crf_viterbi(const Matrix2D& emissions, const CRFParams& params);
double crf_nll(const Matrix2D& emissions, const std::vector<int>& gold_tags, const CRFParams& params);

// Autodiff node: NLL of the gold sequence given an emissions node and the
// transition parameter. Backward uses forward-backward marginals.
ad::NodeRef crf_nll_node(ad::Tape& tape, const ad::NodeRef& emissions,
                         const std::vector<int>& gold_tags, CRFParams& params);

// Spans as (start, end) half-open token ranges with a type, from BIO tags.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string type;
    bool operator==(const Span& o) const {
        return start == o.start && end == o.end && type == o.type;
    }
    bool operator<(const Span& o) const {
        if (start != o.start) return start < o.start;
        if (end != o.end) return end < o.end;
        return type < o.type;
    }
};

std::vector<Span> extract_spans(const std::vector<std::string>& tags);

} // namespace mkgc
