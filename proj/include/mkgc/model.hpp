#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mkgc/config.hpp"
#include "mkgc/data.hpp"
#include "mkgc/encoders.hpp"
#include "mkgc/m_encoder.hpp"
#include "mkgc/task_heads.hpp"
#include "mkgc/vocab.hpp"

namespace mkgc {

// Every learnable parameter of the dual-stream network plus the task heads.
struct ModelWeights {
    ModelConfig cfg;
    Parameter word_base;   // base vocab x d
    Parameter entity_rows; // |E| x d, appended entity embeddings
    Parameter t_pos;       // max_seq_len x d
    Parameter patch_proj;  // P^2*C x d
    Parameter v_pos;       // m x d
    std::vector<BlockWeights> t_blocks;
    std::vector<BlockWeights> v_blocks;
    std::vector<MEncoderLayer> m_layers;
    RelationLabelSet rel_labels;
    CRFParams crf;

    ModelWeights(const ModelConfig& cfg, std::size_t base_vocab, std::size_t n_entities,
                 std::vector<std::string> relation_label_names, std::vector<std::string> tag_names);

    std::vector<Parameter*> params(); // fixed registration order
    void init(std::uint64_t seed);
    void zero_grads();
    void set_frozen(bool frozen);
    void freeze_all_except_entity_rows();
};

// Weights plus the symbol tables they were built against.
struct Model {
    Vocabulary vocab;
    EntityVocabulary entities;
    RelationRegistry relations; // KG relations, used in query templates
    ModelWeights weights;

    Model(ModelConfig cfg, Vocabulary v, EntityVocabulary e, RelationRegistry r,
          std::vector<std::string> relation_label_names, std::vector<std::string> tag_names);
};

// Vocabulary over template words, entity descriptions/tokens, relation names
// and corpus tokens. Entities are registered last (contiguous trailing range).
Vocabulary build_vocabulary(const EntityVocabulary& entities, const RelationRegistry& relations,
                            const std::vector<SequenceExample>& corpus);

struct StreamOutputs {
    ad::NodeRef text; // n x d
    ad::NodeRef vis;  // m x d
};

StreamOutputs forward_streams(ad::Tape& tape, ModelWeights& w, const std::vector<int>& token_ids,
                              const std::vector<ImageTensor>& images, FusionTrace* trace = nullptr);

// --- per-task losses (graph-building) ----------------------------------------------

// Cross entropy over all entities at the [MASK] of the entity-modeling template.
ad::NodeRef entity_modeling_loss(ad::Tape& tape, Model& model, int entity_index);

// Multilabel BCE over all entities at the [MASK] of a triple query.
ad::NodeRef link_query_loss(ad::Tape& tape, Model& model, int known_entity, int relation,
                            const std::vector<double>& entity_targets, QueryDirection direction);

// [CLS] softmax classification.
ad::NodeRef re_example_loss(ad::Tape& tape, Model& model, const SequenceExample& ex);
// CRF negative log likelihood over the token tags.
ad::NodeRef ner_example_loss(ad::Tape& tape, Model& model, const SequenceExample& ex);

// --- task-level inference (plain values) --------------------------------------------

// Entity scores for one query; direction tells which side is masked.
Matrix2D score_all_entities(Model& model, int known_entity, int relation,
                            QueryDirection direction);
int predict_relation(Model& model, const SequenceExample& ex);
std::vector<int> predict_tags(Model& model, const SequenceExample& ex);

// Tokens with <h>..</h>, <t>..</t> markers inserted around the argument spans.
std::vector<int> build_re_token_ids(const SequenceExample& ex, const Vocabulary& vocab);

// --- checkpointing --------------------------------------------------------------------

void save_checkpoint(ModelWeights& w, const std::string& path);
void load_checkpoint(ModelWeights& w, const std::string& path);

} // namespace mkgc
