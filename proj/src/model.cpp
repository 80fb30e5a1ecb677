#include "mkgc/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

namespace mkgc {

ModelWeights::ModelWeights(const ModelConfig& cfg_, std::size_t base_vocab, std::size_t n_entities,
                           std::vector<std::string> relation_label_names,
                           std::vector<std::string> tag_names)
    : cfg(cfg_),
      word_base("embed.words", base_vocab, cfg_.d),
      entity_rows("embed.entities", std::max<std::size_t>(n_entities, 1), cfg_.d),
      t_pos("embed.t_pos", cfg_.max_seq_len, cfg_.d),
      patch_proj("embed.patch_proj", cfg_.patch_dim(), cfg_.d),
      v_pos("embed.v_pos", cfg_.visual_tokens(), cfg_.d),
      crf("crf", cfg_.d, tag_names.empty() ? std::vector<std::string>{"O"} : std::move(tag_names)) {
    cfg.validate();
    for (std::size_t l = 0; l < cfg.t_depth(); ++l) {
        t_blocks.emplace_back("t_enc." + std::to_string(l), cfg);
    }
    for (std::size_t l = 0; l < cfg.v_depth(); ++l) {
        v_blocks.emplace_back("v_enc." + std::to_string(l), cfg);
    }
    for (std::size_t l = 0; l < cfg.l_m; ++l) {
        m_layers.emplace_back("m_enc." + std::to_string(l), cfg);
    }
    if (relation_label_names.empty()) relation_label_names.push_back("none");
    rel_labels.names = std::move(relation_label_names);
    rel_labels.weight = Parameter("head.rel_w", cfg.d, rel_labels.names.size());
}

std::vector<Parameter*> ModelWeights::params() {
    std::vector<Parameter*> out;
    out.push_back(&word_base);
    out.push_back(&entity_rows);
    out.push_back(&t_pos);
    out.push_back(&patch_proj);
    out.push_back(&v_pos);
    for (auto& b : t_blocks) b.collect(out);
    for (auto& b : v_blocks) b.collect(out);
    for (auto& l : m_layers) l.collect(out);
    out.push_back(&rel_labels.weight);
    out.push_back(&crf.transitions);
    out.push_back(&crf.emission_proj);
    return out;
}

void ModelWeights::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double s = 0.02;
    init_normal(word_base.value, rng, s);
    init_normal(entity_rows.value, rng, s);
    init_normal(t_pos.value, rng, s);
    init_normal(patch_proj.value, rng, s);
    init_normal(v_pos.value, rng, s);
    for (auto& b : t_blocks) init_block(b, rng);
    for (auto& b : v_blocks) init_block(b, rng);
    for (auto& l : m_layers) {
        init_block(l.text, rng);
        init_block(l.vis, rng);
        init_normal(l.w3.value, rng, s);
    }
    init_normal(rel_labels.weight.value, rng, s);
    init_normal(crf.transitions.value, rng, s);
    init_normal(crf.emission_proj.value, rng, s);
}

void ModelWeights::zero_grads() {
    for (Parameter* p : params()) p->zero_grad();
}

void ModelWeights::set_frozen(bool frozen) {
    for (Parameter* p : params()) p->frozen = frozen;
}

void ModelWeights::freeze_all_except_entity_rows() {
    set_frozen(true);
    entity_rows.frozen = false;
}

Model::Model(ModelConfig cfg, Vocabulary v, EntityVocabulary e, RelationRegistry r,
             std::vector<std::string> relation_label_names, std::vector<std::string> tag_names)
    : vocab(std::move(v)),
      entities(std::move(e)),
      relations(std::move(r)),
      weights(cfg, static_cast<std::size_t>(vocab.base_size()),
              static_cast<std::size_t>(entities.size()), std::move(relation_label_names),
              std::move(tag_names)) {
    if (vocab.entity_count() != entities.size()) {
        throw state_error("vocabulary entity range does not match the entity records");
    }
}

Vocabulary build_vocabulary(const EntityVocabulary& entities, const RelationRegistry& relations,
                            const std::vector<SequenceExample>& corpus) {
    Vocabulary vocab;
    register_template_words(vocab);
    for (const auto& rec : entities.records()) vocab.add_words(rec.desc_tokens);
    for (const auto& name : relations.names) vocab.add_words(tokenize(name));
    for (const auto& ex : corpus) vocab.add_words(ex.tokens);
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(entities.size()));
    for (const auto& rec : entities.records()) ids.push_back(rec.id);
    vocab.register_entities(ids);
    return vocab;
}

StreamOutputs forward_streams(ad::Tape& tape, ModelWeights& w, const std::vector<int>& token_ids,
                              const std::vector<ImageTensor>& images, FusionTrace* trace) {
    auto x_t = embed_text(tape, token_ids, w.word_base, w.entity_rows, w.t_pos);
    auto x_v = embed_patches(tape, images, w.patch_proj, w.v_pos, w.cfg);
    x_t = t_encoder_forward(tape, x_t, w.t_blocks, w.cfg);
    x_v = v_encoder_forward(tape, x_v, w.v_blocks, w.cfg);
    auto [h_t, h_v] = m_encoder_forward(tape, x_t, x_v, w.m_layers, w.cfg, trace);
    return {h_t, h_v};
}

ad::NodeRef entity_modeling_loss(ad::Tape& tape, Model& model, int entity_index) {
    const auto tpl = build_entity_modeling_input(model.entities, entity_index, model.vocab);
    const auto& images = model.entities.record(entity_index).images;
    auto out = forward_streams(tape, model.weights, tpl.token_ids, images);
    auto h_mask = ad::pick_row(out.text, tpl.mask_index);
    auto logits = masked_entity_logits(tape, h_mask, tape.param(model.weights.entity_rows));
    return ad::cross_entropy_loss(logits, entity_index);
}

ad::NodeRef link_query_loss(ad::Tape& tape, Model& model, int known_entity, int relation,
                            const std::vector<double>& entity_targets, QueryDirection direction) {
    if (entity_targets.size() != static_cast<std::size_t>(model.entities.size())) {
        throw value_error("link_query_loss: one target per entity required");
    }
    const auto rel_tokens =
        tokenize(model.relations.names.at(static_cast<std::size_t>(relation)));
    const auto tpl =
        build_triple_query_input(model.entities, known_entity, rel_tokens, model.vocab, direction);
    const auto& images = model.entities.record(known_entity).images;
    auto out = forward_streams(tape, model.weights, tpl.token_ids, images);
    auto h_mask = ad::pick_row(out.text, tpl.mask_index);
    auto logits = masked_entity_logits(tape, h_mask, tape.param(model.weights.entity_rows));
    return ad::bce_multilabel_loss(logits, entity_targets);
}

std::vector<int> build_re_token_ids(const SequenceExample& ex, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.push_back(Vocabulary::kCls);
    // Close markers go before open ones so adjacent spans nest correctly.
    for (std::size_t i = 0; i <= ex.tokens.size(); ++i) {
        if (i == ex.head_end) ids.push_back(Vocabulary::kHeadClose);
        if (i == ex.tail_end) ids.push_back(Vocabulary::kTailClose);
        if (i == ex.head_start) ids.push_back(Vocabulary::kHeadOpen);
        if (i == ex.tail_start) ids.push_back(Vocabulary::kTailOpen);
        if (i < ex.tokens.size()) ids.push_back(vocab.lookup(ex.tokens[i]));
    }
    ids.push_back(Vocabulary::kSep);
    return ids;
}

namespace {

std::vector<ImageTensor> example_images(const SequenceExample& ex, const ModelConfig& cfg) {
    std::vector<ImageTensor> imgs;
    if (ex.image.size() > 0) {
        imgs.push_back(ex.image);
    } else {
        imgs.emplace_back(cfg.img_h, cfg.img_w, cfg.img_c, 0.0);
    }
    while (imgs.size() < cfg.images_per_entity) imgs.push_back(imgs.back());
    return imgs;
}

std::vector<int> ner_token_ids(const SequenceExample& ex, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.push_back(Vocabulary::kCls);
    for (const auto& t : ex.tokens) ids.push_back(vocab.lookup(t));
    ids.push_back(Vocabulary::kSep);
    return ids;
}

} // namespace

ad::NodeRef re_example_loss(ad::Tape& tape, Model& model, const SequenceExample& ex) {
    const int label = model.weights.rel_labels.index_of(ex.relation);
    const auto ids = build_re_token_ids(ex, model.vocab);
    auto out = forward_streams(tape, model.weights, ids, example_images(ex, model.weights.cfg));
    auto h_cls = ad::pick_row(out.text, 0);
    auto logits = ad::matmul(h_cls, tape.param(model.weights.rel_labels.weight));
    return ad::cross_entropy_loss(logits, label);
}

ad::NodeRef ner_example_loss(ad::Tape& tape, Model& model, const SequenceExample& ex) {
    CRFParams& crf = model.weights.crf;
    std::vector<int> gold;
    gold.reserve(ex.tags.size());
    for (const auto& t : ex.tags) {
        const auto it = std::find(crf.tag_names.begin(), crf.tag_names.end(), t);
        if (it == crf.tag_names.end()) throw vocab_error("unknown tag '" + t + "'");
        gold.push_back(static_cast<int>(it - crf.tag_names.begin()));
    }
    const auto ids = ner_token_ids(ex, model.vocab);
    auto out = forward_streams(tape, model.weights, ids, example_images(ex, model.weights.cfg));
    auto hidden = ad::slice_rows(out.text, 1, 1 + ex.tokens.size());
    auto emissions = ad::matmul(hidden, tape.param(crf.emission_proj));
    return crf_nll_node(tape, emissions, gold, crf);
}

Matrix2D score_all_entities(Model& model, int known_entity, int relation,
                            QueryDirection direction) {
    ad::Tape tape;
    const auto rel_tokens =
        tokenize(model.relations.names.at(static_cast<std::size_t>(relation)));
    const auto tpl =
        build_triple_query_input(model.entities, known_entity, rel_tokens, model.vocab, direction);
    const auto& images = model.entities.record(known_entity).images;
    auto out = forward_streams(tape, model.weights, tpl.token_ids, images);
    auto h_mask = ad::pick_row(out.text, tpl.mask_index);
    return masked_entity_logits(h_mask->value, model.weights.entity_rows.value);
}

int predict_relation(Model& model, const SequenceExample& ex) {
    ad::Tape tape;
    const auto ids = build_re_token_ids(ex, model.vocab);
    auto out = forward_streams(tape, model.weights, ids, example_images(ex, model.weights.cfg));
    const Matrix2D probs =
        relation_classify(ad::pick_row(out.text, 0)->value, model.weights.rel_labels);
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols; ++j) {
        if (probs(0, j) > probs(0, best)) best = j;
    }
    return static_cast<int>(best);
}

std::vector<int> predict_tags(Model& model, const SequenceExample& ex) {
    ad::Tape tape;
    const auto ids = ner_token_ids(ex, model.vocab);
    auto out = forward_streams(tape, model.weights, ids, example_images(ex, model.weights.cfg));
    const Matrix2D emissions =
        matmul(slice_rows(out.text->value, 1, 1 + ex.tokens.size()),
               model.weights.crf.emission_proj.value);
    return crf_viterbi(emissions, model.weights.crf);
}

// --- checkpointing -------------------------------------------------------------------

namespace {

void put_u16_le(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint16_t get_u16_le(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

constexpr std::uint16_t kCheckpointVersion = 1;

} // namespace

void save_checkpoint(ModelWeights& w, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write checkpoint '" + path + "'");
    const auto params = w.params();
    os.write("MKGC", 4);
    put_u16_le(os, kCheckpointVersion);
    put_u32_le(os, static_cast<std::uint32_t>(params.size()));
    for (Parameter* p : params) {
        put_u32_le(os, static_cast<std::uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32_le(os, static_cast<std::uint32_t>(p->value.rows));
        put_u32_le(os, static_cast<std::uint32_t>(p->value.cols));
        for (double v : p->value.data) put_f64_le(os, v);
    }
    if (!os) throw io_error("short write to checkpoint '" + path + "'");
}

void load_checkpoint(ModelWeights& w, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MKGC", 4) != 0) {
        throw parse_error("'" + path + "' is not an MKGC checkpoint");
    }
    const std::uint16_t version = get_u16_le(is);
    if (version != kCheckpointVersion) {
        throw parse_error("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = get_u32_le(is);
    const auto params = w.params();
    std::size_t matched = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32_le(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rows = get_u32_le(is);
        const std::uint32_t cols = get_u32_le(is);
        if (!is) throw parse_error("truncated checkpoint '" + path + "'");
        Matrix2D value(rows, cols);
        for (double& v : value.data) v = get_f64_le(is);
        if (!is) throw parse_error("truncated checkpoint '" + path + "'");
        for (Parameter* p : params) {
            if (p->name == name) {
                if (!p->value.same_shape(value)) {
                    throw shape_error("checkpoint parameter '" + name + "' has shape " +
                                      std::to_string(rows) + "x" + std::to_string(cols) +
                                      ", model expects " + std::to_string(p->value.rows) + "x" +
                                      std::to_string(p->value.cols));
                }
                p->value = std::move(value);
                ++matched;
                break;
            }
        }
    }
    if (matched != params.size()) {
        throw parse_error("checkpoint '" + path + "' covers " + std::to_string(matched) + " of " +
                          std::to_string(params.size()) + " parameters");
    }
}

} // namespace mkgc
