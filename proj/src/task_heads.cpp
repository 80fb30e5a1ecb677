#include "mkgc/task_heads.hpp"

#include <algorithm>
#include <cmath>

namespace mkgc {

void EntityVocabulary::add(EntityRecord rec) {
    if (by_id_.count(rec.id)) throw vocab_error("duplicate entity id '" + rec.id + "'");
    by_id_.emplace(rec.id, static_cast<int>(records_.size()));
    records_.push_back(std::move(rec));
}

int EntityVocabulary::index_of(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw vocab_error("unknown entity '" + id + "'");
    return it->second;
}

bool EntityVocabulary::contains(const std::string& id) const { return by_id_.count(id) > 0; }

const EntityRecord& EntityVocabulary::record(int index) const {
    if (index < 0 || index >= size()) throw vocab_error("entity index out of range");
    return records_[static_cast<std::size_t>(index)];
}

void register_template_words(Vocabulary& vocab) {
    vocab.add_words({"is", "the", "description", "of"});
}

TemplateResult build_entity_modeling_input(const EntityVocabulary& entities, int entity_index,
                                           const Vocabulary& vocab) {
    const EntityRecord& rec = entities.record(entity_index);
    TemplateResult res;
    res.token_ids.push_back(Vocabulary::kCls);
    for (const auto& t : rec.desc_tokens) res.token_ids.push_back(vocab.lookup(t));
    res.token_ids.push_back(vocab.lookup("is"));
    res.token_ids.push_back(vocab.lookup("the"));
    res.token_ids.push_back(vocab.lookup("description"));
    res.token_ids.push_back(vocab.lookup("of"));
    res.mask_index = res.token_ids.size();
    res.token_ids.push_back(Vocabulary::kMask);
    res.token_ids.push_back(Vocabulary::kSep);
    return res;
}

TemplateResult build_triple_query_input(const EntityVocabulary& entities, int entity_index,
                                        const std::vector<std::string>& relation_tokens,
                                        const Vocabulary& vocab, QueryDirection direction) {
    const EntityRecord& rec = entities.record(entity_index);
    TemplateResult res;
    res.token_ids.push_back(Vocabulary::kCls);
    if (direction == QueryDirection::tail) {
        res.token_ids.push_back(vocab.entity_token_id(entity_index));
        for (const auto& t : rec.desc_tokens) res.token_ids.push_back(vocab.lookup(t));
        res.token_ids.push_back(Vocabulary::kSep);
        for (const auto& t : relation_tokens) res.token_ids.push_back(vocab.lookup(t));
        res.token_ids.push_back(Vocabulary::kSep);
        res.mask_index = res.token_ids.size();
        res.token_ids.push_back(Vocabulary::kMask);
        res.token_ids.push_back(Vocabulary::kSep);
    } else {
        res.mask_index = res.token_ids.size();
        res.token_ids.push_back(Vocabulary::kMask);
        res.token_ids.push_back(Vocabulary::kSep);
        for (const auto& t : relation_tokens) res.token_ids.push_back(vocab.lookup(t));
        res.token_ids.push_back(Vocabulary::kSep);
        res.token_ids.push_back(vocab.entity_token_id(entity_index));
        for (const auto& t : rec.desc_tokens) res.token_ids.push_back(vocab.lookup(t));
        res.token_ids.push_back(Vocabulary::kSep);
    }
    return res;
}

Matrix2D masked_entity_logits(const Matrix2D& h_mask, const Matrix2D& entity_rows) {
    if (h_mask.rows != 1 || h_mask.cols != entity_rows.cols) {
        throw shape_error("masked_entity_logits: expected 1 x d state");
    }
    return matmul(h_mask, transpose(entity_rows));
}

ad::NodeRef masked_entity_logits(ad::Tape& tape, const ad::NodeRef& h_mask,
                                 const ad::NodeRef& entity_rows) {
    (void)tape;
    return ad::matmul(h_mask, ad::transpose(entity_rows));
}

int RelationLabelSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw vocab_error("unknown relation label '" + name + "'");
}

Matrix2D relation_classify(const Matrix2D& h_cls, const RelationLabelSet& labels) {
    if (h_cls.rows != 1 || h_cls.cols != labels.weight.value.rows) {
        throw shape_error("relation_classify: expected 1 x d state");
    }
    return softmax_rows(matmul(h_cls, labels.weight.value));
}

// --- CRF -----------------------------------------------------------------------

CRFParams::CRFParams(const std::string& prefix, std::size_t d, std::vector<std::string> tags)
    : tag_names(std::move(tags)),
      transitions(prefix + ".trans", tag_names.size() + 2, tag_names.size() + 2),
      emission_proj(prefix + ".emit", d, tag_names.size()) {}

namespace {

// Splits "B-PER" -> ('B', "PER"); "O" -> ('O', "").
std::pair<char, std::string> split_tag(const std::string& tag) {
    if (tag == "O" || tag == "o") return {'O', ""};
    if (tag.size() >= 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
        return {tag[0], tag.substr(2)};
    }
    throw value_error("tag '" + tag + "' is not BIO-shaped");
}

} // namespace

bool bio_transition_allowed(const std::vector<std::string>& tag_names, int from, int to) {
    const auto [to_kind, to_type] = split_tag(tag_names[static_cast<std::size_t>(to)]);
    if (to_kind != 'I') return true;
    if (from < 0) return false; // I-X cannot open a sequence
    const auto [from_kind, from_type] = split_tag(tag_names[static_cast<std::size_t>(from)]);
    if (from_kind == 'O') return false;
    return from_type == to_type;
}

bool bio_sequence_valid(const std::vector<std::string>& tag_names, const std::vector<int>& tags) {
    int prev = -1;
    for (int t : tags) {
        if (t < 0 || t >= static_cast<int>(tag_names.size())) return false;
        if (!bio_transition_allowed(tag_names, prev, t)) return false;
        prev = t;
    }
    return true;
}

Matrix2D CRFParams::effective_transitions() const {
    Matrix2D t = transitions.value;
    if (!hard_constraints) return t;
    const int y = num_tags();
    for (int j = 0; j < y; ++j) {
        if (!bio_transition_allowed(tag_names, -1, j)) t(static_cast<std::size_t>(start_index()), static_cast<std::size_t>(j)) += -1e30;
        for (int i = 0; i < y; ++i) {
            if (!bio_transition_allowed(tag_names, i, j)) t(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) += -1e30;
        }
    }
    return t;
}

double crf_score(const Matrix2D& emissions, const std::vector<int>& tags, const Matrix2D& trans) {
    const std::size_t n = emissions.rows;
    const std::size_t y = emissions.cols;
    if (tags.size() != n || n == 0) throw value_error("crf_score: tags/emissions mismatch");
    const std::size_t start = y;
    const std::size_t end = y + 1;
    double s = trans(start, static_cast<std::size_t>(tags[0]));
    for (std::size_t t = 0; t < n; ++t) {
        s += emissions(t, static_cast<std::size_t>(tags[t]));
        if (t + 1 < n) s += trans(static_cast<std::size_t>(tags[t]), static_cast<std::size_t>(tags[t + 1]));
    }
    s += trans(static_cast<std::size_t>(tags[n - 1]), end);
    return s;
}

namespace {

// alpha[t][j] = log sum over prefixes ending in tag j at position t.
Matrix2D crf_forward_alphas(const Matrix2D& emissions, const Matrix2D& trans) {
    const std::size_t n = emissions.rows;
    const std::size_t y = emissions.cols;
    const std::size_t start = y;
    Matrix2D alpha(n, y);
    for (std::size_t j = 0; j < y; ++j) alpha(0, j) = trans(start, j) + emissions(0, j);
    std::vector<double> acc(y);
    for (std::size_t t = 1; t < n; ++t) {
        for (std::size_t j = 0; j < y; ++j) {
            for (std::size_t i = 0; i < y; ++i) acc[i] = alpha(t - 1, i) + trans(i, j);
            alpha(t, j) = log_sum_exp(acc) + emissions(t, j);
        }
    }
    return alpha;
}

} // namespace

double crf_log_partition(const Matrix2D& emissions, const CRFParams& params) {
    if (emissions.rows == 0 || emissions.cols != static_cast<std::size_t>(params.num_tags())) {
        throw shape_error("crf_log_partition: emissions must be n x |Y| with n >= 1");
    }
    const Matrix2D trans = params.effective_transitions();
    const Matrix2D alpha = crf_forward_alphas(emissions, trans);
    const std::size_t n = emissions.rows;
    const std::size_t y = emissions.cols;
    std::vector<double> fin(y);
    for (std::size_t j = 0; j < y; ++j) {
        fin[j] = alpha(n - 1, j) + trans(j, static_cast<std::size_t>(params.end_index()));
    }
    return log_sum_exp(fin);
}

std::vector<int> crf_viterbi(const Matrix2D& emissions, const CRFParams& params) {
    const std::size_t n = emissions.rows;
    const std::size_t y = emissions.cols;
    if (n == 0 || y != static_cast<std::size_t>(params.num_tags())) {
        throw shape_error("crf_viterbi: emissions must be n x |Y| with n >= 1");
    }
    const Matrix2D trans = params.effective_transitions();
    const std::size_t start = y;
    const std::size_t end = y + 1;

    Matrix2D score(n, y);
    std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(y, 0));
    for (std::size_t j = 0; j < y; ++j) score(0, j) = trans(start, j) + emissions(0, j);
    for (std::size_t t = 1; t < n; ++t) {
        for (std::size_t j = 0; j < y; ++j) {
            double best = score(t - 1, 0) + trans(0, j);
            std::size_t best_i = 0;
            for (std::size_t i = 1; i < y; ++i) {
                const double s = score(t - 1, i) + trans(i, j);
                if (s > best) { // strict: ties keep the lower tag index
                    best = s;
                    best_i = i;
                }
            }
            score(t, j) = best + emissions(t, j);
            back[t][j] = best_i;
        }
    }
    std::size_t best_last = 0;
    double best = score(n - 1, 0) + trans(0, end);
    for (std::size_t j = 1; j < y; ++j) {
        const double s = score(n - 1, j) + trans(j, end);
        if (s > best) {
            best = s;
            best_last = j;
        }
    }
    std::vector<int> tags(n);
    tags[n - 1] = static_cast<int>(best_last);
    for (std::size_t t = n - 1; t > 0; --t) {
        tags[t - 1] = static_cast<int>(back[t][static_cast<std::size_t>(tags[t])]);
    }
    return tags;
}

double crf_nll(const Matrix2D& emissions, const std::vector<int>& gold_tags, const CRFParams& params) {
    if (params.hard_constraints && !bio_sequence_valid(params.tag_names, gold_tags)) {
        throw value_error("gold tag sequence violates the BIO constraints");
    }
    return crf_log_partition(emissions, params) -
           crf_score(emissions, gold_tags, params.effective_transitions());
}

ad::NodeRef crf_nll_node(ad::Tape& tape, const ad::NodeRef& emissions,
                         const std::vector<int>& gold_tags, CRFParams& params) {
    const double nll = crf_nll(emissions->value, gold_tags, params);
    auto trans_node = tape.param(params.transitions);
    Matrix2D v(1, 1);
    v(0, 0) = nll;
    const CRFParams* p = &params;
    return tape.make(std::move(v), {emissions, trans_node}, [gold_tags, p](ad::Node& n) {
        const ad::NodeRef& em = n.parents[0];
        const ad::NodeRef& tr = n.parents[1];
        const double g = n.grad(0, 0);
        const Matrix2D& e = em->value;
        const std::size_t nn = e.rows;
        const std::size_t y = e.cols;
        const Matrix2D trans = p->effective_transitions();
        const std::size_t start = y;
        const std::size_t end = y + 1;

        // forward/backward log messages
        Matrix2D alpha(nn, y), beta(nn, y);
        std::vector<double> acc(y);
        for (std::size_t j = 0; j < y; ++j) alpha(0, j) = trans(start, j) + e(0, j);
        for (std::size_t t = 1; t < nn; ++t) {
            for (std::size_t j = 0; j < y; ++j) {
                for (std::size_t i = 0; i < y; ++i) acc[i] = alpha(t - 1, i) + trans(i, j);
                alpha(t, j) = log_sum_exp(acc) + e(t, j);
            }
        }
        for (std::size_t j = 0; j < y; ++j) beta(nn - 1, j) = trans(j, end);
        for (std::size_t t = nn - 1; t > 0; --t) {
            for (std::size_t i = 0; i < y; ++i) {
                for (std::size_t j = 0; j < y; ++j) {
                    acc[j] = trans(i, j) + e(t, j) + beta(t, j);
                }
                beta(t - 1, i) = log_sum_exp(acc);
            }
        }
        std::vector<double> fin(y);
        for (std::size_t j = 0; j < y; ++j) fin[j] = alpha(nn - 1, j) + trans(j, end);
        const double log_z = log_sum_exp(fin);

        // d nll / d emissions = unary marginal - gold indicator
        if (em->needs_grad) {
            for (std::size_t t = 0; t < nn; ++t) {
                for (std::size_t j = 0; j < y; ++j) {
                    double m = std::exp(alpha(t, j) + beta(t, j) - log_z);
                    if (gold_tags[t] == static_cast<int>(j)) m -= 1.0;
                    em->grad(t, j) += g * m;
                }
            }
        }
        // d nll / d transitions = pairwise marginals - gold transition counts
        if (tr->needs_grad) {
            for (std::size_t j = 0; j < y; ++j) {
                double m0 = std::exp(trans(start, j) + e(0, j) + beta(0, j) - log_z);
                if (gold_tags[0] == static_cast<int>(j)) m0 -= 1.0;
                tr->grad(start, j) += g * m0;
                double mn = std::exp(alpha(nn - 1, j) - log_z + trans(j, end));
                if (gold_tags[nn - 1] == static_cast<int>(j)) mn -= 1.0;
                tr->grad(j, end) += g * mn;
            }
            for (std::size_t t = 0; t + 1 < nn; ++t) {
                for (std::size_t i = 0; i < y; ++i) {
                    for (std::size_t j = 0; j < y; ++j) {
                        double m = std::exp(alpha(t, i) + trans(i, j) + e(t + 1, j) +
                                            beta(t + 1, j) - log_z);
                        if (gold_tags[t] == static_cast<int>(i) &&
                            gold_tags[t + 1] == static_cast<int>(j)) {
                            m -= 1.0;
                        }
                        tr->grad(i, j) += g * m;
                    }
                }
            }
        }
    });
}

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
    std::vector<Span> spans;
    std::size_t i = 0;
    while (i < tags.size()) {
        const auto [kind, type] = split_tag(tags[i]);
        if (kind == 'O') {
            ++i;
            continue;
        }
        // B-X opens a span; an orphan I-X (after O, start, or another type)
        // is treated as opening one as well.
        Span s;
        s.start = i;
        s.type = type;
        ++i;
        while (i < tags.size()) {
            const auto [k2, t2] = split_tag(tags[i]);
            if (k2 == 'I' && t2 == type) {
                ++i;
            } else {
                break;
            }
        }
        s.end = i;
        spans.push_back(std::move(s));
    }
    return spans;
}

} // namespace mkgc
