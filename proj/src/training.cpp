#include "mkgc/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace mkgc {

void TrainConfig::validate() const {
    if (task != "link" && task != "re" && task != "ner") {
        throw usage_error("task must be link, re or ner");
    }
    if (lr <= 0.0) throw value_error("learning rate must be positive");
    if (batch_size == 0) throw value_error("batch size must be >= 1");
    if (eval_every == 0) throw value_error("eval_every must be >= 1");
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Parameter*>& params) {
    if (slots_.empty()) {
        slots_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            slots_[i].m = Matrix2D(params[i]->value.rows, params[i]->value.cols);
            slots_[i].v = Matrix2D(params[i]->value.rows, params[i]->value.cols);
        }
    }
    if (slots_.size() != params.size()) throw state_error("optimizer bound to a different model");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (p.frozen) continue;
        if (!p.value.same_shape(p.gradient)) throw shape_error("gradient shape mismatch");
        Slot& s = slots_[i];
        for (std::size_t k = 0; k < p.value.data.size(); ++k) {
            const double g = p.gradient.data[k];
            s.m.data[k] = beta1_ * s.m.data[k] + (1.0 - beta1_) * g;
            s.v.data[k] = beta2_ * s.v.data[k] + (1.0 - beta2_) * g * g;
            const double mhat = s.m.data[k] / bc1;
            const double vhat = s.v.data[k] / bc2;
            p.value.data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        ensure_finite(p.value, p.name.c_str());
    }
}

void backward_pass(ad::Tape& tape, const ad::NodeRef& loss) {
    tape.backward(loss);
}

void apply_freeze_list(ModelWeights& weights, const std::vector<std::string>& prefixes) {
    for (Parameter* p : weights.params()) {
        p->frozen = false;
        for (const auto& prefix : prefixes) {
            if (p->name.rfind(prefix, 0) == 0) {
                p->frozen = true;
                break;
            }
        }
    }
}

namespace {

// Deterministic per-epoch shuffling.
template <typename T>
void shuffle_epoch(std::vector<T>& items, std::uint64_t seed, std::size_t epoch) {
    std::mt19937_64 rng(seed * 2654435761ULL + epoch + 1);
    std::shuffle(items.begin(), items.end(), rng);
}

// One batched optimization pass over the given loss builders.
template <typename LossFn>
double run_epoch(Model& model, Adam& opt, const std::vector<std::size_t>& order,
                 std::size_t batch_size, LossFn&& make_loss) {
    double total = 0.0;
    std::size_t i = 0;
    const auto params = model.weights.params();
    while (i < order.size()) {
        const std::size_t batch_end = std::min(i + batch_size, order.size());
        const double batch_n = static_cast<double>(batch_end - i);
        model.weights.zero_grads();
        for (; i < batch_end; ++i) {
            ad::Tape tape;
            ad::NodeRef loss = make_loss(tape, order[i]);
            // Average inside the batch by scaling the loss itself.
            ad::NodeRef scaled = ad::scale(loss, 1.0 / batch_n);
            backward_pass(tape, scaled);
            total += loss->value(0, 0);
        }
        opt.step(params);
    }
    return total / static_cast<double>(order.size());
}

} // namespace

double train_entity_modeling(Model& model, const TrainConfig& cfg) {
    cfg.validate();
    if (model.entities.size() == 0) throw value_error("no entities to model");
    model.weights.freeze_all_except_entity_rows();
    Adam opt(cfg.lr);
    std::vector<std::size_t> order(static_cast<std::size_t>(model.entities.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double last = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.phase1_epochs; ++epoch) {
        shuffle_epoch(order, cfg.seed, epoch);
        last = run_epoch(model, opt, order, cfg.batch_size, [&](ad::Tape& tape, std::size_t idx) {
            return entity_modeling_loss(tape, model, static_cast<int>(idx));
        });
    }
    return last;
}

namespace {

struct LinkQuery {
    int known_entity;
    int relation;
    QueryDirection direction;
    std::vector<double> targets; // over all entities
};

std::vector<LinkQuery> build_link_queries(const Model& model, const TripleStore& store) {
    const std::size_t n_entities = static_cast<std::size_t>(model.entities.size());
    std::map<std::pair<int, int>, std::vector<double>> tail_targets, head_targets;
    for (const auto& t : store.triples()) {
        auto& tt = tail_targets[{t.head, t.relation}];
        if (tt.empty()) tt.assign(n_entities, 0.0);
        tt[static_cast<std::size_t>(t.tail)] = 1.0;
        auto& ht = head_targets[{t.relation, t.tail}];
        if (ht.empty()) ht.assign(n_entities, 0.0);
        ht[static_cast<std::size_t>(t.head)] = 1.0;
    }
    std::vector<LinkQuery> queries;
    queries.reserve(tail_targets.size() + head_targets.size());
    for (auto& [key, targets] : tail_targets) {
        queries.push_back({key.first, key.second, QueryDirection::tail, std::move(targets)});
    }
    for (auto& [key, targets] : head_targets) {
        queries.push_back({key.second, key.first, QueryDirection::head, std::move(targets)});
    }
    return queries;
}

} // namespace

MetricsReport train_link_prediction(Model& model, const TripleStore& store,
                                    const TrainConfig& cfg) {
    cfg.validate();
    if (store.size() == 0) throw value_error("empty training store");

    train_entity_modeling(model, cfg);
    apply_freeze_list(model.weights, cfg.freeze_prefixes); // phase 2: everything by default

    FilterIndex filter;
    filter.add_store(store);
    auto queries = build_link_queries(model, store);
    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Adam opt(cfg.lr);
    MetricsReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_epoch(order, cfg.seed + 1, epoch);
        run_epoch(model, opt, order, cfg.batch_size, [&](ad::Tape& tape, std::size_t idx) {
            const LinkQuery& q = queries[idx];
            return link_query_loss(tape, model, q.known_entity, q.relation, q.targets,
                                   q.direction);
        });
        const bool last_epoch = epoch + 1 == cfg.epochs;
        if ((epoch + 1) % cfg.eval_every == 0 || last_epoch) {
            report = evaluate_ranking(model, store, filter);
            if (cfg.early_stop_at > 0.0 && report.hits1 >= cfg.early_stop_at) break;
        }
    }
    if (report.task.empty()) report = evaluate_ranking(model, store, filter);
    report.seed = cfg.seed;
    return report;
}

MetricsReport train_classifier_head(Model& model, const std::vector<SequenceExample>& corpus,
                                    const TrainConfig& cfg, SequenceTask task) {
    cfg.validate();
    if (corpus.empty()) throw value_error("empty training corpus");
    apply_freeze_list(model.weights, cfg.freeze_prefixes);
    Adam opt(cfg.lr);
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    MetricsReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_epoch(order, cfg.seed, epoch);
        run_epoch(model, opt, order, cfg.batch_size, [&](ad::Tape& tape, std::size_t idx) {
            return task == SequenceTask::re ? re_example_loss(tape, model, corpus[idx])
                                            : ner_example_loss(tape, model, corpus[idx]);
        });
        const bool last_epoch = epoch + 1 == cfg.epochs;
        if ((epoch + 1) % cfg.eval_every == 0 || last_epoch) {
            report = task == SequenceTask::re ? evaluate_re(model, corpus)
                                              : evaluate_ner(model, corpus);
            if (cfg.early_stop_at > 0.0 && report.f1 >= cfg.early_stop_at) break;
        }
    }
    if (report.task.empty()) {
        report = task == SequenceTask::re ? evaluate_re(model, corpus)
                                          : evaluate_ner(model, corpus);
    }
    report.seed = cfg.seed;
    return report;
}

MetricsReport evaluate_ranking(Model& model, const TripleStore& eval_split,
                               const FilterIndex& filter) {
    if (eval_split.size() == 0) throw value_error("evaluate_ranking: empty split");
    std::vector<std::size_t> ranks;
    ranks.reserve(eval_split.size() * 2);
    for (const auto& t : eval_split.triples()) {
        { // tail query (e_h, r, ?)
            const Matrix2D scores = score_all_entities(model, t.head, t.relation,
                                                       QueryDirection::tail);
            std::vector<double> s(scores.data.begin(), scores.data.end());
            std::set<std::size_t> filtered;
            for (int known : filter.tails(t.head, t.relation)) {
                if (known != t.tail) filtered.insert(static_cast<std::size_t>(known));
            }
            ranks.push_back(rank_of_gold(s, static_cast<std::size_t>(t.tail), filtered));
        }
        { // head query (?, r, e_t)
            const Matrix2D scores = score_all_entities(model, t.tail, t.relation,
                                                       QueryDirection::head);
            std::vector<double> s(scores.data.begin(), scores.data.end());
            std::set<std::size_t> filtered;
            for (int known : filter.heads(t.relation, t.tail)) {
                if (known != t.head) filtered.insert(static_cast<std::size_t>(known));
            }
            ranks.push_back(rank_of_gold(s, static_cast<std::size_t>(t.head), filtered));
        }
    }
    const RankingSummary s = summarize_ranks(ranks);
    MetricsReport r;
    r.task = "link";
    r.mr = s.mr;
    r.hits1 = s.hits1;
    r.hits3 = s.hits3;
    r.hits10 = s.hits10;
    return r;
}

MetricsReport evaluate_re(Model& model, const std::vector<SequenceExample>& corpus) {
    std::vector<int> pred, gold;
    pred.reserve(corpus.size());
    gold.reserve(corpus.size());
    for (const auto& ex : corpus) {
        pred.push_back(predict_relation(model, ex));
        gold.push_back(model.weights.rel_labels.index_of(ex.relation));
    }
    const PrfSummary s = micro_f1(pred, gold);
    MetricsReport r;
    r.task = "re";
    r.precision = s.precision;
    r.recall = s.recall;
    r.f1 = s.f1;
    return r;
}

MetricsReport evaluate_ner(Model& model, const std::vector<SequenceExample>& corpus) {
    std::vector<std::vector<std::string>> pred, gold;
    pred.reserve(corpus.size());
    gold.reserve(corpus.size());
    for (const auto& ex : corpus) {
        const auto tag_ids = predict_tags(model, ex);
        std::vector<std::string> tags;
        tags.reserve(tag_ids.size());
        for (int t : tag_ids) {
            tags.push_back(model.weights.crf.tag_names[static_cast<std::size_t>(t)]);
        }
        pred.push_back(std::move(tags));
        gold.push_back(ex.tags);
    }
    const PrfSummary s = span_f1(pred, gold);
    MetricsReport r;
    r.task = "ner";
    r.precision = s.precision;
    r.recall = s.recall;
    r.f1 = s.f1;
    return r;
}

} // namespace mkgc
