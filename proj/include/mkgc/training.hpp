#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mkgc/data.hpp"
#include "mkgc/metrics.hpp"
#include "mkgc/model.hpp"

namespace mkgc {

struct TrainConfig {
    std::string task = "link"; // link | re | ner
    std::size_t epochs = 300;
    std::size_t phase1_epochs = 60; // entity-modeling phase of the link task
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    std::size_t eval_every = 10;   // early-stop check period, in epochs
    double early_stop_at = -1.0;   // target train metric (hits@1 or f1); < 0 disables
    std::size_t k_shot = 0;        // 0 = use the full training set
    std::size_t n_seeds = 1;       // low-resource repetitions
    // Parameter-name prefixes kept frozen during the main training phase
    // (the entity-modeling phase always freezes everything but entity rows).
    std::vector<std::string> freeze_prefixes;

    void validate() const;
};

// Marks parameters whose name starts with any prefix as frozen, the rest as
// trainable.
void apply_freeze_list(ModelWeights& weights, const std::vector<std::string>& prefixes);

// Adaptive moment estimation with bias correction. Frozen parameters are
// skipped entirely; state is kept per parameter in registration order.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(const std::vector<Parameter*>& params);

private:
    struct Slot {
        Matrix2D m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Slot> slots_;
};

// Runs reverse-mode accumulation from the recorded loss into the unfrozen
// Parameter gradients.
void backward_pass(ad::Tape& tape, const ad::NodeRef& loss);

// --- training loops ---------------------------------------------------------------

// Phase 1 of the link task: only the entity embedding rows learn.
// Returns the mean loss of the final epoch.
double train_entity_modeling(Model& model, const TrainConfig& cfg);

// Two-phase link prediction; returns the final filtered train-split report.
MetricsReport train_link_prediction(Model& model, const TripleStore& store,
                                    const TrainConfig& cfg);

// Full-model fine-tuning for RE or NER; returns the final train report.
MetricsReport train_classifier_head(Model& model, const std::vector<SequenceExample>& corpus,
                                    const TrainConfig& cfg, SequenceTask task);

// --- evaluation ---------------------------------------------------------------------

MetricsReport evaluate_ranking(Model& model, const TripleStore& eval_split,
                               const FilterIndex& filter);
MetricsReport evaluate_re(Model& model, const std::vector<SequenceExample>& corpus);
MetricsReport evaluate_ner(Model& model, const std::vector<SequenceExample>& corpus);

} // namespace mkgc
