#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mkgc/config.hpp"
#include "mkgc/image.hpp"
#include "mkgc/task_heads.hpp"

namespace mkgc {

// --- knowledge graph --------------------------------------------------------------

struct Triple {
    int head = 0;
    int relation = 0;
    int tail = 0;
    bool operator<(const Triple& o) const {
        if (head != o.head) return head < o.head;
        if (relation != o.relation) return relation < o.relation;
        return tail < o.tail;
    }
    bool operator==(const Triple& o) const {
        return head == o.head && relation == o.relation && tail == o.tail;
    }
};

// Relation name registry; indices are dense from 0 in first-seen order.
struct RelationRegistry {
    std::vector<std::string> names;
    int intern(const std::string& name);
    int index_of(const std::string& name) const; // throws vocab_error
    int size() const { return static_cast<int>(names.size()); }
};

// Triples of one split, canonically ordered and deduplicated.
class TripleStore {
public:
    explicit TripleStore(std::string split = "train") : split_(std::move(split)) {}

    void add(const Triple& t); // drops duplicates with a warning
    const std::vector<Triple>& triples() const;
    std::size_t size() const { return seen_.size(); }
    const std::string& split() const { return split_; }

private:
    std::string split_;
    std::set<Triple> seen_;
    mutable std::vector<Triple> cache_;
    mutable bool dirty_ = false;
};

// Known-positive index over one or more splits, for filtered ranking.
class FilterIndex {
public:
    void add_store(const TripleStore& store);
    const std::set<int>& tails(int head, int relation) const;
    const std::set<int>& heads(int relation, int tail) const;

private:
    std::map<std::pair<int, int>, std::set<int>> tails_;
    std::map<std::pair<int, int>, std::set<int>> heads_;
    std::set<int> empty_;
};

TripleStore load_triples(const std::string& path, const EntityVocabulary& entities,
                         RelationRegistry& relations, const std::string& split = "train");
void save_triples(const TripleStore& store, const EntityVocabulary& entities,
                  const RelationRegistry& relations, const std::string& path);

// Entity records with image tensors normalized to exactly `o` per entity
// (repeat-last padding; a zero image when none are listed or loadable).
EntityVocabulary load_entities(const std::string& path, const std::string& image_dir,
                               const ModelConfig& cfg);

// --- sequence corpora ---------------------------------------------------------------

struct SequenceExample {
    std::vector<std::string> tokens;
    // NER payload
    std::vector<std::string> tags;
    // RE payload: half-open token spans
    std::size_t head_start = 0, head_end = 0;
    std::size_t tail_start = 0, tail_end = 0;
    std::string relation;
    std::string image_path;
    ImageTensor image;
};

enum class SequenceTask { re, ner };

std::vector<SequenceExample> load_sequence_corpus(const std::string& path, SequenceTask task,
                                                  const std::string& image_dir,
                                                  const ModelConfig& cfg,
                                                  bool enforce_bio = true);

// --- synthetic generation --------------------------------------------------------------

struct SyntheticSpec {
    std::size_t entities = 20;
    std::size_t relations = 5;
    std::size_t triples = 100;
    std::size_t classes = 4;      // RE relation labels
    std::size_t entity_types = 3; // NER types
    std::size_t examples = 80;    // RE/NER corpus size
};

// Writes entities.tsv + train.tsv + images/ under out_dir. Triples follow a
// planted rule: relation k maps entity i to entity (i + k + 1) mod E.
void generate_synthetic_link(const std::string& out_dir, std::uint64_t seed,
                             const SyntheticSpec& spec, const ModelConfig& cfg);
// Writes train.tsv + images/; label j is recoverable from a keyword token.
void generate_synthetic_re(const std::string& out_dir, std::uint64_t seed,
                           const SyntheticSpec& spec, const ModelConfig& cfg);
// Writes train.tsv + images/; entity types are recoverable from lexicons.
void generate_synthetic_ner(const std::string& out_dir, std::uint64_t seed,
                            const SyntheticSpec& spec, const ModelConfig& cfg);

// --- low-resource sampling ---------------------------------------------------------------

// Exactly min(K, class size) examples per class, without replacement.
// The class of an example is derived with `class_of`.
template <typename T, typename ClassOf>
std::vector<T> sample_k_shot(const std::vector<T>& items, std::size_t k, std::uint64_t seed,
                             ClassOf class_of) {
    if (items.empty()) throw value_error("sample_k_shot: empty dataset");
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < items.size(); ++i) by_class[class_of(items[i])].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [cls, idxs] : by_class) {
        std::shuffle(idxs.begin(), idxs.end(), rng);
        for (std::size_t i = 0; i < std::min(k, idxs.size()); ++i) chosen.push_back(idxs[i]);
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<T> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(items[i]);
    return out;
}

std::vector<Triple> sample_k_shot_triples(const std::vector<Triple>& triples, std::size_t k,
                                          std::uint64_t seed);
std::vector<SequenceExample> sample_k_shot_sequences(const std::vector<SequenceExample>& examples,
                                                     std::size_t k, std::uint64_t seed,
                                                     SequenceTask task);

} // namespace mkgc
