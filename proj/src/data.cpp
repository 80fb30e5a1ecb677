#include "mkgc/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace mkgc {

namespace {

std::vector<std::string> split_tab(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::pair<std::size_t, std::size_t> parse_span(const std::string& s, std::size_t line_no) {
    const auto parts = split_on(s, ':');
    if (parts.size() != 2) {
        throw parse_error("line " + std::to_string(line_no) + ": span '" + s +
                          "' is not start:end");
    }
    try {
        const long a = std::stol(parts[0]);
        const long b = std::stol(parts[1]);
        if (a < 0 || b < a) throw parse_error("");
        return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
    } catch (const std::exception&) {
        throw parse_error("line " + std::to_string(line_no) + ": bad span '" + s + "'");
    }
}

// Pads/truncates to exactly o tensors: repeat-last, zero image when empty.
std::vector<ImageTensor> normalize_images(std::vector<ImageTensor> imgs, const ModelConfig& cfg) {
    if (imgs.size() > cfg.images_per_entity) imgs.resize(cfg.images_per_entity);
    if (imgs.empty()) imgs.emplace_back(cfg.img_h, cfg.img_w, cfg.img_c, 0.0);
    while (imgs.size() < cfg.images_per_entity) imgs.push_back(imgs.back());
    return imgs;
}

ImageTensor load_image_or_zero(const std::string& dir, const std::string& rel,
                               const ModelConfig& cfg) {
    const fs::path p = fs::path(dir) / rel;
    if (!fs::exists(p)) {
        std::cerr << "warning: image '" << p.string() << "' missing, substituting zeros\n";
        return ImageTensor(cfg.img_h, cfg.img_w, cfg.img_c, 0.0);
    }
    return load_image_tensor(p.string());
}

} // namespace

int RelationRegistry::intern(const std::string& name) {
    const int idx = static_cast<int>(
        std::find(names.begin(), names.end(), name) - names.begin());
    if (idx < size()) return idx;
    names.push_back(name);
    return size() - 1;
}

int RelationRegistry::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw vocab_error("unknown relation '" + name + "'");
    return static_cast<int>(it - names.begin());
}

void TripleStore::add(const Triple& t) {
    if (seen_.count(t)) {
        std::cerr << "warning: duplicate triple (" << t.head << ", " << t.relation << ", "
                  << t.tail << ") ignored\n";
        return;
    }
    seen_.insert(t);
    dirty_ = true;
}

const std::vector<Triple>& TripleStore::triples() const {
    if (dirty_ || cache_.size() != seen_.size()) {
        cache_.assign(seen_.begin(), seen_.end());
        dirty_ = false;
    }
    return cache_;
}

void FilterIndex::add_store(const TripleStore& store) {
    for (const auto& t : store.triples()) {
        tails_[{t.head, t.relation}].insert(t.tail);
        heads_[{t.relation, t.tail}].insert(t.head);
    }
}

const std::set<int>& FilterIndex::tails(int head, int relation) const {
    const auto it = tails_.find({head, relation});
    return it == tails_.end() ? empty_ : it->second;
}

const std::set<int>& FilterIndex::heads(int relation, int tail) const {
    const auto it = heads_.find({relation, tail});
    return it == heads_.end() ? empty_ : it->second;
}

TripleStore load_triples(const std::string& path, const EntityVocabulary& entities,
                         RelationRegistry& relations, const std::string& split) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open triples file '" + path + "'");
    TripleStore store(split);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tab(line);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
            throw parse_error("line " + std::to_string(line_no) +
                              ": expected head<TAB>relation<TAB>tail");
        }
        Triple t;
        t.head = entities.index_of(fields[0]);
        t.relation = relations.intern(fields[1]);
        t.tail = entities.index_of(fields[2]);
        store.add(t);
    }
    return store;
}

void save_triples(const TripleStore& store, const EntityVocabulary& entities,
                  const RelationRegistry& relations, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write triples file '" + path + "'");
    for (const auto& t : store.triples()) {
        os << entities.record(t.head).id << '\t' << relations.names[static_cast<std::size_t>(t.relation)]
           << '\t' << entities.record(t.tail).id << '\n';
    }
}

EntityVocabulary load_entities(const std::string& path, const std::string& image_dir,
                               const ModelConfig& cfg) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open entities file '" + path + "'");
    EntityVocabulary vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tab(line);
        if (fields.size() != 4 || fields[0].empty()) {
            throw parse_error("line " + std::to_string(line_no) +
                              ": expected id<TAB>name<TAB>description<TAB>images");
        }
        EntityRecord rec;
        rec.id = fields[0];
        rec.name = fields[1];
        rec.desc_tokens = tokenize(fields[2]);
        rec.image_paths = split_on(fields[3], ',');
        std::vector<ImageTensor> imgs;
        for (std::size_t i = 0; i < rec.image_paths.size() && i < cfg.images_per_entity; ++i) {
            imgs.push_back(load_image_or_zero(image_dir, rec.image_paths[i], cfg));
        }
        rec.images = normalize_images(std::move(imgs), cfg);
        vocab.add(std::move(rec));
    }
    return vocab;
}

std::vector<SequenceExample> load_sequence_corpus(const std::string& path, SequenceTask task,
                                                  const std::string& image_dir,
                                                  const ModelConfig& cfg, bool enforce_bio) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open corpus file '" + path + "'");
    std::vector<SequenceExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tab(line);
        SequenceExample ex;
        if (task == SequenceTask::ner) {
            if (fields.size() != 3) {
                throw parse_error("line " + std::to_string(line_no) +
                                  ": expected tokens<TAB>tags<TAB>image");
            }
            ex.tokens = tokenize(fields[0]);
            for (const auto& t : split_on(fields[1], ' ')) ex.tags.push_back(t);
            ex.image_path = fields[2];
            if (ex.tags.size() != ex.tokens.size()) {
                throw parse_error("line " + std::to_string(line_no) + ": " +
                                  std::to_string(ex.tags.size()) + " tags for " +
                                  std::to_string(ex.tokens.size()) + " tokens");
            }
            if (enforce_bio) {
                std::string prev = "O";
                for (const auto& t : ex.tags) {
                    if (t != "O" && (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-')) {
                        throw value_error("line " + std::to_string(line_no) + ": bad tag '" + t + "'");
                    }
                    if (t.size() > 2 && t[0] == 'I') {
                        const bool ok = prev.size() > 2 && (prev[0] == 'B' || prev[0] == 'I') &&
                                        prev.substr(2) == t.substr(2);
                        if (!ok) {
                            throw value_error("line " + std::to_string(line_no) +
                                              ": I tag '" + t + "' without matching B/I before it");
                        }
                    }
                    prev = t;
                }
            }
        } else {
            if (fields.size() != 5) {
                throw parse_error("line " + std::to_string(line_no) +
                                  ": expected tokens<TAB>head<TAB>tail<TAB>relation<TAB>image");
            }
            ex.tokens = tokenize(fields[0]);
            std::tie(ex.head_start, ex.head_end) = parse_span(fields[1], line_no);
            std::tie(ex.tail_start, ex.tail_end) = parse_span(fields[2], line_no);
            ex.relation = fields[3];
            ex.image_path = fields[4];
            const std::size_t n = ex.tokens.size();
            if (ex.head_end > n || ex.tail_end > n || ex.head_start >= ex.head_end ||
                ex.tail_start >= ex.tail_end) {
                throw parse_error("line " + std::to_string(line_no) + ": span out of bounds");
            }
            const bool overlap = ex.head_start < ex.tail_end && ex.tail_start < ex.head_end;
            if (overlap) {
                throw parse_error("line " + std::to_string(line_no) + ": head/tail spans overlap");
            }
        }
        ex.image = load_image_or_zero(image_dir, ex.image_path, cfg);
        out.push_back(std::move(ex));
    }
    return out;
}

// --- synthetic generation ------------------------------------------------------------

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Entity images carry an id-dependent sinusoidal pattern plus seeded noise,
// so identity is recoverable from pixels alone.
ImageTensor make_entity_image(std::uint64_t seed, std::size_t entity, std::size_t img_index,
                              const ModelConfig& cfg) {
    std::mt19937_64 rng(mix_seed(seed, entity * 131 + img_index));
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    ImageTensor img(cfg.img_h, cfg.img_w, cfg.img_c);
    for (std::size_t i = 0; i < cfg.img_h; ++i) {
        for (std::size_t j = 0; j < cfg.img_w; ++j) {
            for (std::size_t k = 0; k < cfg.img_c; ++k) {
                const double phase = static_cast<double>(entity + 1) * 0.7;
                const double pos = static_cast<double>(i * cfg.img_w + j + k) * 0.35;
                img.at(i, j, k) = std::sin(phase * (pos + 1.0)) + noise(rng);
            }
        }
    }
    return img;
}

std::string spelled_digits(std::size_t value) {
    static const char* words[] = {"zero", "one", "two", "three", "four",
                                  "five", "six", "seven", "eight", "nine"};
    std::string s = std::to_string(value);
    std::string out;
    for (char c : s) {
        if (!out.empty()) out += ' ';
        out += words[c - '0'];
    }
    return out;
}

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "the", "a", "near", "with", "over", "under", "from", "into", "about", "toward"};
    return words;
}

} // namespace

void generate_synthetic_link(const std::string& out_dir, std::uint64_t seed,
                             const SyntheticSpec& spec, const ModelConfig& cfg) {
    if (spec.entities == 0 || spec.relations == 0) throw value_error("empty synthetic spec");
    if (spec.triples > spec.entities * spec.relations) {
        throw value_error("cannot plant more than entities*relations unique (head, relation) pairs");
    }
    fs::create_directories(fs::path(out_dir) / "images");
    std::mt19937_64 rng(mix_seed(seed, 1));

    std::ofstream ents(fs::path(out_dir) / "entities.tsv", std::ios::binary);
    if (!ents) throw io_error("cannot write entities.tsv under '" + out_dir + "'");
    for (std::size_t e = 0; e < spec.entities; ++e) {
        std::string imgs;
        for (std::size_t k = 0; k < cfg.images_per_entity; ++k) {
            const std::string rel = "images/e" + std::to_string(e) + "_" + std::to_string(k) + ".img";
            save_image_tensor(make_entity_image(seed, e, k, cfg), (fs::path(out_dir) / rel).string());
            if (k > 0) imgs += ',';
            imgs += rel;
        }
        ents << "ent" << e << '\t' << "entity " << e << '\t'
             << "item " << spelled_digits(e) << " of the collection" << '\t' << imgs << '\n';
    }
    ents.close();

    // All (head, relation) pairs, shuffled; tail follows the planted rule.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(spec.entities * spec.relations);
    for (std::size_t e = 0; e < spec.entities; ++e) {
        for (std::size_t r = 0; r < spec.relations; ++r) pairs.emplace_back(e, r);
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(spec.triples);
    std::sort(pairs.begin(), pairs.end());

    std::ofstream tr(fs::path(out_dir) / "train.tsv", std::ios::binary);
    if (!tr) throw io_error("cannot write train.tsv under '" + out_dir + "'");
    for (const auto& [e, r] : pairs) {
        const std::size_t tail = (e + r + 1) % spec.entities;
        tr << "ent" << e << '\t' << "rel" << r << '\t' << "ent" << tail << '\n';
    }
}

void generate_synthetic_re(const std::string& out_dir, std::uint64_t seed,
                           const SyntheticSpec& spec, const ModelConfig& cfg) {
    if (spec.classes == 0 || spec.examples == 0) throw value_error("empty synthetic spec");
    fs::create_directories(fs::path(out_dir) / "images");
    std::mt19937_64 rng(mix_seed(seed, 2));
    std::uniform_int_distribution<std::size_t> pick_filler(0, filler_words().size() - 1);

    std::ofstream os(fs::path(out_dir) / "train.tsv", std::ios::binary);
    if (!os) throw io_error("cannot write train.tsv under '" + out_dir + "'");
    for (std::size_t i = 0; i < spec.examples; ++i) {
        const std::size_t cls = i % spec.classes;
        std::vector<std::string> toks;
        toks.push_back(filler_words()[pick_filler(rng)]);
        const std::size_t h0 = toks.size();
        toks.push_back("subject" + std::to_string(rng() % 6));
        const std::size_t h1 = toks.size();
        toks.push_back(filler_words()[pick_filler(rng)]);
        // The class keyword makes the label recoverable from text alone.
        toks.push_back("relkey" + std::to_string(cls));
        toks.push_back(filler_words()[pick_filler(rng)]);
        const std::size_t t0 = toks.size();
        toks.push_back("object" + std::to_string(rng() % 6));
        const std::size_t t1 = toks.size();
        toks.push_back(filler_words()[pick_filler(rng)]);

        const std::string rel = "images/x" + std::to_string(i) + ".img";
        save_image_tensor(make_entity_image(seed, cls, i, cfg), (fs::path(out_dir) / rel).string());

        for (std::size_t t = 0; t < toks.size(); ++t) {
            if (t > 0) os << ' ';
            os << toks[t];
        }
        os << '\t' << h0 << ':' << h1 << '\t' << t0 << ':' << t1 << '\t'
           << "relclass" << cls << '\t' << rel << '\n';
    }
}

void generate_synthetic_ner(const std::string& out_dir, std::uint64_t seed,
                            const SyntheticSpec& spec, const ModelConfig& cfg) {
    if (spec.entity_types == 0 || spec.examples == 0) throw value_error("empty synthetic spec");
    fs::create_directories(fs::path(out_dir) / "images");
    std::mt19937_64 rng(mix_seed(seed, 3));
    std::uniform_int_distribution<std::size_t> pick_filler(0, filler_words().size() - 1);
    std::uniform_int_distribution<std::size_t> span_len(1, 2);

    std::ofstream os(fs::path(out_dir) / "train.tsv", std::ios::binary);
    if (!os) throw io_error("cannot write train.tsv under '" + out_dir + "'");
    for (std::size_t i = 0; i < spec.examples; ++i) {
        const std::size_t type = i % spec.entity_types;
        std::vector<std::string> toks;
        std::vector<std::string> tags;
        const std::size_t lead = 1 + rng() % 2;
        for (std::size_t k = 0; k < lead; ++k) {
            toks.push_back(filler_words()[pick_filler(rng)]);
            tags.emplace_back("O");
        }
        // Entity words are drawn from a per-type lexicon, so a lookup rule
        // recovers the tags exactly.
        const std::size_t len = span_len(rng);
        for (std::size_t k = 0; k < len; ++k) {
            toks.push_back("name" + std::to_string(type) + "x" + std::to_string(rng() % 4));
            tags.push_back(std::string(k == 0 ? "B-T" : "I-T") + std::to_string(type));
        }
        const std::size_t trail = 1 + rng() % 2;
        for (std::size_t k = 0; k < trail; ++k) {
            toks.push_back(filler_words()[pick_filler(rng)]);
            tags.emplace_back("O");
        }

        const std::string rel = "images/x" + std::to_string(i) + ".img";
        save_image_tensor(make_entity_image(seed, type, i, cfg), (fs::path(out_dir) / rel).string());

        for (std::size_t t = 0; t < toks.size(); ++t) {
            if (t > 0) os << ' ';
            os << toks[t];
        }
        os << '\t';
        for (std::size_t t = 0; t < tags.size(); ++t) {
            if (t > 0) os << ' ';
            os << tags[t];
        }
        os << '\t' << rel << '\n';
    }
}

// --- low-resource sampling -------------------------------------------------------------

std::vector<Triple> sample_k_shot_triples(const std::vector<Triple>& triples, std::size_t k,
                                          std::uint64_t seed) {
    return sample_k_shot(triples, k, seed,
                         [](const Triple& t) { return std::to_string(t.relation); });
}

std::vector<SequenceExample> sample_k_shot_sequences(const std::vector<SequenceExample>& examples,
                                                     std::size_t k, std::uint64_t seed,
                                                     SequenceTask task) {
    if (task == SequenceTask::re) {
        return sample_k_shot(examples, k, seed,
                             [](const SequenceExample& e) { return e.relation; });
    }
    return sample_k_shot(examples, k, seed, [](const SequenceExample& e) {
        // Class of an NER sentence: the type of its first span, "O" if none.
        const auto spans = extract_spans(e.tags);
        return spans.empty() ? std::string("O") : spans.front().type;
    });
}

} // namespace mkgc
