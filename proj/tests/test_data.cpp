#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mkgc/data.hpp"
#include "mkgc/verify.hpp"

using namespace mkgc;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("data");

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mkgc_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    os << content;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("image tensor round-trip, bit-exact") {
    TempDir dir;
    ImageTensor img(3, 2, 2);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<double>(static_cast<float>(0.37 * static_cast<double>(i) - 1.0));
    }
    const std::string p = (dir.path / "t.img").string();
    save_image_tensor(img, p);
    const ImageTensor back = load_image_tensor(p);
    CHECK(back.h == 3);
    CHECK(back.w == 2);
    CHECK(back.c == 2);
    CHECK(back.data == img.data); // float32-representable values survive exactly

    const std::string raw = read_file(dir.path / "t.img");
    CHECK(raw.substr(0, 4) == "MKGI");
    CHECK(raw.size() == 4 + 12 + img.size() * 4);

    write_file(dir.path / "bad.img", "NOPE1234");
    CHECK_THROWS_AS(load_image_tensor((dir.path / "bad.img").string()), parse_error);
    CHECK_THROWS_AS(load_image_tensor((dir.path / "missing.img").string()), io_error);
}

TEST_CASE("entity loading: padding, truncation, missing images") {
    TempDir dir;
    ModelConfig cfg = verify::toy_config(); // o = 2, 4x4x1
    fs::create_directories(dir.path / "images");
    ImageTensor img(4, 4, 1, 0.5);
    save_image_tensor(img, (dir.path / "images" / "a.img").string());
    save_image_tensor(img, (dir.path / "images" / "b.img").string());
    save_image_tensor(img, (dir.path / "images" / "c.img").string());

    ModelConfig cfg3 = cfg;
    cfg3.images_per_entity = 3;
    write_file(dir.path / "entities.tsv",
               "e0\tfirst\talpha beta\timages/a.img,images/b.img\n"
               "e1\tsecond\t\t\n"
               "e2\tthird\tgamma\timages/a.img,images/b.img,images/c.img,images/a.img\n"
               "e3\tfourth\tdelta\timages/gone.img\n");
    const EntityVocabulary ents =
        load_entities((dir.path / "entities.tsv").string(), dir.str(), cfg3);
    REQUIRE(ents.size() == 4);
    // two files, o = 3: repeat-last padding
    CHECK(ents.record(0).images.size() == 3);
    CHECK(ents.record(0).images[1].data == ents.record(0).images[2].data);
    // empty description is fine, zero image substituted
    CHECK(ents.record(1).desc_tokens.empty());
    CHECK(ents.record(1).images.size() == 3);
    CHECK(ents.record(1).images[0].data == std::vector<double>(16, 0.0));
    // four files, o = 3: first three kept
    CHECK(ents.record(2).images.size() == 3);
    // missing file -> zeros with a warning
    CHECK(ents.record(3).images[0].data == std::vector<double>(16, 0.0));

    write_file(dir.path / "broken.tsv", "only_two\tfields\n");
    CHECK_THROWS_AS(load_entities((dir.path / "broken.tsv").string(), dir.str(), cfg3),
                    parse_error);
}

TEST_CASE("triples: load, dedup, canonical save round-trip") {
    TempDir dir;
    ModelConfig cfg = verify::toy_config();
    fs::create_directories(dir.path / "images");
    write_file(dir.path / "entities.tsv",
               "e0\ta\tx\t\ne1\tb\ty\t\ne2\tc\tz\t\n");
    const EntityVocabulary ents =
        load_entities((dir.path / "entities.tsv").string(), dir.str(), cfg);

    write_file(dir.path / "train.tsv",
               "e1\tr0\te2\n"
               "\n"
               "e0\tr1\te1\n"
               "e1\tr0\te2\n"); // duplicate
    RelationRegistry rels;
    const TripleStore store =
        load_triples((dir.path / "train.tsv").string(), ents, rels, "train");
    CHECK(store.size() == 2);
    CHECK(rels.size() == 2);

    save_triples(store, ents, rels, (dir.path / "saved.tsv").string());
    RelationRegistry rels2;
    const TripleStore again =
        load_triples((dir.path / "saved.tsv").string(), ents, rels2, "train");
    save_triples(again, ents, rels2, (dir.path / "saved2.tsv").string());
    CHECK(read_file(dir.path / "saved.tsv") == read_file(dir.path / "saved2.tsv"));

    write_file(dir.path / "bad.tsv", "e0\tr0\n");
    CHECK_THROWS_AS(load_triples((dir.path / "bad.tsv").string(), ents, rels, "train"),
                    parse_error);
    write_file(dir.path / "unknown.tsv", "e0\tr0\tnobody\n");
    CHECK_THROWS_AS(load_triples((dir.path / "unknown.tsv").string(), ents, rels, "train"),
                    vocab_error);

    FilterIndex filter;
    filter.add_store(store);
    CHECK(filter.tails(ents.index_of("e1"), rels.index_of("r0")) ==
          std::set<int>{ents.index_of("e2")});
}

TEST_CASE("sequence corpus validation") {
    TempDir dir;
    ModelConfig cfg = verify::toy_config();
    fs::create_directories(dir.path / "images");
    ImageTensor img(4, 4, 1, 0.1);
    save_image_tensor(img, (dir.path / "images" / "i.img").string());

    write_file(dir.path / "ner.tsv",
               "the big name\tO B-A I-A\timages/i.img\n"
               "other line\tO O\timages/i.img\n");
    const auto ner = load_sequence_corpus((dir.path / "ner.tsv").string(), SequenceTask::ner,
                                          dir.str(), cfg);
    REQUIRE(ner.size() == 2);
    CHECK(ner[0].tokens == std::vector<std::string>{"the", "big", "name"});
    CHECK(ner[0].tags == std::vector<std::string>{"O", "B-A", "I-A"});
    CHECK(ner[0].image.size() == 16);

    write_file(dir.path / "bad_len.tsv", "one two\tO\timages/i.img\n");
    CHECK_THROWS_AS(load_sequence_corpus((dir.path / "bad_len.tsv").string(), SequenceTask::ner,
                                         dir.str(), cfg),
                    parse_error);
    write_file(dir.path / "bad_bio.tsv", "one two\tO I-A\timages/i.img\n");
    CHECK_THROWS_AS(load_sequence_corpus((dir.path / "bad_bio.tsv").string(), SequenceTask::ner,
                                         dir.str(), cfg),
                    value_error);
    // accepted when enforcement is off
    CHECK(load_sequence_corpus((dir.path / "bad_bio.tsv").string(), SequenceTask::ner, dir.str(),
                               cfg, false)
              .size() == 1);

    write_file(dir.path / "re.tsv", "a b c d e\t0:1\t3:5\trel_x\timages/i.img\n");
    const auto re = load_sequence_corpus((dir.path / "re.tsv").string(), SequenceTask::re,
                                         dir.str(), cfg);
    REQUIRE(re.size() == 1);
    CHECK(re[0].head_start == 0);
    CHECK(re[0].tail_end == 5);
    CHECK(re[0].relation == "rel_x");

    write_file(dir.path / "re_overlap.tsv", "a b c\t0:2\t1:3\tr\timages/i.img\n");
    CHECK_THROWS_AS(load_sequence_corpus((dir.path / "re_overlap.tsv").string(), SequenceTask::re,
                                         dir.str(), cfg),
                    parse_error);
    write_file(dir.path / "re_oob.tsv", "a b c\t0:1\t2:9\tr\timages/i.img\n");
    CHECK_THROWS_AS(load_sequence_corpus((dir.path / "re_oob.tsv").string(), SequenceTask::re,
                                         dir.str(), cfg),
                    parse_error);
}

TEST_CASE("synthetic generators are deterministic and planted") {
    TempDir dir;
    ModelConfig cfg = verify::toy_config();
    SyntheticSpec spec;
    spec.entities = 10;
    spec.relations = 3;
    spec.triples = 25;
    spec.examples = 20;

    const std::string d1 = (dir.path / "a").string();
    const std::string d2 = (dir.path / "b").string();
    generate_synthetic_link(d1, 5, spec, cfg);
    generate_synthetic_link(d2, 5, spec, cfg);
    CHECK(read_file(fs::path(d1) / "train.tsv") == read_file(fs::path(d2) / "train.tsv"));
    CHECK(read_file(fs::path(d1) / "entities.tsv") == read_file(fs::path(d2) / "entities.tsv"));
    CHECK(read_file(fs::path(d1) / "images/e0_0.img") ==
          read_file(fs::path(d2) / "images/e0_0.img"));

    const EntityVocabulary ents = load_entities((fs::path(d1) / "entities.tsv").string(), d1, cfg);
    CHECK(ents.size() == 10);
    RelationRegistry rels;
    const TripleStore store =
        load_triples((fs::path(d1) / "train.tsv").string(), ents, rels, "train");
    CHECK(store.size() == 25);
    // planted rule: relation k maps entity i to entity (i + k + 1) mod E
    for (const auto& t : store.triples()) {
        CHECK(t.tail == (t.head + t.relation + 1) % 10);
    }

    // RE corpus: the keyword token recovers the label with perfect accuracy
    const std::string dre = (dir.path / "re").string();
    generate_synthetic_re(dre, 6, spec, cfg);
    const auto corpus = load_sequence_corpus((fs::path(dre) / "train.tsv").string(),
                                             SequenceTask::re, dre, cfg);
    REQUIRE(corpus.size() == 20);
    for (const auto& ex : corpus) {
        std::string recovered;
        for (const auto& tok : ex.tokens) {
            if (tok.rfind("relkey", 0) == 0) recovered = "relclass" + tok.substr(6);
        }
        CHECK(recovered == ex.relation);
    }

    // NER corpus: lexicon membership recovers the tags exactly
    const std::string dner = (dir.path / "ner").string();
    generate_synthetic_ner(dner, 6, spec, cfg);
    const auto ner = load_sequence_corpus((fs::path(dner) / "train.tsv").string(),
                                          SequenceTask::ner, dner, cfg);
    REQUIRE(ner.size() == 20);
    for (const auto& ex : ner) {
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
            const bool is_name = ex.tokens[i].rfind("name", 0) == 0;
            CHECK(is_name == (ex.tags[i] != "O"));
            if (is_name) {
                const std::string type = "T" + ex.tokens[i].substr(4, 1);
                CHECK(ex.tags[i].substr(2) == type);
            }
        }
    }
}

TEST_CASE("k-shot sampling sizes and seed variation") {
    std::vector<Triple> triples;
    for (int r = 0; r < 5; ++r) {
        for (int i = 0; i < 30; ++i) triples.push_back({i, r, (i + r) % 30});
    }
    const auto s1 = sample_k_shot_triples(triples, 4, 11);
    CHECK(s1.size() == 20);
    std::map<int, int> per_class;
    for (const auto& t : s1) per_class[t.relation]++;
    for (const auto& [r, count] : per_class) CHECK(count == 4);

    const auto s2 = sample_k_shot_triples(triples, 4, 12);
    CHECK(s2.size() == 20);
    CHECK(s1 != s2);

    const auto all = sample_k_shot_triples(triples, 1000, 13);
    CHECK(all.size() == triples.size());

    CHECK_THROWS_AS(sample_k_shot_triples({}, 4, 1), value_error);

    // one example per class over 4 classes
    std::vector<SequenceExample> corpus;
    for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < 7; ++i) {
            SequenceExample ex;
            ex.tokens = {"tok"};
            ex.relation = "class" + std::to_string(c);
            corpus.push_back(ex);
        }
    }
    CHECK(sample_k_shot_sequences(corpus, 1, 3, SequenceTask::re).size() == 4);
}

TEST_SUITE_END();
